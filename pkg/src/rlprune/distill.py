"""Knowledge-distillation post-training and the plain baseline trainer.

Both run the same loop; the baseline is the tau=0 / no-teacher case, so a
tau=0 distillation run is bit-identical to plain fine-tuning at equal seed.
"""

from dataclasses import dataclass

import numpy as np

from .config import DistillConfig
from .errors import NumericError
from .graph import ModelGraph, backward, deep_clone, run_forward
from .losses import cross_entropy, kd_loss
from .optim import SGD


@dataclass
class TeacherState:
    teacher: ModelGraph
    watermark: float  # best reward-split accuracy seen so far


def update_teacher(state: TeacherState, candidate: ModelGraph,
                   candidate_acc: float) -> TeacherState:
    """Switch teacher when a strictly better compressed model appears."""
    if candidate_acc > state.watermark:
        state.teacher = deep_clone(candidate)
        state.watermark = candidate_acc
    return state


def _train_loop(model, images, labels, epochs, lr, momentum, batch_size, seed,
                teacher=None, tau=0.0, lr_decay_epochs=(), lr_decay=0.1,
                augment_flip=False, log=None):
    """Shared SGD loop; returns per-epoch mean losses.

    On divergence (non-finite loss) the caller gets NumericError; epoch
    snapshots are not kept here.
    """
    rng = np.random.default_rng(seed)
    opt = SGD(lr, momentum)
    n = len(images)
    losses = []
    use_teacher = teacher is not None and tau > 0.0
    for epoch in range(epochs):
        if epoch in lr_decay_epochs:
            opt.lr *= lr_decay
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            x, y = images[idx], labels[idx]
            if augment_flip:
                flip = rng.random(len(idx)) < 0.5
                x = x.copy()
                x[flip] = x[flip, :, :, ::-1]
            logits, _, tape = run_forward(model, x, mode="train", want_tape=True)
            if use_teacher:
                t_logits, _ = run_forward(teacher, x, mode="eval")
                loss, dlogits = kd_loss(logits, t_logits, y, tau)
            else:
                loss, dlogits = cross_entropy(logits, y)
            if not np.isfinite(loss):
                raise NumericError(f"training diverged at epoch {epoch}")
            grads = backward(model, tape, dlogits)
            opt.step(model, grads)
            total += loss * len(idx)
        losses.append(total / n)
        if log:
            log(f"epoch {epoch}: loss {losses[-1]:.4f}")
    return losses


def post_train(student: ModelGraph, teacher: ModelGraph, images, labels,
               config: DistillConfig, seed=0, log=None) -> ModelGraph:
    """Distill from the (frozen) teacher for the configured epoch budget.

    Divergence aborts and returns the pre-training student unchanged.
    """
    if config.epochs == 0:
        return student
    snapshot = deep_clone(student)
    try:
        _train_loop(student, images, labels, config.epochs, config.lr,
                    config.momentum, config.batch_size, seed,
                    teacher=teacher, tau=config.tau, log=log)
    except NumericError:
        if log:
            log("post-training diverged; keeping the pre-training weights")
        return snapshot
    return student


def train_baseline(model: ModelGraph, images, labels, epochs, lr=0.05,
                   momentum=0.9, batch_size=32, seed=0, lr_decay_epochs=(),
                   lr_decay=0.1, augment_flip=False, log=None):
    """Plain cross-entropy SGD training; returns per-epoch mean losses."""
    return _train_loop(model, images, labels, epochs, lr, momentum, batch_size,
                       seed, lr_decay_epochs=lr_decay_epochs, lr_decay=lr_decay,
                       augment_flip=augment_flip, log=log)
