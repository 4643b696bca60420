"""Classification losses, each returning (scalar loss, grad wrt logits)."""

import numpy as np

from .errors import ConfigError, ShapeError


def _log_softmax(logits):
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy(logits, labels):
    """Mean negative log-likelihood over the batch.

    logits: (B, C) float32, labels: int array (B,).  Returns (loss, dlogits).
    """
    labels = np.asarray(labels)
    b, c = logits.shape
    if labels.shape != (b,):
        raise ShapeError(f"labels shape {labels.shape} != ({b},)")
    if labels.min() < 0 or labels.max() >= c:
        raise ConfigError(f"label out of range [0, {c})")
    logp = _log_softmax(logits)
    loss = -logp[np.arange(b), labels].mean()
    p = np.exp(logp)
    p[np.arange(b), labels] -= 1.0
    return float(loss), (p / b).astype(np.float32)


def kd_loss(student_logits, teacher_logits, labels, tau):
    """Distillation loss: tau * KL(teacher || student) + (1-tau) * CE.

    The teacher term is a constant w.r.t. the student; the returned gradient
    is w.r.t. the student logits only.
    """
    if student_logits.shape != teacher_logits.shape:
        raise ShapeError(f"student {student_logits.shape} vs teacher "
                         f"{teacher_logits.shape} logits")
    if not 0.0 <= tau <= 1.0:
        raise ConfigError(f"tau must be in [0,1], got {tau}")
    ce, dce = cross_entropy(student_logits, labels)
    logp_s = _log_softmax(student_logits)
    logp_t = _log_softmax(teacher_logits)
    p_t = np.exp(logp_t)
    b = student_logits.shape[0]
    kl = float((p_t * (logp_t - logp_s)).sum(axis=1).mean())
    p_s = np.exp(logp_s)
    dkl = ((p_s - p_t) / b).astype(np.float32)
    loss = tau * kl + (1.0 - tau) * ce
    dlogits = (tau * dkl + (1.0 - tau) * dce).astype(np.float32)
    return float(loss), dlogits
