"""Distillation loss oracle, tau=0 equivalence and teacher switching."""

import numpy as np
import pytest

from conftest import make_mini
from rlprune import distill
from rlprune.config import DistillConfig
from rlprune.graph import deep_clone, model_hash
from rlprune.losses import cross_entropy, kd_loss


def softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def reference_kd(student, teacher, labels, tau):
    """Independent value: tau * KL(teacher || student) + (1 - tau) * CE."""
    ps = softmax(student.astype(np.float64))
    pt = softmax(teacher.astype(np.float64))
    kl = np.sum(pt * (np.log(pt) - np.log(ps)), axis=1).mean()
    ce = -np.log(ps[np.arange(len(labels)), labels]).mean()
    return tau * kl + (1 - tau) * ce


@pytest.mark.parametrize("tau", [0.0, 0.5, 0.75, 1.0])
def test_kd_loss_value_matches_reference(tau):
    rng = np.random.default_rng(3)
    s = rng.standard_normal((6, 5)).astype(np.float32)
    t = rng.standard_normal((6, 5)).astype(np.float32)
    y = rng.integers(0, 5, 6)
    loss, _ = kd_loss(s, t, y, tau)
    assert loss == pytest.approx(reference_kd(s, t, y, tau), rel=1e-5)


@pytest.mark.parametrize("tau", [0.0, 0.5, 1.0])
def test_kd_loss_gradient_finite_difference(tau):
    rng = np.random.default_rng(4)
    s = rng.standard_normal((4, 6)).astype(np.float64)
    t = rng.standard_normal((4, 6)).astype(np.float64)
    y = rng.integers(0, 6, 4)
    _, grad = kd_loss(s.astype(np.float32), t.astype(np.float32), y, tau)
    eps = 1e-3
    for _ in range(10):
        i = (int(rng.integers(0, 4)), int(rng.integers(0, 6)))
        sp, sm = s.copy(), s.copy()
        sp[i] += eps
        sm[i] -= eps
        fd = (reference_kd(sp, t, y, tau) - reference_kd(sm, t, y, tau)) / (2 * eps)
        assert abs(fd - grad[i]) <= 1e-3 * max(abs(fd), abs(grad[i]), 1e-3)


def test_kd_tau_zero_equals_cross_entropy():
    rng = np.random.default_rng(5)
    s = rng.standard_normal((8, 10)).astype(np.float32)
    t = rng.standard_normal((8, 10)).astype(np.float32)
    y = rng.integers(0, 10, 8)
    l0, g0 = kd_loss(s, t, y, 0.0)
    lc, gc = cross_entropy(s, y)
    assert l0 == pytest.approx(lc, rel=1e-7)
    np.testing.assert_allclose(g0, gc, rtol=1e-6, atol=1e-8)


def test_tau_zero_post_training_matches_plain_training(tiny_dataset):
    ds = tiny_dataset
    x, y = ds.train_x[:64], ds.train_y[:64]
    cfg = DistillConfig(tau=0.0, epochs=2, lr=0.01, batch_size=16)

    a = make_mini("se-mini", seed=2)
    teacher = deep_clone(a)
    distill.post_train(a, teacher, x, y, cfg, seed=9)

    b = make_mini("se-mini", seed=2)
    distill.train_baseline(b, x, y, cfg.epochs, lr=cfg.lr,
                           momentum=cfg.momentum, batch_size=cfg.batch_size,
                           seed=9)
    assert model_hash(a) == model_hash(b)


def test_distillation_with_teacher_changes_the_result(tiny_dataset):
    ds = tiny_dataset
    x, y = ds.train_x[:64], ds.train_y[:64]
    cfg = DistillConfig(tau=0.75, epochs=1, lr=0.01, batch_size=16)
    a = make_mini("se-mini", seed=2)
    teacher = make_mini("se-mini", seed=7)
    distill.post_train(a, teacher, x, y, cfg, seed=9)
    b = make_mini("se-mini", seed=2)
    distill.train_baseline(b, x, y, 1, lr=cfg.lr, batch_size=16, seed=9)
    assert model_hash(a) != model_hash(b)


def test_training_loss_decreases(tiny_dataset):
    ds = tiny_dataset
    m = make_mini("vgg-mini", seed=0)
    losses = distill.train_baseline(m, ds.train_x, ds.train_y, 3,
                                    lr=0.05, batch_size=32, seed=0)
    assert losses[-1] < losses[0]


def test_teacher_switches_only_on_strict_improvement():
    base = make_mini("se-mini", seed=0)
    state = distill.TeacherState(base, 0.5)
    better = make_mini("se-mini", seed=1)
    distill.update_teacher(state, better, 0.6)
    assert model_hash(state.teacher) == model_hash(better)
    assert state.watermark == 0.6
    other = make_mini("se-mini", seed=2)
    distill.update_teacher(state, other, 0.6)  # tie: keep current teacher
    assert model_hash(state.teacher) == model_hash(better)


def test_post_train_restores_snapshot_on_divergence(tiny_dataset):
    ds = tiny_dataset
    m = make_mini("se-mini", seed=3)
    before = model_hash(m)
    cfg = DistillConfig(tau=0.0, epochs=3, lr=1e6, batch_size=16)
    teacher = deep_clone(m)
    out = distill.post_train(m, teacher, ds.train_x[:64], ds.train_y[:64],
                             cfg, seed=0)
    assert model_hash(out) == before
