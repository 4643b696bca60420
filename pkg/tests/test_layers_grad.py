"""Finite-difference gradient checks for every layer kind, 5 seeds each."""

import numpy as np
import pytest

from rlprune import layers

SEEDS = [0, 1, 2, 3, 4]
EPS = 5e-2  # large probe keeps float32 cancellation noise below tolerance
REL_TOL = 1e-3


def relerr(fd, an):
    return abs(fd - an) / max(abs(fd), abs(an), 1e-2)


def check_gradients(kind, in_shapes, seed, mode="eval", n_probes=5):
    """Scalar loss sum(out * gy); probe random input and weight coordinates."""
    rng = np.random.default_rng(seed)
    inputs = [rng.uniform(-1, 1, s).astype(np.float32) for s in in_shapes]
    weights = layers.init_weights(kind, rng)
    out, ctx = layers.forward_op(kind, weights, inputs, mode=mode)
    gy = rng.uniform(-1, 1, out.shape).astype(np.float32)
    gxs, gws = layers.backward_op(kind, weights, ctx, gy)

    def loss(ins, wts):
        y, _ = layers.forward_op(kind, wts, ins, mode=mode)
        return float(np.sum(y.astype(np.float64) * gy))

    for k, x in enumerate(inputs):
        for _ in range(n_probes):
            i = tuple(rng.integers(0, s) for s in x.shape)
            xs = [a.copy() for a in inputs]
            xs[k][i] += EPS
            lp = loss(xs, weights)
            xs[k][i] -= 2 * EPS
            lm = loss(xs, weights)
            fd = (lp - lm) / (2 * EPS)
            assert relerr(fd, gxs[k][i]) <= REL_TOL, \
                f"{layers.kind_name(kind)} input {k} at {i}: fd {fd} vs {gxs[k][i]}"
    for name in layers.LEARNED_WEIGHT_NAMES:
        if name not in weights or weights[name] is None:
            continue
        w = weights[name]
        for _ in range(n_probes):
            i = tuple(rng.integers(0, s) for s in w.shape)
            wts = {k2: (v.copy() if hasattr(v, "copy") else v)
                   for k2, v in weights.items()}
            wts[name][i] += EPS
            lp = loss(inputs, wts)
            wts[name][i] -= 2 * EPS
            lm = loss(inputs, wts)
            fd = (lp - lm) / (2 * EPS)
            assert relerr(fd, gws[name][i]) <= REL_TOL, \
                f"{layers.kind_name(kind)} weight {name} at {i}"


X4 = (2, 3, 6, 6)

KIND_CASES = [
    (layers.Conv2d(4, 3, 3, 1, 1), [X4], "eval"),
    (layers.Conv2d(2, 3, 3, 2, 0, bias=False), [X4], "eval"),
    (layers.Linear(5, 12), [(2, 12)], "eval"),
    (layers.Linear(3, 12, bias=False), [(2, 12)], "eval"),
    (layers.BatchNorm(3), [X4], "eval"),
    (layers.BatchNorm(3), [X4], "train"),
    (layers.ReLU(), [X4], "eval"),
    (layers.Sigmoid(), [X4], "eval"),
    (layers.HardSwish(), [X4], "eval"),
    (layers.MaxPool(2, 2), [X4], "eval"),
    (layers.AvgPool(2, 2), [X4], "eval"),
    (layers.GlobalAvgPool(), [X4], "eval"),
    (layers.Flatten(), [X4], "eval"),
    (layers.Add(), [X4, X4], "eval"),
    (layers.Mul(), [X4, X4], "eval"),
    (layers.Mul(), [X4, (2, 3, 1, 1)], "eval"),  # SE-style gate broadcast
    (layers.Concat(), [X4, (2, 2, 6, 6)], "eval"),
    (layers.Softmax(), [(2, 7)], "eval"),
]


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize(
    "kind,shapes,mode", KIND_CASES,
    ids=[f"{layers.kind_name(k)}-{m}-{j}" for j, (k, s, m) in enumerate(KIND_CASES)])
def test_finite_difference(kind, shapes, mode, seed):
    if isinstance(kind, (layers.ReLU, layers.MaxPool)):
        # avoid probing near the kink: shift inputs away from 0 / ties
        rng = np.random.default_rng(seed)

        def spaced(s):
            # distinct values with pairwise gap > 2*EPS and |x| > EPS, so a
            # probe never crosses the ReLU kink or flips a pooling argmax
            n = int(np.prod(s))
            vals = (0.07 + 0.13 * rng.permutation(n)) * \
                np.where(rng.random(n) < 0.5, -1.0, 1.0)
            return vals.reshape(s).astype(np.float32)

        inputs = [spaced(s) for s in shapes]

        def run():
            out, ctx = layers.forward_op(kind, {}, inputs, mode=mode)
            gy = rng.uniform(-1, 1, out.shape).astype(np.float32)
            gxs, _ = layers.backward_op(kind, {}, ctx, gy)
            for k, x in enumerate(inputs):
                for _ in range(5):
                    i = tuple(rng.integers(0, s) for s in x.shape)
                    xs = [a.copy() for a in inputs]
                    xs[k][i] += EPS
                    lp = float(np.sum(layers.forward_op(kind, {}, xs, mode=mode)[0]
                                      .astype(np.float64) * gy))
                    xs[k][i] -= 2 * EPS
                    lm = float(np.sum(layers.forward_op(kind, {}, xs, mode=mode)[0]
                                      .astype(np.float64) * gy))
                    fd = (lp - lm) / (2 * EPS)
                    assert relerr(fd, gxs[k][i]) <= REL_TOL
        run()
    else:
        check_gradients(kind, shapes, seed, mode=mode)
