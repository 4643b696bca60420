"""Layer kinds, forward evaluation and reverse-mode gradients.

Every kind implements:
    infer_shape(kind, in_shapes)             shape propagation (no data)
    forward_op(kind, weights, inputs, ...)   -> (output, ctx)
    backward_op(kind, weights, ctx, gy)      -> (grads wrt inputs, grads wrt weights)

Shapes carry an explicit batch axis: feature maps are (B, C, H, W), flat
features are (B, F).  Weight dicts use the names that also fix the
serialization order: weight, bias, gamma, beta, running_mean, running_var.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ShapeError

# ------------------------------------------------------------------ kinds


@dataclass(frozen=True)
class Conv2d:
    out_channels: int
    in_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0
    bias: bool = True


@dataclass(frozen=True)
class Linear:
    out_features: int
    in_features: int
    bias: bool = True


@dataclass(frozen=True)
class BatchNorm:
    channels: int
    eps: float = 1e-5
    momentum: float = 0.1


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Sigmoid:
    pass


@dataclass(frozen=True)
class HardSwish:
    pass


@dataclass(frozen=True)
class MaxPool:
    kernel: int
    stride: int


@dataclass(frozen=True)
class AvgPool:
    kernel: int
    stride: int


@dataclass(frozen=True)
class GlobalAvgPool:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Add:
    pass


@dataclass(frozen=True)
class Mul:
    pass


@dataclass(frozen=True)
class Concat:
    axis: int = 1  # channel axis only


@dataclass(frozen=True)
class Softmax:
    pass


LayerKind = (Conv2d | Linear | BatchNorm | ReLU | Sigmoid | HardSwish | MaxPool
             | AvgPool | GlobalAvgPool | Flatten | Add | Mul | Concat | Softmax)

PRUNABLE_KINDS = (Conv2d, Linear)
PASSTHROUGH_KINDS = (BatchNorm, ReLU, Sigmoid, HardSwish, MaxPool, AvgPool,
                     GlobalAvgPool, Softmax)


def kind_name(kind) -> str:
    return type(kind).__name__.lower()


# --------------------------------------------------------------- weights


def init_weights(kind, rng: np.random.Generator) -> dict:
    """He-style init for conv/linear, identity affine for batchnorm."""
    if isinstance(kind, Conv2d):
        fan_in = kind.in_channels * kind.kernel * kind.kernel
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in),
                       (kind.out_channels, kind.in_channels, kind.kernel, kind.kernel))
        out = {"weight": w.astype(np.float32)}
        if kind.bias:
            out["bias"] = np.zeros(kind.out_channels, dtype=np.float32)
        return out
    if isinstance(kind, Linear):
        w = rng.normal(0.0, np.sqrt(2.0 / kind.in_features),
                       (kind.out_features, kind.in_features))
        out = {"weight": w.astype(np.float32)}
        if kind.bias:
            out["bias"] = np.zeros(kind.out_features, dtype=np.float32)
        return out
    if isinstance(kind, BatchNorm):
        c = kind.channels
        return {
            "gamma": np.ones(c, dtype=np.float32),
            "beta": np.zeros(c, dtype=np.float32),
            "running_mean": np.zeros(c, dtype=np.float32),
            "running_var": np.ones(c, dtype=np.float32),
        }
    return {}


LEARNED_WEIGHT_NAMES = ("weight", "bias", "gamma", "beta")
WEIGHT_FIELD_ORDER = ("weight", "bias", "gamma", "beta", "running_mean", "running_var")


# ---------------------------------------------------------- shape inference


def _pool_out(h, k, s):
    return (h - k) // s + 1


def infer_shape(kind, in_shapes, where="?"):
    """Output shape from input shapes; raises ShapeError on mismatch."""
    def fail(msg):
        raise ShapeError(f"{where}: {msg} (inputs {in_shapes})")

    if isinstance(kind, Conv2d):
        (s,) = in_shapes
        if len(s) != 4 or s[1] != kind.in_channels:
            fail(f"conv2d expects (B,{kind.in_channels},H,W)")
        ho = (s[2] + 2 * kind.padding - kind.kernel) // kind.stride + 1
        wo = (s[3] + 2 * kind.padding - kind.kernel) // kind.stride + 1
        if ho < 1 or wo < 1:
            fail("conv2d output collapses to zero size")
        return (s[0], kind.out_channels, ho, wo)
    if isinstance(kind, Linear):
        (s,) = in_shapes
        if len(s) != 2 or s[1] != kind.in_features:
            fail(f"linear expects (B,{kind.in_features})")
        return (s[0], kind.out_features)
    if isinstance(kind, BatchNorm):
        (s,) = in_shapes
        if len(s) != 4 or s[1] != kind.channels:
            fail(f"batchnorm expects (B,{kind.channels},H,W)")
        return s
    if isinstance(kind, (ReLU, Sigmoid, HardSwish)):
        (s,) = in_shapes
        return s
    if isinstance(kind, (MaxPool, AvgPool)):
        (s,) = in_shapes
        if len(s) != 4 or s[2] < kind.kernel or s[3] < kind.kernel:
            fail("pool window larger than input")
        return (s[0], s[1], _pool_out(s[2], kind.kernel, kind.stride),
                _pool_out(s[3], kind.kernel, kind.stride))
    if isinstance(kind, GlobalAvgPool):
        (s,) = in_shapes
        if len(s) != 4:
            fail("global pool expects rank-4 input")
        return (s[0], s[1], 1, 1)
    if isinstance(kind, Flatten):
        (s,) = in_shapes
        n = 1
        for d in s[1:]:
            n *= d
        return (s[0], n)
    if isinstance(kind, Add):
        a, b = in_shapes
        if a != b:
            fail("add requires identical shapes")
        return a
    if isinstance(kind, Mul):
        a, b = in_shapes
        # spatial broadcast (B,C,1,1) is allowed for channel attention
        if a == b:
            return a
        if (len(a) == 4 and len(b) == 4 and a[0] == b[0] and a[1] == b[1]
                and (b[2] == b[3] == 1 or a[2] == a[3] == 1)):
            return a if b[2] == 1 else b
        fail("mul requires identical shapes or a (B,C,1,1) operand")
    if isinstance(kind, Concat):
        if kind.axis != 1:
            fail("concat supports the channel axis only")
        first = in_shapes[0]
        for s in in_shapes[1:]:
            if len(s) != len(first) or s[0] != first[0] or s[2:] != first[2:]:
                fail("concat requires identical non-channel dims")
        c = sum(s[1] for s in in_shapes)
        return (first[0], c) + tuple(first[2:])
    if isinstance(kind, Softmax):
        (s,) = in_shapes
        return s
    fail(f"unknown layer kind {kind!r}")


# ------------------------------------------------------------------ forward


def forward_op(kind, weights, inputs, mode="eval", update_stats=False, where="?"):
    """Evaluate one layer.  Returns (output array, ctx for backward_op).

    `mode` matters for BatchNorm only: "train" uses batch statistics,
    "eval" the running averages.  Running stats are mutated in place only
    when update_stats is true.
    """
    infer_shape(kind, [tuple(x.shape) for x in inputs], where=where)

    if isinstance(kind, Conv2d):
        x = inputs[0]
        y = kernels.conv2d_forward(x, weights["weight"], kind.stride, kind.padding)
        if kind.bias:
            y = y + weights["bias"][None, :, None, None]
        return y, {"x": x}
    if isinstance(kind, Linear):
        x = inputs[0]
        y = x.astype(np.float64) @ weights["weight"].T.astype(np.float64)
        y = y.astype(np.float32)
        if kind.bias:
            y = y + weights["bias"][None, :]
        return y, {"x": x}
    if isinstance(kind, BatchNorm):
        x = inputs[0]
        if mode == "train":
            mu = x.mean(axis=(0, 2, 3), dtype=np.float64)
            var = x.astype(np.float64).var(axis=(0, 2, 3))
            if update_stats:
                n = x.shape[0] * x.shape[2] * x.shape[3]
                unbiased = var * n / max(n - 1, 1)
                m = kind.momentum
                weights["running_mean"][:] = ((1 - m) * weights["running_mean"]
                                              + m * mu).astype(np.float32)
                weights["running_var"][:] = ((1 - m) * weights["running_var"]
                                             + m * unbiased).astype(np.float32)
        else:
            mu = weights["running_mean"].astype(np.float64)
            var = weights["running_var"].astype(np.float64)
        inv_std = (1.0 / np.sqrt(var + kind.eps)).astype(np.float32)
        xhat = (x - mu.astype(np.float32)[None, :, None, None]) * inv_std[None, :, None, None]
        y = weights["gamma"][None, :, None, None] * xhat + weights["beta"][None, :, None, None]
        return y, {"xhat": xhat, "inv_std": inv_std, "train": mode == "train"}
    if isinstance(kind, ReLU):
        x = inputs[0]
        return np.maximum(x, 0), {"mask": x > 0}
    if isinstance(kind, Sigmoid):
        s = 1.0 / (1.0 + np.exp(-inputs[0].astype(np.float64)))
        s = s.astype(np.float32)
        return s, {"s": s}
    if isinstance(kind, HardSwish):
        x = inputs[0]
        inner = np.clip(x + 3.0, 0.0, 6.0)
        return (x * inner / 6.0).astype(np.float32), {"x": x}
    if isinstance(kind, MaxPool):
        x = inputs[0]
        y, idx = kernels.maxpool_forward(x, kind.kernel, kind.stride)
        return y, {"x": x, "idx": idx}
    if isinstance(kind, AvgPool):
        x = inputs[0]
        view = kernels._pool_view(x, kind.kernel, kind.stride)
        y = view.mean(axis=(4, 5), dtype=np.float64).astype(np.float32)
        return np.ascontiguousarray(y), {"xshape": x.shape}
    if isinstance(kind, GlobalAvgPool):
        x = inputs[0]
        y = x.mean(axis=(2, 3), keepdims=True, dtype=np.float64).astype(np.float32)
        return y, {"xshape": x.shape}
    if isinstance(kind, Flatten):
        x = inputs[0]
        return np.ascontiguousarray(x.reshape(x.shape[0], -1)), {"xshape": x.shape}
    if isinstance(kind, Add):
        return inputs[0] + inputs[1], {}
    if isinstance(kind, Mul):
        a, b = inputs
        return a * b, {"a": a, "b": b}
    if isinstance(kind, Concat):
        return np.concatenate(inputs, axis=1), {"splits": [x.shape[1] for x in inputs]}
    if isinstance(kind, Softmax):
        x = inputs[0].astype(np.float64)
        x = x - x.max(axis=1, keepdims=True)
        e = np.exp(x)
        p = (e / e.sum(axis=1, keepdims=True)).astype(np.float32)
        return p, {"p": p}
    raise ShapeError(f"{where}: unknown layer kind {kind!r}")


# ----------------------------------------------------------------- backward


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    return g.sum(axis=axes, keepdims=True, dtype=np.float64).astype(np.float32)


def backward_op(kind, weights, ctx, gy):
    """Returns ([grad per input], {weight name: grad})."""
    if isinstance(kind, Conv2d):
        gx, gw, gb = kernels.conv2d_backward(ctx["x"], weights["weight"], gy,
                                             kind.stride, kind.padding)
        gws = {"weight": gw}
        if kind.bias:
            gws["bias"] = gb
        return [gx], gws
    if isinstance(kind, Linear):
        x = ctx["x"]
        gx = (gy.astype(np.float64) @ weights["weight"].astype(np.float64)).astype(np.float32)
        gw = (gy.T.astype(np.float64) @ x.astype(np.float64)).astype(np.float32)
        gws = {"weight": gw}
        if kind.bias:
            gws["bias"] = gy.sum(axis=0, dtype=np.float64).astype(np.float32)
        return [gx], gws
    if isinstance(kind, BatchNorm):
        xhat, inv_std = ctx["xhat"], ctx["inv_std"]
        gamma = weights["gamma"]
        gbeta = gy.sum(axis=(0, 2, 3), dtype=np.float64).astype(np.float32)
        ggamma = (gy.astype(np.float64) * xhat).sum(axis=(0, 2, 3)).astype(np.float32)
        gxhat = gy * gamma[None, :, None, None]
        if ctx["train"]:
            n = gy.shape[0] * gy.shape[2] * gy.shape[3]
            s1 = gxhat.sum(axis=(0, 2, 3), keepdims=True, dtype=np.float64)
            s2 = (gxhat.astype(np.float64) * xhat).sum(axis=(0, 2, 3), keepdims=True)
            gx = (inv_std[None, :, None, None] / n) * (n * gxhat - s1 - xhat * s2)
            gx = gx.astype(np.float32)
        else:
            gx = gxhat * inv_std[None, :, None, None]
        return [gx], {"gamma": ggamma, "beta": gbeta}
    if isinstance(kind, ReLU):
        return [gy * ctx["mask"]], {}
    if isinstance(kind, Sigmoid):
        s = ctx["s"]
        return [gy * s * (1.0 - s)], {}
    if isinstance(kind, HardSwish):
        x = ctx["x"]
        d = np.where(x <= -3.0, 0.0, np.where(x >= 3.0, 1.0, (2.0 * x + 3.0) / 6.0))
        return [gy * d.astype(np.float32)], {}
    if isinstance(kind, MaxPool):
        return [kernels.maxpool_backward(ctx["x"], gy, ctx["idx"], kind.kernel, kind.stride)], {}
    if isinstance(kind, AvgPool):
        b, c, h, w = ctx["xshape"]
        k, s = kind.kernel, kind.stride
        ho, wo = gy.shape[2], gy.shape[3]
        gx = np.zeros((b, c, h, w), dtype=np.float32)
        share = gy / (k * k)
        for kh in range(k):
            for kw in range(k):
                gx[:, :, kh:kh + s * ho:s, kw:kw + s * wo:s] += share
        return [gx], {}
    if isinstance(kind, GlobalAvgPool):
        b, c, h, w = ctx["xshape"]
        gx = np.broadcast_to(gy / (h * w), (b, c, h, w)).astype(np.float32)
        return [np.ascontiguousarray(gx)], {}
    if isinstance(kind, Flatten):
        return [gy.reshape(ctx["xshape"])], {}
    if isinstance(kind, Add):
        return [gy, gy], {}
    if isinstance(kind, Mul):
        a, b = ctx["a"], ctx["b"]
        return [_unbroadcast(gy * b, a.shape), _unbroadcast(gy * a, b.shape)], {}
    if isinstance(kind, Concat):
        outs = []
        start = 0
        for c in ctx["splits"]:
            outs.append(np.ascontiguousarray(gy[:, start:start + c]))
            start += c
        return outs, {}
    if isinstance(kind, Softmax):
        p = ctx["p"]
        dot = (gy.astype(np.float64) * p).sum(axis=1, keepdims=True)
        return [(p * (gy - dot)).astype(np.float32)], {}
    raise ShapeError(f"backward: unknown layer kind {kind!r}")
