"""Plain numpy evaluator for the supported ONNX operator subset.

Used as the source side of parity checks, so it deliberately shares no
kernel code with the target engine (windowed einsum here, im2col there).
"""

import numpy as np

from .errors import StructureError
from .onnx_model import OnnxGraph


def _conv(x, w, b, strides, pads):
    sh, sw = strides
    pt, pl, pb, pr = pads
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    k = w.shape[2]
    view = np.lib.stride_tricks.sliding_window_view(xp, (k, w.shape[3]),
                                                    axis=(2, 3))
    view = view[:, :, ::sh, ::sw]
    y = np.einsum("bcijkl,ockl->boij", view.astype(np.float64),
                  w.astype(np.float64))
    if b is not None:
        y += b.reshape(1, -1, 1, 1)
    return y.astype(np.float32)


def _pool_view(x, k, strides):
    view = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    return view[:, :, ::strides[0], ::strides[1]]


def _batchnorm(x, gamma, beta, mean, var, eps):
    inv = 1.0 / np.sqrt(var.astype(np.float64) + eps)
    return ((x.astype(np.float64) - mean.reshape(1, -1, 1, 1))
            * (gamma * inv).reshape(1, -1, 1, 1)
            + beta.reshape(1, -1, 1, 1)).astype(np.float32)


def evaluate(graph: OnnxGraph, batch: np.ndarray) -> np.ndarray:
    """Run the graph on a batch; returns the first graph output."""
    if len(graph.inputs) != 1:
        raise StructureError(f"expected one graph input, got "
                             f"{[n for n, _ in graph.inputs]}")
    values = dict(graph.initializers)
    values[graph.inputs[0][0]] = np.asarray(batch, dtype=np.float32)

    for node in graph.nodes:
        ins = [values[n] for n in node.inputs if n]
        op = node.op_type
        a = node.attrs
        if op == "Conv":
            if a.get("group", 1) != 1:
                raise StructureError("grouped Conv is not supported")
            out = _conv(ins[0], ins[1], ins[2] if len(ins) > 2 else None,
                        a.get("strides", [1, 1]), a.get("pads", [0, 0, 0, 0]))
        elif op == "Gemm":
            x, w = ins[0], ins[1]
            if a.get("transA", 0):
                x = x.T
            if a.get("transB", 0):
                w = w.T
            out = (a.get("alpha", 1.0) * x.astype(np.float64) @
                   w.astype(np.float64))
            if len(ins) > 2:
                out = out + a.get("beta", 1.0) * ins[2].astype(np.float64)
            out = out.astype(np.float32)
        elif op == "BatchNormalization":
            out = _batchnorm(ins[0], ins[1], ins[2], ins[3], ins[4],
                             a.get("epsilon", 1e-5))
        elif op == "Relu":
            out = np.maximum(ins[0], 0.0)
        elif op == "Sigmoid":
            out = (1.0 / (1.0 + np.exp(-ins[0].astype(np.float64)))).astype(np.float32)
        elif op == "HardSwish":
            x = ins[0]
            out = (x * np.clip(x + 3.0, 0.0, 6.0) / 6.0).astype(np.float32)
        elif op == "MaxPool":
            out = _pool_view(ins[0], a["kernel_shape"][0],
                             a.get("strides", a["kernel_shape"])).max(axis=(4, 5))
        elif op == "AveragePool":
            out = _pool_view(ins[0], a["kernel_shape"][0],
                             a.get("strides", a["kernel_shape"])) \
                .astype(np.float64).mean(axis=(4, 5)).astype(np.float32)
        elif op == "GlobalAveragePool":
            out = ins[0].astype(np.float64).mean(axis=(2, 3), keepdims=True) \
                .astype(np.float32)
        elif op == "Flatten":
            out = ins[0].reshape(ins[0].shape[0], -1)
        elif op == "Add":
            out = ins[0] + ins[1]
        elif op == "Mul":
            out = ins[0] * ins[1]
        elif op == "Concat":
            out = np.concatenate(ins, axis=a.get("axis", 1))
        elif op == "Softmax":
            z = ins[0].astype(np.float64)
            e = np.exp(z - z.max(axis=-1, keepdims=True))
            out = (e / e.sum(axis=-1, keepdims=True)).astype(np.float32)
        else:
            raise StructureError(f"reference evaluator: unsupported op {op}")
        for name in node.outputs:
            values[name] = out

    out_name = graph.outputs[0]
    if out_name not in values:
        raise StructureError(f"graph output {out_name!r} was never produced")
    return values[out_name]
