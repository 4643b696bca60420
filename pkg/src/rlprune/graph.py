"""Model DAG: nodes, validation, execution with trace/tape, cost accounting."""

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, StateError, ValidationError
from .layers import (Conv2d, Linear, BatchNorm, PRUNABLE_KINDS, backward_op,
                     forward_op, infer_shape, kind_name)
from .tensor import check_finite

INPUT_ID = -1  # sentinel: the model input feeds this edge


@dataclass
class LayerNode:
    id: int
    kind: object
    inputs: list  # producer node ids, INPUT_ID for the model input
    weights: dict = field(default_factory=dict)

    def label(self) -> str:
        return f"#{self.id}:{kind_name(self.kind)}"


@dataclass
class ModelGraph:
    nodes: list
    input_shape: tuple  # (C, H, W)
    class_count: int
    name: str = "model"
    version: str = "1"
    output_id: int = -1  # -1 means the last node

    def __post_init__(self):
        if self.output_id == -1 and self.nodes:
            self.output_id = self.nodes[-1].id

    def node(self, nid) -> LayerNode:
        return self._index()[nid]

    def _index(self):
        return {n.id: n for n in self.nodes}

    def prunable_ids(self):
        return [n.id for n in self.nodes if isinstance(n.kind, PRUNABLE_KINDS)]


@dataclass
class TraceEntry:
    node_id: int
    input_tensor_ids: list
    output_tensor_id: int
    output_value: np.ndarray


@dataclass
class Trace:
    entries: list

    def by_node(self):
        return {e.node_id: e for e in self.entries}


@dataclass
class ValidationReport:
    ok: bool
    errors: list
    shapes: dict  # node id -> output shape (batch dim = 1)
    conv_count: int
    linear_count: int
    prunable_ids: list


def validate_graph(model: ModelGraph) -> ValidationReport:
    """Checks acyclicity/ordering, propagates shapes, counts prunable layers."""
    errors = []
    shapes = {}
    if not model.nodes:
        return ValidationReport(False, ["no output node (empty graph)"], {}, 0, 0, [])
    seen = set()
    in_shape = (1,) + tuple(model.input_shape)
    for node in model.nodes:
        if node.id in seen:
            errors.append(f"{node.label()}: duplicate node id")
            continue
        for src in node.inputs:
            if src != INPUT_ID and src not in seen:
                errors.append(f"{node.label()}: input {src} not an earlier node "
                              "(cycle or forward reference)")
        seen.add(node.id)
        try:
            in_shapes = [in_shape if s == INPUT_ID else shapes[s] for s in node.inputs]
        except KeyError:
            continue
        try:
            shapes[node.id] = infer_shape(node.kind, in_shapes, where=node.label())
        except ShapeError as e:
            errors.append(str(e))
            break
    if model.output_id not in {n.id for n in model.nodes}:
        errors.append(f"output node {model.output_id} missing")
    elif not errors:
        out = shapes.get(model.output_id)
        if out is None or out[-1] != model.class_count or len(out) != 2:
            errors.append(f"output shape {out} != (B, {model.class_count})")
    conv = sum(isinstance(n.kind, Conv2d) for n in model.nodes)
    lin = sum(isinstance(n.kind, Linear) for n in model.nodes)
    return ValidationReport(not errors, errors, shapes, conv, lin, model.prunable_ids())


def run_forward(model: ModelGraph, batch: np.ndarray, mode: str = "eval",
                want_tape: bool = False, update_stats: bool | None = None):
    """Execute the DAG on a batch.  Returns (logits, Trace[, tape]).

    The trace records per node the input tensor ids, output tensor id and
    output value.  The tape (when requested) additionally keeps the
    backward contexts needed by `backward`.
    """
    batch = np.ascontiguousarray(batch, dtype=np.float32)
    if tuple(batch.shape[1:]) != tuple(model.input_shape):
        raise ShapeError(f"batch shape {batch.shape[1:]} != model input "
                         f"{tuple(model.input_shape)}")
    if update_stats is None:
        update_stats = mode == "train"
    values = {INPUT_ID: batch}
    tensor_ids = {INPUT_ID: 0}
    entries = []
    ctxs = {}
    next_tid = 1
    for node in model.nodes:
        inputs = [values[s] for s in node.inputs]
        out, ctx = forward_op(node.kind, node.weights, inputs, mode=mode,
                              update_stats=update_stats, where=node.label())
        check_finite(out, node.label())
        values[node.id] = out
        tid = next_tid
        next_tid += 1
        tensor_ids[node.id] = tid
        entries.append(TraceEntry(node.id, [tensor_ids[s] for s in node.inputs], tid, out))
        if want_tape:
            ctxs[node.id] = ctx
    logits = values[model.output_id]
    trace = Trace(entries)
    if want_tape:
        return logits, trace, {"ctxs": ctxs, "mode": mode}
    return logits, trace


def backward(model: ModelGraph, tape, dlogits: np.ndarray):
    """Reverse sweep from the output node.

    Returns {node id: {weight name: grad}} for every parametric node; nodes
    the loss does not reach get zero gradients.
    """
    if tape is None or "ctxs" not in tape:
        raise StateError("backward called before a taped forward pass")
    ctxs = tape["ctxs"]
    gouts = {model.output_id: dlogits.astype(np.float32)}
    grads = {}
    for node in reversed(model.nodes):
        gy = gouts.pop(node.id, None)
        if gy is None:
            continue
        gxs, gws = backward_op(node.kind, node.weights, ctxs[node.id], gy)
        if gws:
            acc = grads.setdefault(node.id, {})
            for name, g in gws.items():
                acc[name] = acc[name] + g if name in acc else g
        for src, gx in zip(node.inputs, gxs):
            if src == INPUT_ID:
                continue
            gouts[src] = gouts[src] + gx if src in gouts else gx
    # zero-fill parametric nodes the loss never reached
    from .layers import LEARNED_WEIGHT_NAMES
    for node in model.nodes:
        if node.id in grads or not node.weights:
            continue
        grads[node.id] = {name: np.zeros_like(w) for name, w in node.weights.items()
                          if name in LEARNED_WEIGHT_NAMES}
    return grads


# ------------------------------------------------------------- accounting


def count_flops(model: ModelGraph):
    """Per-layer and total FLOPs at batch 1, one multiply-accumulate = 1 FLOP.

    Conv2d: N_out*N_in*K^2*H_out*W_out; Linear: N_out*N_in; everything else 0.
    """
    report = validate_graph(model)
    if not report.ok:
        raise ValidationError("; ".join(report.errors))
    per_layer = {}
    for node in model.nodes:
        k = node.kind
        if isinstance(k, Conv2d):
            _, _, ho, wo = report.shapes[node.id]
            per_layer[node.id] = k.out_channels * k.in_channels * k.kernel ** 2 * ho * wo
        elif isinstance(k, Linear):
            per_layer[node.id] = k.out_features * k.in_features
        else:
            per_layer[node.id] = 0
    return per_layer, sum(per_layer.values())


def count_params(model: ModelGraph):
    """Per-layer and total parameter entries (weights, bias, bn state)."""
    per_layer = {n.id: int(sum(w.size for w in n.weights.values())) for n in model.nodes}
    return per_layer, sum(per_layer.values())


def deep_clone(model: ModelGraph) -> ModelGraph:
    """Independent copy: mutating the clone never affects the original."""
    nodes = [LayerNode(n.id, n.kind, list(n.inputs),
                       {k: v.copy() for k, v in n.weights.items()})
             for n in model.nodes]
    return ModelGraph(nodes, tuple(model.input_shape), model.class_count,
                      model.name, model.version, model.output_id)


def total_channels(model: ModelGraph, prunable_only_ids=None):
    """Sum of output channels over the given prunable node ids."""
    ids = set(model.prunable_ids() if prunable_only_ids is None else prunable_only_ids)
    total = 0
    for n in model.nodes:
        if n.id in ids:
            total += out_channels(n.kind)
    return total


def out_channels(kind):
    if isinstance(kind, Conv2d):
        return kind.out_channels
    if isinstance(kind, Linear):
        return kind.out_features
    if isinstance(kind, BatchNorm):
        return kind.channels
    raise ShapeError(f"{kind!r} has no output-channel count")


def named_parameters(model: ModelGraph):
    """(node id, weight name, array) for every learnable entry."""
    from .layers import LEARNED_WEIGHT_NAMES
    for node in model.nodes:
        for name in LEARNED_WEIGHT_NAMES:
            if name in node.weights:
                yield node.id, name, node.weights[name]


def model_hash(model: ModelGraph) -> str:
    import hashlib
    h = hashlib.sha256()
    for node in model.nodes:
        h.update(node.label().encode())
        for name in sorted(node.weights):
            h.update(name.encode())
            h.update(np.ascontiguousarray(node.weights[name]).tobytes())
    return h.hexdigest()
