"""ONNX-subset to rlpmodel conversion and parity verification."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from rlprune import INPUT_ID, LayerNode, ModelGraph, run_forward, serialize, validate_graph
from rlprune import layers as rl
from rlprune import load as load_rlpmodel

from . import onnx_model, reference
from .errors import ParityError, StructureError, UnsupportedOpError
from .onnx_model import OnnxGraph

ALLOWED_OPS = frozenset({
    "Conv", "Gemm", "BatchNormalization", "Relu", "Sigmoid", "HardSwish",
    "MaxPool", "AveragePool", "GlobalAveragePool", "Flatten", "Add", "Mul",
    "Concat", "Softmax",
})


@dataclass
class ImportSpec:
    source: Path
    allowlist: frozenset = ALLOWED_OPS
    input_shape: tuple | None = None  # (C, H, W) override


@dataclass
class ParityReport:
    max_deviation: float
    threshold: float
    inputs: int
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = self.max_deviation <= self.threshold


def _square(name, vals, where):
    if len(vals) != 2 or vals[0] != vals[1]:
        raise StructureError(f"{where}: only square {name} supported, got {vals}")
    return int(vals[0])


def _sym_pads(pads, where):
    if len(pads) != 4:
        raise StructureError(f"{where}: expected 4 pad values, got {pads}")
    pt, pl, pb, pr = pads
    if not pt == pl == pb == pr:
        raise StructureError(f"{where}: only symmetric padding supported, got {pads}")
    return int(pt)


def _input_shape(graph: OnnxGraph, spec: ImportSpec):
    if spec.input_shape is not None:
        shape = tuple(int(v) for v in spec.input_shape)
        if len(shape) != 3:
            raise StructureError(f"input shape override must be (C,H,W), got {shape}")
        return shape
    if len(graph.inputs) != 1:
        raise StructureError(f"expected exactly one graph input, got "
                             f"{[n for n, _ in graph.inputs]}")
    name, shape = graph.inputs[0]
    if shape is None or len(shape) != 4:
        raise StructureError(f"input {name!r} has no static NCHW shape; "
                             "pass --input-shape")
    if any(d is None for d in shape[1:]):
        raise StructureError(f"input {name!r} has dynamic C/H/W dimensions; "
                             "pass --input-shape")
    return tuple(int(d) for d in shape[1:])


def convert(graph: OnnxGraph, spec: ImportSpec, name="imported") -> ModelGraph:
    """Map the decoded ONNX graph onto the target engine's node set."""
    offenders = sorted({n.op_type for n in graph.nodes
                        if n.op_type not in spec.allowlist})
    if offenders:
        raise UnsupportedOpError("unsupported ops: " + ", ".join(offenders))
    if graph.dynamic_inputs and spec.input_shape is None:
        raise StructureError(f"dynamic input shapes for {graph.dynamic_inputs}; "
                             "pass --input-shape")
    in_shape = _input_shape(graph, spec)
    input_name = graph.inputs[0][0]
    inits = graph.initializers

    producer = {input_name: INPUT_ID}
    nodes = []

    def data_inputs(node):
        return [v for v in node.inputs if v and v not in inits]

    for idx, node in enumerate(graph.nodes):
        where = f"node {idx} ({node.op_type})"
        a = node.attrs
        srcs = data_inputs(node)
        try:
            src_ids = [producer[v] for v in srcs]
        except KeyError as e:
            raise StructureError(f"{where}: input {e} is not a graph input, "
                                 "initializer or earlier node output") from None
        weights = {}
        op = node.op_type

        if op == "Conv":
            if a.get("group", 1) != 1:
                raise StructureError(f"{where}: grouped convolution unsupported")
            if any(d != 1 for d in a.get("dilations", [1, 1])):
                raise StructureError(f"{where}: dilated convolution unsupported")
            w = inits[node.inputs[1]]
            k = _square("kernel", a.get("kernel_shape", list(w.shape[2:])), where)
            stride = _square("strides", a.get("strides", [1, 1]), where)
            pad = _sym_pads(a.get("pads", [0, 0, 0, 0]), where)
            has_bias = len(node.inputs) > 2 and bool(node.inputs[2])
            kind = rl.Conv2d(int(w.shape[0]), int(w.shape[1]), k, stride, pad,
                             bias=has_bias)
            weights["weight"] = np.ascontiguousarray(w, dtype=np.float32)
            if has_bias:
                weights["bias"] = np.ascontiguousarray(inits[node.inputs[2]],
                                                       dtype=np.float32)
        elif op == "Gemm":
            if a.get("transA", 0):
                raise StructureError(f"{where}: transA unsupported")
            w = inits[node.inputs[1]]
            if not a.get("transB", 0):
                w = w.T  # stored (in, out); the engine wants (out, in)
            w = np.ascontiguousarray(w, dtype=np.float32) * a.get("alpha", 1.0)
            has_bias = len(node.inputs) > 2 and bool(node.inputs[2])
            kind = rl.Linear(int(w.shape[0]), int(w.shape[1]), bias=has_bias)
            weights["weight"] = w.astype(np.float32)
            if has_bias:
                weights["bias"] = (inits[node.inputs[2]].astype(np.float32)
                                   * a.get("beta", 1.0))
        elif op == "BatchNormalization":
            gamma = inits[node.inputs[1]]
            weights = {
                "gamma": gamma.astype(np.float32),
                "beta": inits[node.inputs[2]].astype(np.float32),
                "running_mean": inits[node.inputs[3]].astype(np.float32),
                "running_var": inits[node.inputs[4]].astype(np.float32),
            }
            kind = rl.BatchNorm(int(gamma.shape[0]),
                                eps=float(a.get("epsilon", 1e-5)),
                                momentum=float(1.0 - a.get("momentum", 0.9)))
        elif op == "Relu":
            kind = rl.ReLU()
        elif op == "Sigmoid":
            kind = rl.Sigmoid()
        elif op == "HardSwish":
            kind = rl.HardSwish()
        elif op == "MaxPool":
            if any(a.get("pads", [0, 0, 0, 0])):
                raise StructureError(f"{where}: padded pooling unsupported")
            k = _square("kernel", a["kernel_shape"], where)
            kind = rl.MaxPool(k, _square("strides", a.get("strides", [k, k]), where))
        elif op == "AveragePool":
            if any(a.get("pads", [0, 0, 0, 0])):
                raise StructureError(f"{where}: padded pooling unsupported")
            k = _square("kernel", a["kernel_shape"], where)
            kind = rl.AvgPool(k, _square("strides", a.get("strides", [k, k]), where))
        elif op == "GlobalAveragePool":
            kind = rl.GlobalAvgPool()
        elif op == "Flatten":
            if a.get("axis", 1) != 1:
                raise StructureError(f"{where}: Flatten axis must be 1")
            kind = rl.Flatten()
        elif op == "Add":
            kind = rl.Add()
        elif op == "Mul":
            kind = rl.Mul()
        elif op == "Concat":
            if a.get("axis", 1) != 1:
                raise StructureError(f"{where}: Concat axis must be 1 (channels)")
            kind = rl.Concat()
        elif op == "Softmax":
            if a.get("axis", -1) not in (-1, 1):
                raise StructureError(f"{where}: Softmax axis must be the last")
            kind = rl.Softmax()
        else:  # unreachable: allowlist checked above
            raise UnsupportedOpError(f"{where}: {op}")

        nid = len(nodes)
        nodes.append(LayerNode(nid, kind, src_ids, weights))
        for out in node.outputs:
            producer[out] = nid

    out_name = graph.outputs[0]
    if out_name not in producer:
        raise StructureError(f"graph output {out_name!r} is never produced")

    # the engine needs the class count up front; probe it structurally
    probe = reference.evaluate(graph, np.zeros((1,) + in_shape, np.float32))
    if probe.ndim != 2:
        raise StructureError(f"graph output must be (B, classes), got "
                             f"{probe.shape}")
    model = ModelGraph(nodes, in_shape, int(probe.shape[1]), name=name,
                       output_id=producer[out_name])
    report = validate_graph(model)
    if not report.ok:
        raise StructureError("converted graph invalid: " + "; ".join(report.errors))
    return model


def export_checkpoint(spec: ImportSpec, out_stem) -> tuple:
    """Convert and write <out>.rlpm.json / .rlpm.bin atomically.

    All parsing, conversion and serialization happen before the first byte
    is written, so a failed export leaves no files behind.
    """
    graph = onnx_model.load(spec.source)
    model = convert(graph, spec, name=Path(out_stem).name)
    manifest, blob = serialize(model)
    stem = Path(out_stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    jpath = stem.with_name(stem.name + ".rlpm.json")
    bpath = stem.with_name(stem.name + ".rlpm.bin")
    try:
        jpath.write_bytes(manifest)
        bpath.write_bytes(blob)
    except OSError:
        jpath.unlink(missing_ok=True)
        bpath.unlink(missing_ok=True)
        raise
    return jpath, bpath


def verify_parity(source, exported, n_inputs=16, seed=0,
                  threshold=1e-4) -> ParityReport:
    """Max absolute logit deviation between the ONNX source (reference
    evaluator) and the exported rlpmodel on seeded random inputs."""
    graph = onnx_model.load(source)
    model = load_rlpmodel(exported)
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0,
                    (n_inputs,) + tuple(model.input_shape)).astype(np.float32)
    want = reference.evaluate(graph, x)
    got, _ = run_forward(model, x)
    if want.shape != got.shape:
        raise StructureError(f"output shapes disagree: source {want.shape} "
                             f"vs exported {got.shape}")
    return ParityReport(float(np.abs(want.astype(np.float64)
                                     - got.astype(np.float64)).max()),
                        threshold, n_inputs)
