"""rlpmodel-v1 serialization: JSON manifest + little-endian float32 blob.

File pair: <name>.rlpm.json / <name>.rlpm.bin.  Weights are stored per node
in declaration order with field order weight, bias, gamma, beta,
running_mean, running_var.  Byte-stable: identical models serialize to
identical bytes.  See docs/format.md.
"""

import dataclasses
import json
from pathlib import Path

import numpy as np

from .errors import DataError
from .graph import LayerNode, ModelGraph, validate_graph
from .layers import (Add, AvgPool, BatchNorm, Concat, Conv2d, Flatten,
                     GlobalAvgPool, HardSwish, Linear, MaxPool, Mul, ReLU,
                     Sigmoid, Softmax, WEIGHT_FIELD_ORDER)

FORMAT = "rlpmodel-v1"

_KIND_CLASSES = {
    "conv2d": Conv2d, "linear": Linear, "batchnorm": BatchNorm, "relu": ReLU,
    "sigmoid": Sigmoid, "hardswish": HardSwish, "maxpool": MaxPool,
    "avgpool": AvgPool, "globalavgpool": GlobalAvgPool, "flatten": Flatten,
    "add": Add, "mul": Mul, "concat": Concat, "softmax": Softmax,
}
_KIND_NAMES = {cls: name for name, cls in _KIND_CLASSES.items()}


def _kind_to_json(kind):
    d = {"op": _KIND_NAMES[type(kind)]}
    d.update(dataclasses.asdict(kind))
    return d


def _kind_from_json(d, where):
    d = dict(d)
    op = d.pop("op", None)
    cls = _KIND_CLASSES.get(op)
    if cls is None:
        raise DataError(f"{where}: unsupported layer kind {op!r}")
    try:
        return cls(**d)
    except TypeError as e:
        raise DataError(f"{where}: bad params for {op}: {e}") from None


def serialize(model: ModelGraph):
    """Returns (manifest bytes, blob bytes)."""
    report = validate_graph(model)
    if not report.ok:
        raise DataError("cannot serialize invalid model: " + "; ".join(report.errors))
    nodes = []
    chunks = []
    total = 0
    for node in model.nodes:
        wmeta = []
        for name in WEIGHT_FIELD_ORDER:
            if name in node.weights:
                arr = np.ascontiguousarray(node.weights[name], dtype=np.float32)
                wmeta.append({"name": name, "shape": list(arr.shape)})
                chunks.append(arr.astype("<f4").tobytes())
                total += arr.size
        nodes.append({
            "id": node.id,
            "kind": _kind_to_json(node.kind),
            "inputs": list(node.inputs),
            "weights": wmeta,
        })
    manifest = {
        "format": FORMAT,
        "name": model.name,
        "version": model.version,
        "input_shape": list(model.input_shape),
        "class_count": model.class_count,
        "output_id": model.output_id,
        "total_values": total,
        "nodes": nodes,
    }
    text = json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n"
    return text.encode("utf-8"), b"".join(chunks)


def deserialize(manifest_bytes: bytes, blob_bytes: bytes) -> ModelGraph:
    try:
        manifest = json.loads(manifest_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"bad manifest: {e}") from None
    if manifest.get("format") != FORMAT:
        raise DataError(f"unsupported format {manifest.get('format')!r}, "
                        f"expected {FORMAT!r}")
    total = int(manifest["total_values"])
    if len(blob_bytes) != total * 4:
        raise DataError(f"blob length mismatch: expected {total * 4} bytes "
                        f"({total} float32 values), got {len(blob_bytes)}")
    flat = np.frombuffer(blob_bytes, dtype="<f4")
    nodes = []
    offset = 0
    for nd in manifest["nodes"]:
        where = f"node {nd.get('id')}"
        kind = _kind_from_json(nd["kind"], where)
        weights = {}
        for wm in nd["weights"]:
            size = int(np.prod(wm["shape"])) if wm["shape"] else 1
            if offset + size > flat.size:
                raise DataError(f"{where}: blob exhausted at value offset {offset}")
            weights[wm["name"]] = flat[offset:offset + size].reshape(wm["shape"]).copy()
            offset += size
        nodes.append(LayerNode(int(nd["id"]), kind, list(nd["inputs"]), weights))
    model = ModelGraph(nodes, tuple(manifest["input_shape"]),
                       int(manifest["class_count"]), manifest.get("name", "model"),
                       str(manifest.get("version", "1")), int(manifest["output_id"]))
    report = validate_graph(model)
    if not report.ok:
        raise DataError("deserialized model invalid: " + "; ".join(report.errors))
    return model


def save(model: ModelGraph, stem) -> tuple:
    """Write <stem>.rlpm.json and <stem>.rlpm.bin; returns the two paths."""
    stem = Path(stem)
    manifest, blob = serialize(model)
    jpath = stem.with_name(stem.name + ".rlpm.json")
    bpath = stem.with_name(stem.name + ".rlpm.bin")
    jpath.write_bytes(manifest)
    bpath.write_bytes(blob)
    return jpath, bpath


def load(stem) -> ModelGraph:
    stem = Path(str(stem).removesuffix(".rlpm.json").removesuffix(".rlpm.bin"))
    jpath = stem.with_name(stem.name + ".rlpm.json")
    bpath = stem.with_name(stem.name + ".rlpm.bin")
    if not jpath.exists() or not bpath.exists():
        raise DataError(f"missing model file pair {jpath} / {bpath}")
    return deserialize(jpath.read_bytes(), bpath.read_bytes())
