"""Decoded ONNX graph structures for the supported operator subset."""

import struct
from dataclasses import dataclass, field

import numpy as np

from . import wire
from .errors import ParseError

# field numbers from the ONNX protobuf schema
_MODEL_GRAPH = 7
_GRAPH_NODE = 1
_GRAPH_INITIALIZER = 5
_GRAPH_INPUT = 11
_GRAPH_OUTPUT = 12
_NODE_INPUT = 1
_NODE_OUTPUT = 2
_NODE_OP_TYPE = 4
_NODE_ATTRIBUTE = 5
_ATTR_NAME = 1
_ATTR_F = 2
_ATTR_I = 3
_ATTR_S = 4
_ATTR_T = 5
_ATTR_FLOATS = 7
_ATTR_INTS = 8
_TENSOR_DIMS = 1
_TENSOR_DATA_TYPE = 2
_TENSOR_FLOAT_DATA = 4
_TENSOR_INT64_DATA = 7
_TENSOR_NAME = 8
_TENSOR_RAW_DATA = 9
_VALUE_NAME = 1
_VALUE_TYPE = 2
_TYPE_TENSOR = 1
_TENSORTYPE_ELEM = 1
_TENSORTYPE_SHAPE = 2
_SHAPE_DIM = 1
_DIM_VALUE = 1
_DIM_PARAM = 2

FLOAT = 1
INT64 = 7


@dataclass
class OnnxNode:
    op_type: str
    inputs: list
    outputs: list
    attrs: dict


@dataclass
class OnnxGraph:
    nodes: list
    initializers: dict  # name -> np.ndarray
    inputs: list        # (name, shape or None) for non-initializer inputs
    outputs: list       # output value names
    dynamic_inputs: list = field(default_factory=list)


def _decode_tensor(buf: bytes, where: str) -> tuple:
    f = wire.parse_message(buf)
    name = (wire.as_bytes(f, _TENSOR_NAME, b"") or b"").decode("utf-8")
    dims = wire.repeated_int64(f, _TENSOR_DIMS)
    dtype = wire.as_int(f, _TENSOR_DATA_TYPE, FLOAT)
    raw = wire.as_bytes(f, _TENSOR_RAW_DATA)
    if dtype == FLOAT:
        if raw is not None:
            arr = np.frombuffer(raw, dtype="<f4")
        else:
            chunks = []
            for v in f.get(_TENSOR_FLOAT_DATA, []):
                if isinstance(v, bytes) and len(v) == 4:
                    chunks.append(np.frombuffer(v, dtype="<f4"))
                else:  # packed
                    chunks.append(np.frombuffer(v, dtype="<f4"))
            arr = np.concatenate(chunks) if chunks else np.zeros(0, "<f4")
    elif dtype == INT64:
        if raw is not None:
            arr = np.frombuffer(raw, dtype="<i8")
        else:
            arr = np.array(wire.repeated_int64(f, _TENSOR_INT64_DATA),
                           dtype=np.int64)
    else:
        raise ParseError(f"{where}: unsupported tensor data type {dtype} "
                         f"for {name!r} (only float32 and int64)")
    size = int(np.prod(dims)) if dims else 1
    if arr.size != size:
        raise ParseError(f"{where}: tensor {name!r} has {arr.size} values, "
                         f"dims {dims} imply {size}")
    return name, arr.reshape(dims)


def _decode_attr(buf: bytes) -> tuple:
    f = wire.parse_message(buf)
    name = (wire.as_bytes(f, _ATTR_NAME, b"") or b"").decode("utf-8")
    if _ATTR_INTS in f:
        return name, wire.repeated_int64(f, _ATTR_INTS)
    if _ATTR_I in f:
        return name, wire.as_signed(wire.as_int(f, _ATTR_I))
    if _ATTR_F in f:
        return name, wire.as_float32(wire.as_bytes(f, _ATTR_F))
    if _ATTR_FLOATS in f:
        vals = []
        for v in f.get(_ATTR_FLOATS, []):
            vals.extend(np.frombuffer(v, dtype="<f4").tolist())
        return name, vals
    if _ATTR_S in f:
        return name, wire.as_bytes(f, _ATTR_S).decode("utf-8", "replace")
    if _ATTR_T in f:
        return name, _decode_tensor(wire.as_bytes(f, _ATTR_T), f"attr {name}")[1]
    return name, None


def _decode_value_info(buf: bytes):
    f = wire.parse_message(buf)
    name = (wire.as_bytes(f, _VALUE_NAME, b"") or b"").decode("utf-8")
    shape = None
    dynamic = False
    tbuf = wire.as_bytes(f, _VALUE_TYPE)
    if tbuf is not None:
        t = wire.parse_message(tbuf)
        ttbuf = wire.as_bytes(t, _TYPE_TENSOR)
        if ttbuf is not None:
            tt = wire.parse_message(ttbuf)
            sbuf = wire.as_bytes(tt, _TENSORTYPE_SHAPE)
            if sbuf is not None:
                dims = []
                for dbuf in wire.parse_message(sbuf).get(_SHAPE_DIM, []):
                    d = wire.parse_message(dbuf)
                    if _DIM_VALUE in d:
                        dims.append(wire.as_int(d, _DIM_VALUE))
                    else:
                        dims.append(None)  # symbolic / dynamic
                        dynamic = True
                shape = dims
    return name, shape, dynamic


def load(path) -> OnnxGraph:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise ParseError(str(e)) from None
    try:
        model = wire.parse_message(data)
        gbuf = wire.as_bytes(model, _MODEL_GRAPH)
        if gbuf is None:
            raise ParseError(f"{path}: no graph in model")
        g = wire.parse_message(gbuf)
        initializers = {}
        for tbuf in g.get(_GRAPH_INITIALIZER, []):
            name, arr = _decode_tensor(tbuf, str(path))
            initializers[name] = arr
        nodes = []
        for nbuf in g.get(_GRAPH_NODE, []):
            nf = wire.parse_message(nbuf)
            attrs = dict(_decode_attr(a) for a in nf.get(_NODE_ATTRIBUTE, []))
            nodes.append(OnnxNode(
                (wire.as_bytes(nf, _NODE_OP_TYPE, b"") or b"").decode("utf-8"),
                [v.decode("utf-8") for v in nf.get(_NODE_INPUT, [])],
                [v.decode("utf-8") for v in nf.get(_NODE_OUTPUT, [])],
                attrs))
        inputs = []
        dynamic = []
        for vbuf in g.get(_GRAPH_INPUT, []):
            name, shape, dyn = _decode_value_info(vbuf)
            if name in initializers:
                continue  # weight declared as a graph input
            inputs.append((name, shape))
            if dyn:
                dynamic.append(name)
        outputs = [_decode_value_info(v)[0] for v in g.get(_GRAPH_OUTPUT, [])]
    except wire.WireError as e:
        raise ParseError(f"{path}: malformed protobuf: {e}") from None
    if not nodes:
        raise ParseError(f"{path}: graph has no nodes")
    return OnnxGraph(nodes, initializers, inputs, outputs, dynamic)
