"""Minimal protobuf wire-format reader.

Decodes the handful of message shapes the ONNX subset needs; no schema
compiler involved.  A message is decoded into {field_number: [values]}
where a value is an int (varint), bytes (length-delimited), or a 4/8-byte
chunk for the fixed widths.
"""

import struct


class WireError(ValueError):
    pass


VARINT = 0
FIXED64 = 1
LENGTH = 2
FIXED32 = 5


def read_varint(buf: bytes, pos: int):
    result = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise WireError("truncated varint")
        b = buf[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            return result, pos
        shift += 7
        if shift > 63:
            raise WireError("varint too long")


def parse_message(buf: bytes) -> dict:
    """One pass over a serialized message; returns raw field values."""
    fields = {}
    pos = 0
    while pos < len(buf):
        key, pos = read_varint(buf, pos)
        field, wtype = key >> 3, key & 7
        if field == 0:
            raise WireError("field number 0")
        if wtype == VARINT:
            value, pos = read_varint(buf, pos)
        elif wtype == FIXED64:
            value = buf[pos:pos + 8]
            pos += 8
        elif wtype == LENGTH:
            size, pos = read_varint(buf, pos)
            if pos + size > len(buf):
                raise WireError("truncated length-delimited field")
            value = buf[pos:pos + size]
            pos += size
        elif wtype == FIXED32:
            value = buf[pos:pos + 4]
            pos += 4
        else:
            raise WireError(f"unsupported wire type {wtype}")
        fields.setdefault(field, []).append(value)
    return fields


def as_int(fields, num, default=None):
    vals = fields.get(num)
    if not vals:
        return default
    return int(vals[-1])


def as_signed(value: int) -> int:
    """Interpret a varint as a two's-complement int64."""
    return value - (1 << 64) if value >= (1 << 63) else value


def as_bytes(fields, num, default=None):
    vals = fields.get(num)
    if not vals:
        return default
    return vals[-1]


def as_float32(chunk: bytes) -> float:
    return struct.unpack("<f", chunk)[0]


def repeated_int64(fields, num):
    """Repeated int64 field, accepting both packed and unpacked encoding."""
    out = []
    for v in fields.get(num, []):
        if isinstance(v, int):
            out.append(as_signed(v))
        else:  # packed
            pos = 0
            while pos < len(v):
                value, pos = read_varint(v, pos)
                out.append(as_signed(value))
    return out
