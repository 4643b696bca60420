"""Serialization roundtrip and corrupt-input handling."""

import json

import numpy as np
import pytest

from conftest import MINI_FIXTURES, make_mini, random_batch
from rlprune import serial
from rlprune.errors import DataError
from rlprune.graph import model_hash, run_forward


@pytest.mark.parametrize("name", MINI_FIXTURES)
def test_roundtrip_is_a_fixpoint(name):
    m = make_mini(name)
    manifest, blob = serial.serialize(m)
    m2 = serial.deserialize(manifest, blob)
    manifest2, blob2 = serial.serialize(m2)
    assert manifest == manifest2
    assert blob == blob2
    assert model_hash(m) == model_hash(m2)
    x = random_batch(m.input_shape, seed=1)
    a, _ = run_forward(m, x)
    b, _ = run_forward(m2, x)
    np.testing.assert_array_equal(a, b)


def test_save_load(tmp_path):
    m = make_mini("incep-mini")
    serial.save(m, tmp_path / "m")
    m2 = serial.load(tmp_path / "m")
    assert model_hash(m) == model_hash(m2)
    # suffix-tolerant stems
    m3 = serial.load(tmp_path / "m.rlpm.json")
    assert model_hash(m) == model_hash(m3)


def test_missing_files(tmp_path):
    with pytest.raises(DataError, match="missing"):
        serial.load(tmp_path / "nope")


def test_bad_manifest_json():
    with pytest.raises(DataError, match="bad manifest"):
        serial.deserialize(b"{not json", b"")


def test_wrong_format_tag():
    m = make_mini("se-mini")
    manifest, blob = serial.serialize(m)
    d = json.loads(manifest)
    d["format"] = "rlpmodel-v99"
    with pytest.raises(DataError, match="unsupported format"):
        serial.deserialize(json.dumps(d).encode(), blob)


def test_truncated_blob():
    m = make_mini("se-mini")
    manifest, blob = serial.serialize(m)
    with pytest.raises(DataError, match="blob length mismatch"):
        serial.deserialize(manifest, blob[:-4])


def test_unknown_kind():
    m = make_mini("se-mini")
    manifest, blob = serial.serialize(m)
    d = json.loads(manifest)
    d["nodes"][0]["kind"] = {"op": "transposedconv"}
    with pytest.raises(DataError, match="unsupported layer kind"):
        serial.deserialize(json.dumps(d).encode(), blob)


def test_blob_is_little_endian_f32_in_field_order():
    m = make_mini("se-mini")
    manifest, blob = serial.serialize(m)
    d = json.loads(manifest)
    first = d["nodes"][0]
    names = [w["name"] for w in first["weights"]]
    assert names == ["weight", "bias"]  # declared field order
    size = int(np.prod(first["weights"][0]["shape"]))
    got = np.frombuffer(blob, dtype="<f4", count=size).reshape(
        first["weights"][0]["shape"])
    np.testing.assert_array_equal(got, m.nodes[0].weights["weight"])
