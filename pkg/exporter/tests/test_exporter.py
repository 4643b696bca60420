"""Exporter: wire decoding, conversion, total-or-nothing and parity."""

import numpy as np
import pytest
from rlprune import fixtures, run_forward
from rlprune import load as load_rlpmodel

import onnx_writer as ow
from rlprune_export import (ImportSpec, ParseError, StructureError,
                            UnsupportedOpError, convert, export_checkpoint,
                            verify_parity)
from rlprune_export import onnx_model, reference, wire

FIXTURE_NAMES = ("vgg-mini", "res-mini", "incep-mini", "se-mini")


def write_fixture_onnx(tmp_path, name, seed=0):
    model = fixtures.make_fixture(name, classes=10, seed=seed)
    path = tmp_path / f"{name}.onnx"
    path.write_bytes(ow.model_to_onnx(model))
    return model, path


# ------------------------------------------------------------- wire decoder


def test_varint_decoding_known_bytes():
    # 300 = 0b10101100 0b00000010 per the protobuf spec's worked example
    assert wire.read_varint(b"\xac\x02", 0) == (300, 2)
    assert wire.read_varint(b"\x00", 0) == (0, 1)
    assert wire.read_varint(b"\x7f", 0) == (127, 1)


def test_parse_message_known_bytes():
    # field 1, varint 150 -> 08 96 01 (protobuf spec example)
    fields = wire.parse_message(b"\x08\x96\x01")
    assert fields == {1: [150]}
    # field 2, length-delimited "testing" -> 12 07 74 65 73 74 69 6e 67
    fields = wire.parse_message(b"\x12\x07testing")
    assert fields == {2: [b"testing"]}


def test_truncated_message_rejected():
    with pytest.raises(wire.WireError):
        wire.parse_message(b"\x12\x7ftoo short")


# ------------------------------------------------------- decode and convert


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_fixture_roundtrip_structure(tmp_path, name):
    model, path = write_fixture_onnx(tmp_path, name)
    graph = onnx_model.load(path)
    assert len(graph.nodes) == len(model.nodes)
    converted = convert(graph, ImportSpec(path))
    assert len(converted.nodes) == len(model.nodes)
    assert converted.input_shape == model.input_shape
    assert converted.class_count == model.class_count
    kinds = [type(n.kind).__name__ for n in converted.nodes]
    assert kinds == [type(n.kind).__name__ for n in model.nodes]


def test_single_linear_weights_byte_equal(tmp_path):
    rng = np.random.default_rng(0)
    from rlprune import LayerNode, ModelGraph
    from rlprune import layers as rl
    lin = rl.Linear(5, 12)
    w = rl.init_weights(lin, rng)
    model = ModelGraph([
        LayerNode(0, rl.Flatten(), [-1], {}),
        LayerNode(1, lin, [0], w),
    ], (3, 2, 2), 5)
    path = tmp_path / "dense.onnx"
    path.write_bytes(ow.model_to_onnx(model))
    converted = convert(onnx_model.load(path), ImportSpec(path))
    linear = converted.nodes[1]
    assert linear.weights["weight"].tobytes() == w["weight"].tobytes()
    assert linear.weights["bias"].tobytes() == w["bias"].tobytes()


def test_unsupported_op_lists_every_offender(tmp_path):
    nodes = [
        ow.node("Relu", ["input"], ["a"]),
        ow.node("LSTM", ["a"], ["b"]),
        ow.node("Gelu", ["b"], ["c"]),
    ]
    path = tmp_path / "bad.onnx"
    path.write_bytes(ow.model_bytes(nodes, [],
                                    ow.value_info("input", [1, 3, 4, 4]),
                                    ow.value_info("c", field=12)))
    with pytest.raises(UnsupportedOpError) as exc:
        convert(onnx_model.load(path), ImportSpec(path))
    assert "Gelu" in str(exc.value) and "LSTM" in str(exc.value)


def test_export_is_total_or_nothing(tmp_path):
    nodes = [ow.node("LSTM", ["input"], ["out"])]
    path = tmp_path / "bad.onnx"
    path.write_bytes(ow.model_bytes(nodes, [],
                                    ow.value_info("input", [1, 3, 4, 4]),
                                    ow.value_info("out", field=12)))
    out = tmp_path / "out" / "model"
    with pytest.raises(UnsupportedOpError):
        export_checkpoint(ImportSpec(path), out)
    assert not list((tmp_path / "out").glob("*")) if (tmp_path / "out").exists() else True
    assert not (tmp_path / "out" / "model.rlpm.json").exists()
    assert not (tmp_path / "out" / "model.rlpm.bin").exists()


def test_garbage_file_rejected(tmp_path):
    path = tmp_path / "junk.onnx"
    path.write_bytes(b"\xff\xfe not a protobuf at all \x00\x01")
    with pytest.raises(ParseError):
        onnx_model.load(path)


def test_dynamic_shape_needs_override(tmp_path):
    nodes = [ow.node("Relu", ["input"], ["out"])]
    # batch and spatial dims symbolic
    blob = ow.model_bytes(nodes, [],
                          ow.value_info("input", [None, 3, None, None]),
                          ow.value_info("out", field=12))
    path = tmp_path / "dyn.onnx"
    path.write_bytes(blob)
    with pytest.raises(StructureError, match="input-shape"):
        convert(onnx_model.load(path), ImportSpec(path))


def test_gemm_transb_zero_is_transposed(tmp_path):
    rng = np.random.default_rng(1)
    w = rng.standard_normal((12, 5)).astype(np.float32)  # (in, out) layout
    nodes = [
        ow.node("Flatten", ["input"], ["flat"], ow.attr_int("axis", 1)),
        ow.node("Gemm", ["flat", "W"], ["out"], ow.attr_int("transB", 0)),
    ]
    path = tmp_path / "g.onnx"
    path.write_bytes(ow.model_bytes(nodes, [ow.tensor("W", w)],
                                    ow.value_info("input", [1, 3, 2, 2]),
                                    ow.value_info("out", field=12)))
    converted = convert(onnx_model.load(path), ImportSpec(path))
    np.testing.assert_array_equal(converted.nodes[1].weights["weight"], w.T)


# ----------------------------------------------------------------- parity


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_exported_fixture_parity(tmp_path, name):
    model, path = write_fixture_onnx(tmp_path, name)
    stem = tmp_path / f"{name}-out"
    export_checkpoint(ImportSpec(path), stem)
    report = verify_parity(path, stem, n_inputs=16, seed=0)
    assert report.passed, f"max deviation {report.max_deviation}"
    # and the exported model agrees with the original in-memory one
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 1, (4,) + tuple(model.input_shape)).astype(np.float32)
    a, _ = run_forward(model, x)
    b, _ = run_forward(load_rlpmodel(stem), x)
    np.testing.assert_array_equal(a, b)


def test_parity_corrupted_blob_fails(tmp_path):
    _, path = write_fixture_onnx(tmp_path, "se-mini")
    stem = tmp_path / "out"
    export_checkpoint(ImportSpec(path), stem)
    blob = bytearray((tmp_path / "out.rlpm.bin").read_bytes())
    flat = np.frombuffer(bytes(blob), dtype="<f4").copy()
    flat[: flat.size // 2] += 0.5
    (tmp_path / "out.rlpm.bin").write_bytes(flat.astype("<f4").tobytes())
    report = verify_parity(path, stem, n_inputs=4, seed=0)
    assert not report.passed
    assert report.max_deviation > 1e-4


def test_reference_evaluator_agrees_with_engine(tmp_path):
    # independent implementations agree within float32 tolerance
    for name in FIXTURE_NAMES:
        model, path = write_fixture_onnx(tmp_path, name, seed=4)
        graph = onnx_model.load(path)
        rng = np.random.default_rng(5)
        x = rng.uniform(-1, 1, (3,) + tuple(model.input_shape)).astype(np.float32)
        want, _ = run_forward(model, x)
        got = reference.evaluate(graph, x)
        np.testing.assert_allclose(got, want, atol=1e-5, rtol=1e-4)


# --------------------------------------------------------------------- CLI


def test_cli_export_and_verify(tmp_path, capsys):
    from rlprune_export.cli import main
    _, path = write_fixture_onnx(tmp_path, "res-mini")
    stem = tmp_path / "cli-out"
    assert main([str(path), str(stem), "--verify", "16"]) == 0
    out = capsys.readouterr().out
    assert "parity: max deviation" in out
    assert (tmp_path / "cli-out.rlpm.json").exists()


def test_cli_unsupported_op_exit_code(tmp_path):
    from rlprune_export.cli import main
    nodes = [ow.node("LSTM", ["input"], ["out"])]
    path = tmp_path / "bad.onnx"
    path.write_bytes(ow.model_bytes(nodes, [],
                                    ow.value_info("input", [1, 3, 4, 4]),
                                    ow.value_info("out", field=12)))
    assert main([str(path), str(tmp_path / "x")]) == 2
    assert not (tmp_path / "x.rlpm.json").exists()
