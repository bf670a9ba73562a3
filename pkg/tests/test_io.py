import struct

import numpy as np
import pytest

from liquidwarp import io
from liquidwarp.body_model import SYNTH_CAMERA, BodyParams
from liquidwarp.flow import TransformFlow, identity_flow
from liquidwarp.rasterizer import RenderMaps
from liquidwarp.warp_fusion import init_fusion_params


def test_f32_round_trip_bit_identical(tmp_path, rng):
    arr = rng.normal(size=(3, 4, 5)).astype(np.float32)
    io.tensor_write(tmp_path / "a.lwt", arr)
    back = io.tensor_read(tmp_path / "a.lwt")
    assert back.dtype == np.float32 and back.shape == (3, 4, 5)
    assert back.tobytes() == arr.tobytes()


@pytest.mark.parametrize("dtype", [np.uint8, np.int32])
def test_integer_round_trip(tmp_path, rng, dtype):
    arr = rng.integers(-5 if dtype == np.int32 else 0, 200, size=(7, 3)).astype(dtype)
    io.tensor_write(tmp_path / "a.lwt", arr)
    assert np.array_equal(io.tensor_read(tmp_path / "a.lwt"), arr)


def test_bool_mask_stored_as_u8(tmp_path):
    mask = np.array([[True, False], [False, True]])
    io.tensor_write(tmp_path / "m.lwt", mask)
    back = io.tensor_read(tmp_path / "m.lwt")
    assert back.dtype == np.uint8 and np.array_equal(back.astype(bool), mask)


def test_header_layout():
    raw = io.encode_tensor(np.zeros((2, 3), np.int32))
    assert raw[:4] == b"LWTF"
    assert struct.unpack("<IIIII", raw[4:24]) == (1, 2, 2, 2, 3)
    assert len(raw) == 24 + 2 * 3 * 4


def test_truncated_payload(tmp_path):
    raw = io.encode_tensor(np.ones((4, 4), np.float32))
    (tmp_path / "t.lwt").write_bytes(raw[:-3])
    with pytest.raises(io.TensorFormatError, match="truncated"):
        io.tensor_read(tmp_path / "t.lwt")
    (tmp_path / "h.lwt").write_bytes(raw[:10])
    with pytest.raises(io.TensorFormatError, match="truncated"):
        io.tensor_read(tmp_path / "h.lwt")


def test_bad_magic_and_version(tmp_path):
    raw = bytearray(io.encode_tensor(np.ones(3, np.float32)))
    (tmp_path / "m.lwt").write_bytes(b"XXXX" + bytes(raw[4:]))
    with pytest.raises(io.TensorFormatError, match="magic"):
        io.tensor_read(tmp_path / "m.lwt")
    raw[4:8] = struct.pack("<I", 2)
    (tmp_path / "v.lwt").write_bytes(bytes(raw))
    with pytest.raises(io.TensorFormatError, match="version"):
        io.tensor_read(tmp_path / "v.lwt")


def test_unsupported_dtype():
    with pytest.raises(io.TensorFormatError):
        io.encode_tensor(np.zeros(3, np.float64))


def test_bundle_round_trip(tmp_path, rng):
    tensors = {"a": rng.random((2, 2)).astype(np.float32), "b": np.arange(5, dtype=np.int32)}
    io.bundle_write(tmp_path / "b.lwb", tensors)
    back = io.bundle_read(tmp_path / "b.lwb")
    assert list(back) == ["a", "b"]
    for k in tensors:
        assert back[k].tobytes() == tensors[k].tobytes()


def test_bundle_truncated(tmp_path):
    io.bundle_write(tmp_path / "b.lwb", {"x": np.ones(10, np.float32)})
    raw = (tmp_path / "b.lwb").read_bytes()
    (tmp_path / "c.lwb").write_bytes(raw[:-1])
    with pytest.raises(io.TensorFormatError):
        io.bundle_read(tmp_path / "c.lwb")


def test_maps_round_trip(tmp_path, rng):
    corr = rng.integers(-1, 10, (5, 6)).astype(np.int32)
    bary = rng.random((5, 6, 3)).astype(np.float32).astype(np.float64)
    depth = np.where(corr >= 0, 1.5, np.inf)
    maps = RenderMaps(corr, bary, corr >= 0, depth)
    io.write_maps(tmp_path / "m.lwb", maps)
    t = io.bundle_read(tmp_path / "m.lwb")
    assert {k: v.dtype for k, v in t.items()} == {
        "corr": np.int32, "bary": np.float32, "depth": np.float32, "silhouette": np.uint8}
    back = io.read_maps(tmp_path / "m.lwb")
    assert np.array_equal(back.corr, corr)
    assert np.array_equal(back.bary, bary)
    assert np.array_equal(back.depth, depth)
    assert np.array_equal(back.silhouette, corr >= 0)


def test_flow_round_trip(tmp_path):
    tf = identity_flow(8, 8, np.eye(8, dtype=bool))
    io.write_flow(tmp_path / "f.lwb", tf)
    back = io.read_flow(tmp_path / "f.lwb")
    assert np.array_equal(back.valid, tf.valid)
    assert np.array_equal(back.flow, tf.flow)  # dyadic grid values survive float32


def test_fusion_params_round_trip(tmp_path):
    p = init_fusion_params(3, seed=2)
    io.write_fusion_params(tmp_path / "p.lwb", p)
    back = io.read_fusion_params(tmp_path / "p.lwb")
    for name, arr in p.arrays().items():
        assert np.array_equal(back.arrays()[name], arr.astype(np.float32))
    assert np.isclose(back.eps, 1e-5)


def test_png_round_trip(tmp_path, rng):
    u8 = rng.integers(0, 256, (9, 7, 3), dtype=np.uint8)
    io.write_image(tmp_path / "a.png", u8)
    img = io.read_image(tmp_path / "a.png")
    assert np.array_equal(io.to_u8(img), u8)


def test_to_u8_round_half_up():
    assert io.to_u8(np.array([127.5 / 255, 0.4 / 255, 1.2, -0.1])).tolist() == [128, 0, 255, 0]


def test_params_round_trip_and_validation(tmp_path, model):
    p = BodyParams(np.arange(6) * 0.1, [0.2], SYNTH_CAMERA)
    io.write_params(tmp_path / "p.json", p)
    back = io.read_params(tmp_path / "p.json", model)
    assert np.array_equal(back.theta, p.theta) and back.camera == p.camera
    io.write_params(tmp_path / "bad.json", BodyParams(np.zeros(9), [0.0], SYNTH_CAMERA))
    with pytest.raises(ValueError, match="theta"):
        io.read_params(tmp_path / "bad.json", model)
