"""File formats.

Tensor file (``.lwt``), little-endian throughout::

    magic   4 bytes  b"LWTF"
    version u32      1
    dtype   u32      0 = f32, 1 = u8, 2 = i32
    rank    u32
    dims    rank x u32
    payload row-major, prod(dims) * itemsize bytes

Bundle file (``.lwb``) holding named tensors::

    magic   4 bytes  b"LWTB"
    version u32      1
    count   u32
    then per section: name_len u32, UTF-8 name, one complete tensor record

Images are 8-bit PNG; values convert to [0, 1] by v/255 and back with
round-half-up.
"""

from __future__ import annotations

import io as _io
import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .body_model import BodyModel, BodyParams, CameraWP
from .flow import TransformFlow
from .rasterizer import RenderMaps
from .warp_fusion import FusionParams

TENSOR_MAGIC = b"LWTF"
BUNDLE_MAGIC = b"LWTB"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("u1"), 2: np.dtype("<i4")}
_CODES = {("f", 4): 0, ("u", 1): 1, ("b", 1): 1, ("i", 4): 2}


class TensorFormatError(ValueError):
    pass


def _code_for(arr: np.ndarray) -> int:
    try:
        return _CODES[(arr.dtype.kind, arr.dtype.itemsize)]
    except KeyError:
        raise TensorFormatError(f"unsupported dtype {arr.dtype}; use float32, uint8 or int32") from None


def encode_tensor(arr) -> bytes:
    arr = np.asarray(arr)
    code = _code_for(arr)
    data = np.ascontiguousarray(arr, dtype=_DTYPES[code])
    header = TENSOR_MAGIC + struct.pack("<III", VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + data.tobytes()


def _decode_tensor(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    if len(buf) - offset < 16:
        raise TensorFormatError("truncated tensor header")
    if buf[offset:offset + 4] != TENSOR_MAGIC:
        raise TensorFormatError(f"bad magic {buf[offset:offset + 4]!r}")
    version, code, rank = struct.unpack_from("<III", buf, offset + 4)
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}")
    if code not in _DTYPES:
        raise TensorFormatError(f"unknown dtype code {code}")
    pos = offset + 16
    if len(buf) - pos < 4 * rank:
        raise TensorFormatError("truncated tensor dims")
    dims = struct.unpack_from(f"<{rank}I", buf, pos)
    pos += 4 * rank
    dt = _DTYPES[code]
    nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
    if len(buf) - pos < nbytes:
        raise TensorFormatError(f"truncated payload: expected {nbytes} bytes, found {len(buf) - pos}")
    arr = np.frombuffer(buf, dtype=dt, count=nbytes // dt.itemsize, offset=pos).reshape(dims)
    return arr.astype(dt.newbyteorder("="), copy=True), pos + nbytes


def decode_tensor(buf: bytes) -> np.ndarray:
    arr, end = _decode_tensor(buf)
    if end != len(buf):
        raise TensorFormatError(f"{len(buf) - end} trailing bytes after tensor payload")
    return arr


def tensor_write(path, arr) -> None:
    Path(path).write_bytes(encode_tensor(arr))


def tensor_read(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


def bundle_write(path, tensors: dict) -> None:
    parts = [BUNDLE_MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(encode_tensor(arr))
    Path(path).write_bytes(b"".join(parts))


def bundle_read(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if len(buf) < 12:
        raise TensorFormatError("truncated bundle header")
    if buf[:4] != BUNDLE_MAGIC:
        raise TensorFormatError(f"bad bundle magic {buf[:4]!r}")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise TensorFormatError(f"unsupported bundle version {version}")
    pos, out = 12, {}
    for _ in range(count):
        if len(buf) - pos < 4:
            raise TensorFormatError("truncated section name")
        (n,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        if len(buf) - pos < n:
            raise TensorFormatError("truncated section name")
        name = buf[pos:pos + n].decode("utf-8")
        pos += n
        out[name], pos = _decode_tensor(buf, pos)
    if pos != len(buf):
        raise TensorFormatError(f"{len(buf) - pos} trailing bytes after last section")
    return out


# --- domain objects --------------------------------------------------------


def write_maps(path, maps: RenderMaps) -> None:
    bundle_write(path, {
        "corr": maps.corr.astype(np.int32),
        "bary": maps.bary.astype(np.float32),
        "depth": maps.depth.astype(np.float32),
        "silhouette": maps.silhouette.astype(np.uint8),
    })


def read_maps(path) -> RenderMaps:
    t = bundle_read(path)
    return RenderMaps(t["corr"], t["bary"].astype(np.float64), t["silhouette"].astype(bool),
                      t["depth"].astype(np.float64))


def write_flow(path, tf: TransformFlow) -> None:
    bundle_write(path, {"flow": tf.flow.astype(np.float32), "valid": tf.valid.astype(np.uint8)})


def read_flow(path) -> TransformFlow:
    t = bundle_read(path)
    valid = t["valid"].astype(bool)
    flow = np.where(valid[..., None], t["flow"].astype(np.float64), 0.0)
    return TransformFlow(flow, valid)


def write_fusion_params(path, params: FusionParams) -> None:
    arrays = {k: v.astype(np.float32) for k, v in params.arrays().items()}
    arrays["eps"] = np.array([params.eps], dtype=np.float32)
    bundle_write(path, arrays)


def read_fusion_params(path) -> FusionParams:
    t = bundle_read(path)
    eps = float(t.pop("eps", np.array([1e-5]))[0])
    return FusionParams.from_arrays(t, eps=eps)


def read_image(path) -> np.ndarray:
    """PNG -> float64 (H, W, 3) in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return arr.astype(np.float64) / 255.0


def to_u8(img) -> np.ndarray:
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return np.floor(img * 255.0 + 0.5).astype(np.uint8)


def encode_png(img) -> bytes:
    buf = _io.BytesIO()
    u8 = img if np.asarray(img).dtype == np.uint8 else to_u8(img)
    Image.fromarray(np.asarray(u8)).save(buf, format="PNG")
    return buf.getvalue()


def write_image(path, img) -> None:
    Path(path).write_bytes(encode_png(img))


def read_params(path, model: BodyModel | None = None) -> BodyParams:
    d = json.loads(Path(path).read_text())
    for key in ("theta", "beta", "camera"):
        if key not in d:
            raise ValueError(f"{path}: missing {key!r}")
    if len(d["camera"]) != 3:
        raise ValueError(f"{path}: camera must be [s, tx, ty]")
    params = BodyParams(d["theta"], d["beta"], CameraWP.from_array(d["camera"]))
    if model is not None:
        if params.theta.size != 3 * model.n_joints:
            raise ValueError(f"{path}: theta has {params.theta.size} values, model expects {3 * model.n_joints}")
        if params.beta.size != model.n_betas:
            raise ValueError(f"{path}: beta has {params.beta.size} values, model expects {model.n_betas}")
    return params


def write_params(path, params: BodyParams) -> None:
    Path(path).write_text(json.dumps({
        "theta": params.theta.tolist(),
        "beta": params.beta.tolist(),
        "camera": params.camera.as_array().tolist(),
    }))
