"""Bilinear warping under a TransformFlow and the liquid-warping fusion blocks.

Feature maps are channel-first arrays (C, H, W). Arithmetic is carried out in
float64; callers holding float32 tensors get float64 results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .flow import TransformFlow

BLOCKS = ("add", "mean", "gate_add", "gate_mean", "attention")


@dataclass(frozen=True)
class FusionParams:
    wq: np.ndarray  # (d_k, C) per-pixel query embedding
    wk: np.ndarray  # (d_k, C)
    wv: np.ndarray  # (C, C) value embedding; output channels feed SPADE
    gate_w1: np.ndarray  # (C, C, 3, 3)
    gate_b1: np.ndarray  # (C,)
    gate_w2: np.ndarray  # (C, C, 3, 3)
    gate_b2: np.ndarray  # (C,)
    spade_shared_w: np.ndarray  # (h, C, 3, 3)
    spade_shared_b: np.ndarray  # (h,)
    spade_gamma_w: np.ndarray  # (C, h, 3, 3)
    spade_gamma_b: np.ndarray  # (C,)
    spade_beta_w: np.ndarray  # (C, h, 3, 3)
    spade_beta_b: np.ndarray  # (C,)
    eps: float = 1e-5

    @property
    def channels(self) -> int:
        return self.gate_b1.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _PARAM_NAMES}

    @classmethod
    def from_arrays(cls, arrays: dict, eps: float = 1e-5) -> "FusionParams":
        missing = [n for n in _PARAM_NAMES if n not in arrays]
        if missing:
            raise ValueError(f"fusion params missing: {', '.join(missing)}")
        params = cls(**{n: np.asarray(arrays[n], dtype=np.float64) for n in _PARAM_NAMES}, eps=eps)
        params.check()
        return params

    def check(self) -> None:
        C = self.channels
        h = self.spade_shared_b.shape[0]
        d_k = self.wq.shape[0]
        expected = {
            "wq": (d_k, C), "wk": (d_k, C), "wv": (C, C),
            "gate_w1": (C, C, 3, 3), "gate_b1": (C,), "gate_w2": (C, C, 3, 3), "gate_b2": (C,),
            "spade_shared_w": (h, C, 3, 3), "spade_shared_b": (h,),
            "spade_gamma_w": (C, h, 3, 3), "spade_gamma_b": (C,),
            "spade_beta_w": (C, h, 3, 3), "spade_beta_b": (C,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if not self.eps > 0:
            raise ValueError("eps must be > 0")


_PARAM_NAMES = (
    "wq", "wk", "wv", "gate_w1", "gate_b1", "gate_w2", "gate_b2",
    "spade_shared_w", "spade_shared_b", "spade_gamma_w", "spade_gamma_b",
    "spade_beta_w", "spade_beta_b",
)


def init_fusion_params(channels: int, seed: int = 0, hidden: int | None = None,
                       eps: float = 1e-5) -> FusionParams:
    """Deterministic initializer: every entry ~ U(-1/sqrt(C), 1/sqrt(C))."""
    C = channels
    h = C if hidden is None else hidden
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(C)
    shapes = {
        "wq": (C, C), "wk": (C, C), "wv": (C, C),
        "gate_w1": (C, C, 3, 3), "gate_b1": (C,), "gate_w2": (C, C, 3, 3), "gate_b2": (C,),
        "spade_shared_w": (h, C, 3, 3), "spade_shared_b": (h,),
        "spade_gamma_w": (C, h, 3, 3), "spade_gamma_b": (C,),
        "spade_beta_w": (C, h, 3, 3), "spade_beta_b": (C,),
    }
    arrays = {n: rng.uniform(-bound, bound, size=shapes[n]) for n in _PARAM_NAMES}
    return FusionParams(**arrays, eps=eps)


# --- sampling --------------------------------------------------------------


def bilinear_sample(src, tf: TransformFlow) -> np.ndarray:
    """Sample ``src`` (C, Hs, Ws) at the flow coordinates; zero outside and where invalid."""
    src = np.asarray(src, dtype=np.float64)
    if src.ndim == 2:
        src = src[None]
    if src.ndim != 3:
        raise ValueError("src must be (C, H, W)")
    if tf.flow.shape[:2] != tf.valid.shape or tf.flow.shape[2] != 2:
        raise ValueError("malformed flow")
    C, Hs, Ws = src.shape
    H, W = tf.valid.shape
    out = np.zeros((C, H, W))
    ii, jj = np.nonzero(tf.valid)
    if ii.size == 0:
        return out
    x = tf.flow[ii, jj, 0]
    y = tf.flow[ii, jj, 1]
    # continuous pixel coordinates; pixel k has its center at k
    px = ((x + 1.0) * Ws - 1.0) / 2.0
    py = ((y + 1.0) * Hs - 1.0) / 2.0
    x0 = np.floor(px)
    y0 = np.floor(py)
    wx1 = px - x0
    wy1 = py - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    acc = np.zeros((C, ii.size))
    for dy, wy in ((0, 1.0 - wy1), (1, wy1)):
        for dx, wx in ((0, 1.0 - wx1), (1, wx1)):
            yy = y0 + dy
            xx = x0 + dx
            inside = (yy >= 0) & (yy < Hs) & (xx >= 0) & (xx < Ws)
            w = np.where(inside, wy * wx, 0.0)
            acc += src[:, np.clip(yy, 0, Hs - 1), np.clip(xx, 0, Ws - 1)] * w
    out[:, ii, jj] = acc
    return out


def warp_image(image, tf: TransformFlow) -> np.ndarray:
    """Channel-last convenience wrapper: (Hs, Ws, C) -> (H, W, C)."""
    image = np.asarray(image, dtype=np.float64)
    squeeze = image.ndim == 2
    chw = image[None] if squeeze else np.moveaxis(image, -1, 0)
    out = bilinear_sample(chw, tf)
    return out[0] if squeeze else np.moveaxis(out, 0, -1)


def compose_syn(sources, flows) -> tuple[np.ndarray, np.ndarray]:
    """Average the warped sources wherever their flows are valid.

    ``sources`` are channel-last images. Returns (I_syn, per-pixel valid count).
    """
    if len(sources) == 0:
        raise ValueError("need at least one source image")
    if len(sources) != len(flows):
        raise ValueError("sources and flows differ in count")
    shape = flows[0].shape
    total = None
    count = np.zeros(shape, dtype=np.int64)
    for img, tf in zip(sources, flows):
        if tf.shape != shape:
            raise ValueError("flows differ in size")
        warped = warp_image(img, tf)
        total = warped if total is None else total + warped
        count += tf.valid
    denom = np.maximum(count, 1)
    syn = total / (denom[..., None] if total.ndim == 3 else denom)
    return syn, count


# --- fusion blocks ---------------------------------------------------------


def _stack(xs, xt) -> tuple[np.ndarray, np.ndarray]:
    if len(xs) == 0:
        raise ValueError("need at least one source feature map")
    xt = np.asarray(xt, dtype=np.float64)
    xs = np.stack([np.asarray(x, dtype=np.float64) for x in xs])
    if xs.shape[1:] != xt.shape:
        raise ValueError(f"source features {xs.shape[1:]} do not match target {xt.shape}")
    return xs, xt


def add_lwb(xs_warped, xt) -> np.ndarray:
    xs, xt = _stack(xs_warped, xt)
    return xs.sum(axis=0) + xt


def mean_agg(xs_warped, xt) -> np.ndarray:
    xs, xt = _stack(xs_warped, xt)
    return xs.mean(axis=0) + xt


def conv3x3(x, w, b) -> np.ndarray:
    """Stride-1, zero-padded 3x3 cross-correlation: (Cin, H, W) -> (Cout, H, W)."""
    x = np.asarray(x, dtype=np.float64)
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    windows = sliding_window_view(padded, (3, 3), axis=(1, 2))  # (Cin, H, W, 3, 3)
    return np.einsum("oikl,ihwkl->ohw", w, windows, optimize=True) + np.asarray(b)[:, None, None]


def _sigmoid(x):
    # split by sign so large magnitudes never overflow exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def gate(params: FusionParams, xt) -> np.ndarray:
    h = np.maximum(conv3x3(xt, params.gate_w1, params.gate_b1), 0.0)
    return _sigmoid(conv3x3(h, params.gate_w2, params.gate_b2))


def soft_gate(variant: str, params: FusionParams, xs_warped, xt) -> np.ndarray:
    xs, xt = _stack(xs_warped, xt)
    if variant == "add":
        agg = xs.sum(axis=0)
    elif variant == "mean":
        agg = xs.mean(axis=0)
    else:
        raise ValueError(f"unknown soft-gate variant {variant!r}")
    return gate(params, xt) * agg + xt


def instance_norm(x, eps: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=(1, 2), keepdims=True)
    var = x.var(axis=(1, 2), keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


def spade(params: FusionParams, xt, cond) -> np.ndarray:
    xt = np.asarray(xt, dtype=np.float64)
    cond = np.asarray(cond, dtype=np.float64)
    if cond.shape[1:] != xt.shape[1:]:
        raise ValueError("condition and target differ in spatial size")
    if cond.shape[0] != params.spade_shared_w.shape[1] or xt.shape[0] != params.channels:
        raise ValueError("channel count does not match fusion params")
    normalized = instance_norm(xt, params.eps)
    hidden = np.maximum(conv3x3(cond, params.spade_shared_w, params.spade_shared_b), 0.0)
    gamma = conv3x3(hidden, params.spade_gamma_w, params.spade_gamma_b)
    beta = conv3x3(hidden, params.spade_beta_w, params.spade_beta_b)
    return normalized * (1.0 + gamma) + beta


def attention_weights(params: FusionParams, xs_warped, xt) -> np.ndarray:
    """Per-pixel softmax over sources; shape (n, H, W)."""
    xs, xt = _stack(xs_warped, xt)
    d_k = params.wq.shape[0]
    q = np.einsum("dc,chw->dhw", params.wq, xt)
    k = np.einsum("dc,nchw->ndhw", params.wk, xs)
    logits = np.einsum("dhw,ndhw->nhw", q, k) / np.sqrt(d_k)
    logits -= logits.max(axis=0, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=0, keepdims=True)


def att_lwb(params: FusionParams, xs_warped, xt, return_weights: bool = False):
    xs, xt = _stack(xs_warped, xt)
    a = attention_weights(params, xs, xt)
    v = np.einsum("dc,nchw->ndhw", params.wv, xs)
    fused = np.einsum("nhw,ndhw->dhw", a, v)
    out = spade(params, xt, fused)
    return (out, a) if return_weights else out


def lwb_apply(block: str, params: FusionParams | None, xs_raw, flows, xt) -> np.ndarray:
    """Warp each source feature map by its flow, then fuse with ``block``."""
    if len(xs_raw) != len(flows):
        raise ValueError("feature maps and flows differ in count")
    warped = [bilinear_sample(x, tf) for x, tf in zip(xs_raw, flows)]
    if block == "add":
        return add_lwb(warped, xt)
    if block == "mean":
        return mean_agg(warped, xt)
    if block in ("gate_add", "gate_mean"):
        if params is None:
            raise ValueError(f"block {block!r} needs fusion params")
        return soft_gate(block.split("_")[1], params, warped, xt)
    if block == "attention":
        if params is None:
            raise ValueError("attention block needs fusion params")
        return att_lwb(params, warped, xt)
    raise ValueError(f"unknown block {block!r}; expected one of {', '.join(BLOCKS)}")
