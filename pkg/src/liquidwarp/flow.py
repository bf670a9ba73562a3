"""Transformation flows between two renders of the same mesh topology, and
the task-specific builders for motion imitation, novel views and appearance
transfer.

A flow maps every target pixel to the normalized source-image coordinate of
the same surface point. The barycentric weights come from the target
rasterization and are applied to the source projection of the same face.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .body_model import BodyModel, BodyParams, Mesh, project, rigid_transform, skin
from .rasterizer import FaceTris, RenderMaps, face_tris, pixel_centers, rasterize, visibility


@dataclass(frozen=True)
class TransformFlow:
    flow: np.ndarray  # (H, W, 2) normalized source coordinates; 0 where invalid
    valid: np.ndarray  # (H, W) bool

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape


@dataclass
class FlowBundle:
    src_maps: list[RenderMaps]
    tgt_maps: RenderMaps
    flows: list[TransformFlow]
    src_tris: list[FaceTris] = field(default_factory=list)


@dataclass
class SwapFlows:
    """Appearance-transfer flows: t1 keeps the source head, t2 samples the reference body."""

    t1: TransformFlow
    t2: TransformFlow
    head_maps: RenderMaps
    src_body_maps: RenderMaps
    ref_body_maps: RenderMaps


def identity_flow(H: int, W: int, valid=None) -> TransformFlow:
    grid = pixel_centers(H, W)
    if valid is None:
        valid = np.ones((H, W), dtype=bool)
    valid = np.asarray(valid, dtype=bool)
    return TransformFlow(np.where(valid[..., None], grid, 0.0), valid)


def compose_flow(src_maps: RenderMaps, src_tris: FaceTris, tgt_maps: RenderMaps,
                 visible=None) -> TransformFlow:
    """Flow from target pixels to source-image coordinates.

    ``visible`` overrides the per-face visibility otherwise derived from
    ``src_maps.corr``.
    """
    if src_maps.shape != tgt_maps.shape:
        raise ValueError(f"source maps {src_maps.shape} and target maps {tgt_maps.shape} differ")
    nf = src_tris.n_faces
    vis = visibility(src_maps.corr, nf) if visible is None else np.asarray(visible, dtype=bool)
    if vis.shape != (nf,):
        raise ValueError("visibility vector does not match the face count")
    corr = tgt_maps.corr
    if corr.max(initial=-1) >= nf:
        raise ValueError("target correspondence map references unknown faces")
    fg = corr >= 0
    valid = fg.copy()
    valid[fg] = vis[corr[fg]]
    flow = np.zeros(corr.shape + (2,))
    f = corr[valid]
    flow[valid] = np.einsum("pk,pkd->pd", tgt_maps.bary[valid], src_tris.tris[f])
    return TransformFlow(flow, valid)


def _render(model: BodyModel, mesh: Mesh, params: BodyParams, H: int, W: int, face_mask=None):
    ft = face_tris(project(mesh, params.camera), model.faces)
    return rasterize(ft, H, W, face_mask), ft


def imitation_flow(model: BodyModel, src, ref_theta, H: int, W: int) -> FlowBundle:
    """Motion imitation: pose the first source's body with ``ref_theta``.

    ``src`` is a BodyParams or a list of them; every source gets its own flow
    into the common target rendered under the first source's camera.
    """
    sources = [src] if isinstance(src, BodyParams) else list(src)
    if not sources:
        raise ValueError("need at least one source")
    first = sources[0]
    target_params = first.with_pose(ref_theta)
    tgt_maps, _ = _render(model, skin(model, target_params.theta, first.beta), first, H, W)
    bundle = FlowBundle([], tgt_maps, [], [])
    for s in sources:
        maps, ft = _render(model, skin(model, s.theta, s.beta), s, H, W)
        bundle.src_maps.append(maps)
        bundle.src_tris.append(ft)
        bundle.flows.append(compose_flow(maps, ft, tgt_maps))
    return bundle


def novelview_flow(model: BodyModel, src: BodyParams, R, t, H: int, W: int) -> FlowBundle:
    src_mesh = skin(model, src.theta, src.beta)
    tgt_mesh = rigid_transform(src_mesh, R, t)
    src_maps, ft = _render(model, src_mesh, src, H, W)
    tgt_maps, _ = _render(model, tgt_mesh, src, H, W)
    return FlowBundle([src_maps], tgt_maps, [compose_flow(src_maps, ft, tgt_maps)], [ft])


def swap_flows(model: BodyModel, src: BodyParams, ref: BodyParams, head_faces, H: int,
               W: int) -> SwapFlows:
    """Appearance transfer split into a head-preserving and a body-sampling flow."""
    head = np.zeros(model.n_faces, dtype=bool)
    head_faces = np.asarray(head_faces if head_faces is not None else [], dtype=np.int64)
    if head_faces.size == 0:
        raise ValueError("head face set is empty")
    if head_faces.min() < 0 or head_faces.max() >= model.n_faces:
        raise ValueError("head face index out of range")
    head[head_faces] = True
    body = ~head

    src_mesh = skin(model, src.theta, src.beta)
    ref_mesh = skin(model, ref.theta, ref.beta)
    head_maps, _ = _render(model, src_mesh, src, H, W, head)
    src_body_maps, _ = _render(model, src_mesh, src, H, W, body)
    ref_body_maps, ref_ft = _render(model, ref_mesh, ref, H, W, body)

    t1 = identity_flow(H, W, head_maps.silhouette)
    t2 = compose_flow(ref_body_maps, ref_ft, src_body_maps)
    return SwapFlows(t1, t2, head_maps, src_body_maps, ref_body_maps)


def mask_decompose(image, src_maps: RenderMaps, dilate_px: int = 0):
    """Split ``image`` (H, W, C) into foreground and background by the silhouette.

    Returns (fg, bg, mask); the mask is the silhouette dilated by a square of
    radius ``dilate_px``.
    """
    image = np.asarray(image)
    if image.shape[:2] != src_maps.shape:
        raise ValueError(f"image {image.shape[:2]} does not match maps {src_maps.shape}")
    if dilate_px < 0:
        raise ValueError("dilate_px must be >= 0")
    mask = src_maps.silhouette.copy()
    if dilate_px > 0:
        mask = ndimage.binary_dilation(mask, structure=np.ones((2 * dilate_px + 1,) * 2, bool))
    m = mask[..., None] if image.ndim == 3 else mask
    fg = np.where(m, image, 0).astype(image.dtype)
    bg = np.where(m, 0, image).astype(image.dtype)
    return fg, bg, mask
