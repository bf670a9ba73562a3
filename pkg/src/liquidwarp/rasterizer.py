"""Z-buffered triangle rasterization into correspondence, barycentric,
silhouette and depth maps.

Coverage is sampled at pixel centers. A center lying exactly on an edge
belongs to the triangle for which that edge is a top or left edge, so two
triangles sharing an edge never both claim the pixel. Edge functions are
evaluated with a canonical endpoint order, which makes the two evaluations
of a shared edge exact negatives of each other.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numba
import numpy as np

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the bundled TBB is too old for numba and only produces a warning
    numba.config.THREADING_LAYER = "omp"


@dataclass(frozen=True)
class FaceTris:
    tris: np.ndarray  # (N_f, 3, 2) projected xy per face corner
    tri_depth: np.ndarray  # (N_f, 3)

    @property
    def n_faces(self) -> int:
        return self.tris.shape[0]


@dataclass(frozen=True)
class RenderMaps:
    corr: np.ndarray  # (H, W) int32 face index, -1 background
    bary: np.ndarray  # (H, W, 3) barycentric weights of the covering face
    silhouette: np.ndarray  # (H, W) bool
    depth: np.ndarray  # (H, W), +inf on background

    @property
    def shape(self) -> tuple[int, int]:
        return self.corr.shape


def configure_threads() -> int:
    """Apply LWF_THREADS (0 or unset = all cores) to numba; returns thread count."""
    requested = int(os.environ.get("LWF_THREADS", "0") or 0)
    n = numba.config.NUMBA_NUM_THREADS
    if requested > 0:
        n = min(requested, n)
    numba.set_num_threads(n)
    return n


def pixel_centers(H: int, W: int) -> np.ndarray:
    """(H, W, 2) normalized (x, y) coordinates of pixel centers."""
    xs = (2.0 * np.arange(W) + 1.0) / W - 1.0
    ys = (2.0 * np.arange(H) + 1.0) / H - 1.0
    grid = np.empty((H, W, 2))
    grid[..., 0] = xs[None, :]
    grid[..., 1] = ys[:, None]
    return grid


def face_tris(projected, faces) -> FaceTris:
    projected = np.asarray(projected, dtype=np.float64)
    faces = np.asarray(faces)
    if faces.size and (faces.min() < 0 or faces.max() >= projected.shape[0]):
        raise IndexError("face index out of range")
    corners = projected[faces]
    return FaceTris(corners[..., :2].copy(), corners[..., 2].copy())


@numba.njit(cache=True, inline="always")
def _edge(ux, uy, vx, vy, px, py):
    # canonical order: evaluate with the lexicographically smaller endpoint first
    if ux < vx or (ux == vx and uy <= vy):
        return (vx - ux) * (py - uy) - (vy - uy) * (px - ux)
    return -((ux - vx) * (py - vy) - (uy - vy) * (px - vx))


@numba.njit(cache=True, inline="always")
def _owns_edge(dx, dy):
    # top edge (horizontal, interior below) or left edge, for positive orientation
    return dy < 0.0 or (dy == 0.0 and dx > 0.0)


@numba.njit(cache=True, parallel=True)
def _raster_kernel(tris, zs, order, row_lo, row_hi, col_lo, col_hi, H, W, n_bands,
                   corr, bary, depth):
    band_h = (H + n_bands - 1) // n_bands
    for band in numba.prange(n_bands):
        r0 = band * band_h
        r1 = min(H, r0 + band_h)
        for idx in range(order.shape[0]):
            f = order[idx]
            i0 = max(row_lo[f], r0)
            i1 = min(row_hi[f], r1 - 1)
            if i0 > i1:
                continue
            ax, ay = tris[f, 0, 0], tris[f, 0, 1]
            bx, by = tris[f, 1, 0], tris[f, 1, 1]
            cx, cy = tris[f, 2, 0], tris[f, 2, 1]
            area = _edge(ax, ay, bx, by, cx, cy)
            if area == 0.0:
                continue
            s = 1.0 if area > 0 else -1.0
            # oriented edge directions for the fill rule
            own_a = _owns_edge(s * (cx - bx), s * (cy - by))  # edge b->c, opposite a
            own_b = _owns_edge(s * (ax - cx), s * (ay - cy))  # edge c->a, opposite b
            own_c = _owns_edge(s * (bx - ax), s * (by - ay))  # edge a->b, opposite c
            for i in range(i0, i1 + 1):
                py = (2.0 * i + 1.0) / H - 1.0
                for j in range(col_lo[f], col_hi[f] + 1):
                    px = (2.0 * j + 1.0) / W - 1.0
                    ea = _edge(bx, by, cx, cy, px, py)
                    eb = _edge(cx, cy, ax, ay, px, py)
                    ec = _edge(ax, ay, bx, by, px, py)
                    oa, ob, oc = s * ea, s * eb, s * ec
                    if oa < 0.0 or ob < 0.0 or oc < 0.0:
                        continue
                    if (oa == 0.0 and not own_a) or (ob == 0.0 and not own_b) or (
                            oc == 0.0 and not own_c):
                        continue
                    wa, wb, wc = ea / area, eb / area, ec / area
                    z = wa * zs[f, 0] + wb * zs[f, 1] + wc * zs[f, 2]
                    # faces visit in ascending index, so strict < keeps the smaller index on ties
                    if z < depth[i, j]:
                        depth[i, j] = z
                        corr[i, j] = f
                        bary[i, j, 0] = wa
                        bary[i, j, 1] = wb
                        bary[i, j, 2] = wc


def _pixel_bounds(lo, hi, n):
    # pixel k has center (2k+1)/n - 1; widen by one pixel and let the exact test decide
    kmin = np.floor(((lo + 1.0) * n - 1.0) / 2.0) - 1
    kmax = np.ceil(((hi + 1.0) * n - 1.0) / 2.0) + 1
    return np.clip(kmin, 0, n - 1).astype(np.int64), np.clip(kmax, -1, n - 1).astype(np.int64)


def rasterize(ftris: FaceTris, H: int, W: int, face_mask=None) -> RenderMaps:
    """Render the faces of ``ftris`` (optionally only where ``face_mask`` is true).

    Reported face indices always refer to the full face list.
    """
    if H < 1 or W < 1:
        raise ValueError("H and W must be >= 1")
    tris = np.ascontiguousarray(ftris.tris, dtype=np.float64)
    zs = np.ascontiguousarray(ftris.tri_depth, dtype=np.float64)
    nf = tris.shape[0]
    corr = np.full((H, W), -1, dtype=np.int32)
    bary = np.zeros((H, W, 3), dtype=np.float64)
    depth = np.full((H, W), np.inf, dtype=np.float64)
    if nf == 0:
        return RenderMaps(corr, bary, corr >= 0, depth)

    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    area = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    keep = (area != 0) & np.all(np.isfinite(tris), axis=(1, 2)) & np.all(np.isfinite(zs), axis=1)
    if face_mask is not None:
        keep &= np.asarray(face_mask, dtype=bool)
    lo = tris.min(axis=1)
    hi = tris.max(axis=1)
    col_lo, col_hi = _pixel_bounds(lo[:, 0], hi[:, 0], W)
    row_lo, row_hi = _pixel_bounds(lo[:, 1], hi[:, 1], H)
    keep &= (col_lo <= col_hi) & (row_lo <= row_hi)
    order = np.flatnonzero(keep).astype(np.int64)

    n_threads = configure_threads()
    n_bands = max(1, min(H, 4 * n_threads))
    _raster_kernel(tris, zs, order, row_lo, row_hi, col_lo, col_hi, H, W, n_bands,
                   corr, bary, depth)
    return RenderMaps(corr, bary, corr >= 0, depth)


def visibility(corr, n_faces: int) -> np.ndarray:
    """Boolean per face: does the face cover at least one pixel of ``corr``."""
    corr = np.asarray(corr).reshape(-1)
    fg = corr[corr >= 0]
    if fg.size and fg.max() >= n_faces:
        raise ValueError("correspondence map references a face >= n_faces")
    return np.bincount(fg, minlength=n_faces) > 0


def render_mesh(vertices_projected, faces, H: int, W: int, face_mask=None) -> tuple[RenderMaps, FaceTris]:
    ft = face_tris(vertices_projected, faces)
    return rasterize(ft, H, W, face_mask), ft
