"""Articulated body meshes: shape blendshapes, forward kinematics, linear blend
skinning, weak-perspective projection and rigid view changes.

Image convention used throughout the package: x to the right, y downward,
normalized coordinates with (-1, -1) at the top-left image corner. Pixel
(i, j) of an H x W image has its center at ((2j+1)/W - 1, (2i+1)/H - 1).
Depth is camera-space Z; smaller Z is nearer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SMPL_NUM_VERTS = 6890
SMPL_NUM_FACES = 13776
SMPL_NUM_JOINTS = 24
SMPL_NUM_BETAS = 10
SMPL_PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21)

_REQUIRED_KEYS = ("vertices", "faces", "shape_dirs", "joint_regressor", "parents", "skin_weights")


class ModelFormatError(ValueError):
    """Model file could not be parsed into arrays of consistent size."""


class ModelInvariantError(ValueError):
    """Model arrays parsed but violate a structural invariant."""


@dataclass(frozen=True)
class BodyModel:
    template_vertices: np.ndarray  # (N_v, 3)
    faces: np.ndarray  # (N_f, 3) int
    shape_dirs: np.ndarray  # (N_v, 3, n_beta)
    joint_regressor: np.ndarray  # (n_J, N_v)
    parents: np.ndarray  # (n_J,) int, parents[0] == -1
    skin_weights: np.ndarray  # (N_v, n_J)
    head_faces: np.ndarray | None = None
    # Pose-corrective blendshapes are carried through file round trips but never applied.
    pose_dirs: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_verts(self) -> int:
        return self.template_vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def n_joints(self) -> int:
        return self.parents.shape[0]

    @property
    def n_betas(self) -> int:
        return self.shape_dirs.shape[2]

    def validate(self) -> None:
        """Raise ModelInvariantError describing the first violated invariant."""
        nv, nj = self.n_verts, self.n_joints
        if self.template_vertices.ndim != 2 or self.template_vertices.shape[1] != 3:
            raise ModelInvariantError("vertices must have shape (N_v, 3)")
        if not np.all(np.isfinite(self.template_vertices)):
            raise ModelInvariantError("vertices contain non-finite values")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ModelInvariantError("faces must have shape (N_f, 3)")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= nv):
            raise ModelInvariantError(f"face index out of range [0, {nv})")
        if self.shape_dirs.shape[:2] != (nv, 3):
            raise ModelInvariantError("shape_dirs must have shape (N_v, 3, n_beta)")
        if self.joint_regressor.shape != (nj, nv):
            raise ModelInvariantError("joint_regressor must have shape (n_J, N_v)")
        if self.skin_weights.shape != (nv, nj):
            raise ModelInvariantError("skin_weights must have shape (N_v, n_J)")
        if np.any(self.skin_weights < 0):
            raise ModelInvariantError("skin_weights contain negative entries")
        row_sums = self.skin_weights.sum(axis=1)
        bad = np.flatnonzero(np.abs(row_sums - 1.0) > 1e-5)
        if bad.size:
            raise ModelInvariantError(
                f"skin weight row sum != 1 at vertex {bad[0]} (sum={row_sums[bad[0]]:.6g})"
            )
        _check_tree(self.parents)
        if self.head_faces is not None and self.head_faces.size:
            if self.head_faces.min() < 0 or self.head_faces.max() >= self.n_faces:
                raise ModelInvariantError("head_faces index out of range")


@dataclass(frozen=True)
class CameraWP:
    """Weak-perspective camera: x = scale * (X + tx), y = scale * (Y + ty)."""

    scale: float
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.scale) or self.scale <= 0:
            raise ValueError(f"camera scale must be finite and > 0, got {self.scale}")
        if not (np.isfinite(self.tx) and np.isfinite(self.ty)):
            raise ValueError("camera translation must be finite")

    @classmethod
    def from_array(cls, values) -> "CameraWP":
        s, tx, ty = (float(v) for v in values)
        return cls(s, tx, ty)

    def as_array(self) -> np.ndarray:
        return np.array([self.scale, self.tx, self.ty])


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray  # (N_v, 3)
    faces: np.ndarray  # (N_f, 3)


@dataclass(frozen=True)
class BodyParams:
    """Per-image body estimate: pose, shape and camera."""

    theta: np.ndarray
    beta: np.ndarray
    camera: CameraWP

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=np.float64).reshape(-1))

    def with_pose(self, theta) -> "BodyParams":
        return BodyParams(theta, self.beta, self.camera)


def _check_tree(parents: np.ndarray) -> None:
    n = parents.shape[0]
    if n == 0:
        raise ModelInvariantError("model has no joints")
    if parents[0] != -1:
        raise ModelInvariantError("parents[0] must be -1 (root)")
    for j in range(1, n):
        p = parents[j]
        if p < 0 or p >= n or p == j:
            raise ModelInvariantError(f"joint {j} has invalid parent {p}")
    # every chain must reach the root within n steps, otherwise there is a cycle
    for j in range(1, n):
        k, steps = j, 0
        while k != 0:
            k = parents[k]
            steps += 1
            if steps > n:
                raise ModelInvariantError(f"parents contain a cycle through joint {j}")


def _kinematic_order(parents: np.ndarray) -> list[int]:
    children: dict[int, list[int]] = {}
    for j in range(1, len(parents)):
        children.setdefault(int(parents[j]), []).append(j)
    order, stack = [], [0]
    while stack:
        j = stack.pop()
        order.append(j)
        stack.extend(reversed(children.get(j, [])))
    return order


def rodrigues(axis_angle) -> np.ndarray:
    """Axis-angle vectors (..., 3) to rotation matrices (..., 3, 3)."""
    aa = np.asarray(axis_angle, dtype=np.float64)
    angle = np.linalg.norm(aa, axis=-1)
    small = angle < 1e-8
    safe = np.where(small, 1.0, angle)
    k = aa / safe[..., None]
    kx, ky, kz = k[..., 0], k[..., 1], k[..., 2]
    zero = np.zeros_like(kx)
    K = np.stack(
        [
            np.stack([zero, -kz, ky], -1),
            np.stack([kz, zero, -kx], -1),
            np.stack([-ky, kx, zero], -1),
        ],
        -2,
    )
    s = np.sin(angle)[..., None, None]
    c = np.cos(angle)[..., None, None]
    eye = np.broadcast_to(np.eye(3), K.shape)
    R = eye + s * K + (1 - c) * (K @ K)
    return np.where(small[..., None, None], eye, R)


def _pose_array(model: BodyModel, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.size != 3 * model.n_joints:
        raise ValueError(f"pose has {theta.size} values, model expects {3 * model.n_joints}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("pose contains non-finite values")
    return theta.reshape(model.n_joints, 3)


def _shape_array(model: BodyModel, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    if beta.size != model.n_betas:
        raise ValueError(f"shape has {beta.size} values, model expects {model.n_betas}")
    if not np.all(np.isfinite(beta)):
        raise ValueError("shape contains non-finite values")
    return beta


def joint_transforms(model: BodyModel, theta, beta) -> tuple[np.ndarray, np.ndarray]:
    """Return (rest joint locations (n_J, 3), world transforms (n_J, 4, 4))."""
    theta = _pose_array(model, theta)
    beta = _shape_array(model, beta)
    shaped = model.template_vertices + model.shape_dirs @ beta
    joints = model.joint_regressor @ shaped
    rots = rodrigues(theta)
    world = np.zeros((model.n_joints, 4, 4))
    for j in _kinematic_order(model.parents):
        local = np.eye(4)
        local[:3, :3] = rots[j]
        p = model.parents[j]
        local[:3, 3] = joints[j] if p < 0 else joints[j] - joints[p]
        world[j] = local if p < 0 else world[p] @ local
    return joints, world


def skin(model: BodyModel, theta, beta) -> Mesh:
    """Pose and shape the template by linear blend skinning (no pose blendshapes)."""
    beta_arr = _shape_array(model, beta)
    shaped = model.template_vertices + model.shape_dirs @ beta_arr
    joints, world = joint_transforms(model, theta, beta_arr)
    # relative transforms map rest-pose positions to posed positions
    rel = world.copy()
    rel[:, :3, 3] -= np.einsum("jab,jb->ja", world[:, :3, :3], joints)
    blended = np.einsum("vj,jab->vab", model.skin_weights, rel[:, :3, :])
    verts = np.einsum("vab,vb->va", blended[:, :, :3], shaped) + blended[:, :, 3]
    return Mesh(verts, model.faces)


def project(vertices, cam: CameraWP) -> np.ndarray:
    """Weak-perspective projection; returns (N, 3) with image x, y and depth z."""
    if isinstance(vertices, Mesh):
        vertices = vertices.vertices
    v = np.asarray(vertices, dtype=np.float64)
    out = np.empty_like(v)
    out[:, 0] = cam.scale * (v[:, 0] + cam.tx)
    out[:, 1] = cam.scale * (v[:, 1] + cam.ty)
    out[:, 2] = v[:, 2]
    return out


def is_rotation(R, tol: float = 1e-6) -> bool:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(np.abs(R.T @ R - np.eye(3)).max() <= tol and abs(np.linalg.det(R) - 1) <= tol)


def rigid_transform(mesh: Mesh, R, t) -> Mesh:
    """Row-vector rigid motion: v' = v @ R + t."""
    R = np.asarray(R, dtype=np.float64)
    if not is_rotation(R):
        raise ValueError("R is not a proper rotation matrix")
    t = np.asarray(t, dtype=np.float64).reshape(3)
    return Mesh(mesh.vertices @ R + t, mesh.faces)


# --- synthetic assets ------------------------------------------------------


def _capsule(n_rings: int, n_around: int, ring_y: np.ndarray, radius, pole_y: tuple[float, float]):
    """Closed tube with pole caps; returns vertices and outward-wound faces."""
    phi = 2 * np.pi * np.arange(n_around) / n_around
    radius = np.broadcast_to(np.asarray(radius, dtype=np.float64), (n_rings,))
    ring = np.stack([np.cos(phi), np.zeros_like(phi), np.sin(phi)], -1)
    verts = [np.array([[0.0, pole_y[0], 0.0]])]
    for k in range(n_rings):
        v = ring * radius[k]
        v[:, 1] = ring_y[k]
        verts.append(v)
    verts.append(np.array([[0.0, pole_y[1], 0.0]]))
    verts = np.concatenate(verts)

    def rid(k, a):
        return 1 + k * n_around + (a % n_around)

    faces = []
    bottom, top = 0, 1 + n_rings * n_around
    for a in range(n_around):
        faces.append((bottom, rid(0, a), rid(0, a + 1)))
    for k in range(n_rings - 1):
        for a in range(n_around):
            faces.append((rid(k, a), rid(k + 1, a), rid(k + 1, a + 1)))
            faces.append((rid(k, a), rid(k + 1, a + 1), rid(k, a + 1)))
    for a in range(n_around):
        faces.append((top, rid(n_rings - 1, a + 1), rid(n_rings - 1, a)))
    return verts, np.asarray(faces, dtype=np.int64)


def synth_model(n_segments: int = 2) -> BodyModel:
    """Two-joint capsule figure used as a deterministic test asset.

    The tube spans Y in [-1, 1] with 2*n_segments+1 rings of 4*n_segments
    vertices (radius 0.3) and caps at Y = +-1.3. Joint 0 sits at the bottom
    ring center, joint 1 at the middle ring center (origin). Vertices above
    Y = 0 are hard-skinned to joint 1. The single shape direction scales Y.
    The top cap fan is shipped as the head partition.
    """
    if n_segments < 1:
        raise ValueError("n_segments must be >= 1")
    n_rings = 2 * n_segments + 1
    n_around = 4 * n_segments
    ring_y = np.linspace(-1.0, 1.0, n_rings)
    verts, faces = _capsule(n_rings, n_around, ring_y, 0.3, (-1.3, 1.3))
    nv = len(verts)

    regressor = np.zeros((2, nv))
    regressor[0, 1 : 1 + n_around] = 1.0 / n_around
    mid = 1 + n_segments * n_around
    regressor[1, mid : mid + n_around] = 1.0 / n_around

    skin_w = np.zeros((nv, 2))
    upper = verts[:, 1] > 0
    skin_w[~upper, 0] = 1.0
    skin_w[upper, 1] = 1.0

    shape_dirs = np.zeros((nv, 3, 1))
    shape_dirs[:, 1, 0] = verts[:, 1]

    top = nv - 1
    head = np.flatnonzero((faces == top).any(axis=1))
    model = BodyModel(verts, faces, shape_dirs, regressor, np.array([-1, 0]), skin_w, head)
    model.validate()
    return model


SYNTH_CAMERA = CameraWP(0.7, 0.0, 0.0)


def smpl_sized_model() -> BodyModel:
    """Procedural stand-in with SMPL dimensions (6890 verts, 13776 faces, 24 joints, 10 betas).

    A 123-ring x 56-around capsule whose 24 joints sit on evenly spaced rings
    and follow the SMPL kinematic tree. Vertices blend linearly between the
    two nearest joints along the body axis.
    """
    n_rings, n_around = 123, 56
    ring_y = np.linspace(-0.85, 0.85, n_rings)
    t = np.linspace(0.0, 1.0, n_rings)
    radius = 0.12 + 0.05 * np.sin(np.pi * t) + 0.02 * np.sin(6 * np.pi * t)
    verts, faces = _capsule(n_rings, n_around, ring_y, radius, (-0.9, 0.9))
    nv = len(verts)
    nj = SMPL_NUM_JOINTS

    joint_rings = np.round(np.linspace(0, n_rings - 1, nj)).astype(int)
    regressor = np.zeros((nj, nv))
    for j, k in enumerate(joint_rings):
        start = 1 + k * n_around
        regressor[j, start : start + n_around] = 1.0 / n_around

    joint_y = ring_y[joint_rings]
    y = np.clip(verts[:, 1], joint_y[0], joint_y[-1])
    hi = np.clip(np.searchsorted(joint_y, y, side="right"), 1, nj - 1)
    lo = hi - 1
    frac = (y - joint_y[lo]) / (joint_y[hi] - joint_y[lo])
    skin_w = np.zeros((nv, nj))
    rows = np.arange(nv)
    skin_w[rows, lo] = 1.0 - frac
    skin_w[rows, hi] += frac

    shape_dirs = np.zeros((nv, 3, SMPL_NUM_BETAS))
    shape_dirs[:, 1, 0] = verts[:, 1]
    shape_dirs[:, 0, 1] = verts[:, 0]
    shape_dirs[:, 2, 2] = verts[:, 2]
    for b in range(3, SMPL_NUM_BETAS):
        bump = np.sin((b - 1) * np.pi * (verts[:, 1] + 0.9) / 1.8)
        shape_dirs[:, 0, b] = 0.1 * bump * verts[:, 0]
        shape_dirs[:, 2, b] = 0.1 * bump * verts[:, 2]

    head = np.flatnonzero((faces == nv - 1).any(axis=1))
    model = BodyModel(verts, faces, shape_dirs, regressor, np.array(SMPL_PARENTS), skin_w, head)
    model.validate()
    return model


# --- JSON model files ------------------------------------------------------


def model_to_dict(model: BodyModel) -> dict:
    d = {
        "vertices": model.template_vertices.reshape(-1).tolist(),
        "faces": model.faces.reshape(-1).astype(int).tolist(),
        "shape_dirs": model.shape_dirs.reshape(-1).tolist(),
        "joint_regressor": model.joint_regressor.reshape(-1).tolist(),
        "parents": [int(p) for p in model.parents],
        "skin_weights": model.skin_weights.reshape(-1).tolist(),
    }
    if model.head_faces is not None:
        d["head_faces"] = [int(f) for f in model.head_faces]
    if model.pose_dirs is not None:
        d["pose_dirs"] = model.pose_dirs.reshape(-1).tolist()
    return d


def save_model(model: BodyModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def model_from_dict(d: dict) -> BodyModel:
    if not isinstance(d, dict):
        raise ModelFormatError("model file must contain a JSON object")
    missing = [k for k in _REQUIRED_KEYS if k not in d]
    if missing:
        raise ModelFormatError(f"missing field(s): {', '.join(missing)}")
    try:
        verts = np.asarray(d["vertices"], dtype=np.float64)
        faces = np.asarray(d["faces"], dtype=np.int64)
        shape_dirs = np.asarray(d["shape_dirs"], dtype=np.float64)
        regressor = np.asarray(d["joint_regressor"], dtype=np.float64)
        parents = np.asarray(d["parents"], dtype=np.int64)
        skin_w = np.asarray(d["skin_weights"], dtype=np.float64)
        head = np.asarray(d["head_faces"], dtype=np.int64) if "head_faces" in d else None
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"non-numeric model data: {exc}") from None

    for name, arr in (("vertices", verts), ("faces", faces), ("shape_dirs", shape_dirs),
                      ("joint_regressor", regressor), ("parents", parents),
                      ("skin_weights", skin_w)):
        if arr.ndim != 1:
            raise ModelFormatError(f"{name} must be a flat array")
    if verts.size % 3:
        raise ModelFormatError("vertices length is not a multiple of 3")
    if faces.size % 3:
        raise ModelFormatError("faces length is not a multiple of 3")
    nv, nj = verts.size // 3, parents.size
    if nv == 0 or shape_dirs.size % (3 * nv):
        raise ModelFormatError("shape_dirs length is not a multiple of 3*N_v")
    if regressor.size != nj * nv:
        raise ModelFormatError(f"joint_regressor length {regressor.size} != n_J*N_v = {nj * nv}")
    if skin_w.size != nv * nj:
        raise ModelFormatError(f"skin_weights length {skin_w.size} != N_v*n_J = {nv * nj}")

    pose_dirs = None
    if "pose_dirs" in d:
        pose_dirs = np.asarray(d["pose_dirs"], dtype=np.float64)

    model = BodyModel(
        verts.reshape(nv, 3),
        faces.reshape(-1, 3),
        shape_dirs.reshape(nv, 3, -1),
        regressor.reshape(nj, nv),
        parents,
        skin_w.reshape(nv, nj),
        head,
        pose_dirs,
    )
    model.validate()
    return model


def load_model(path) -> BodyModel:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"invalid JSON in {path}: {exc}") from None
    return model_from_dict(d)
