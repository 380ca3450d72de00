"""Pinhole cameras, view-set IO, and Gaussian-to-screen projection.

Conventions: camera frame is x right, y down, z forward; a point p_cam with
z > 0 is in front of the camera and lands at pixel
(fx * x / z + cx, fy * y / z + cy). Pixel centers sit at integer coordinates.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import GaussianScene

NEAR_PLANE = 0.2        # camera-space depth below which splats are culled
LOWPASS_PX2 = 0.3       # screen-space variance floor added to each axis
CULL_SIGMA = 3.0        # screen-bounds cull at this many standard deviations

# Real spherical harmonic basis constants, degrees 0..3.
SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)


class ViewsValidationError(ValueError):
    """Views file fails the schema or geometric sanity checks."""


@dataclass(frozen=True)
class CameraView:
    """One pinhole view: intrinsics plus a rigid world-to-camera transform."""

    name: str
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    world_to_camera: np.ndarray  # (4, 4) float64, row-major rigid transform

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ViewsValidationError(
                f"view {self.name!r}: width/height must be >= 1, "
                f"got {self.width}x{self.height}"
            )
        if not (self.fx > 0 and self.fy > 0):
            raise ViewsValidationError(
                f"view {self.name!r}: focal lengths must be positive, got fx={self.fx}, fy={self.fy}"
            )
        w2c = np.asarray(self.world_to_camera, dtype=np.float64)
        if w2c.shape != (4, 4):
            raise ViewsValidationError(
                f"view {self.name!r}: world_to_camera must be 4x4, got {w2c.shape}"
            )
        r = w2c[:3, :3]
        err = np.abs(r @ r.T - np.eye(3)).max()
        if err > 1e-4:
            raise ViewsValidationError(
                f"view {self.name!r}: rotation block not orthonormal (max deviation {err:.3e})"
            )
        if np.abs(w2c[3] - np.array([0.0, 0.0, 0.0, 1.0])).max() > 1e-6:
            raise ViewsValidationError(
                f"view {self.name!r}: bottom row of world_to_camera must be [0,0,0,1]"
            )
        object.__setattr__(self, "world_to_camera", w2c)

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    @property
    def camera_center(self) -> np.ndarray:
        """Camera origin in world coordinates."""
        return -self.rotation.T @ self.translation


@dataclass(frozen=True)
class ViewSet:
    views: tuple[CameraView, ...]

    def __post_init__(self):
        if len(self.views) == 0:
            raise ViewsValidationError("view set is empty")
        names = [v.name for v in self.views]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ViewsValidationError(f"duplicate view names: {dupes}")
        object.__setattr__(self, "views", tuple(self.views))

    def __iter__(self):
        return iter(self.views)

    def __len__(self) -> int:
        return len(self.views)

    def __getitem__(self, i) -> CameraView:
        return self.views[i]


_REQUIRED_KEYS = ("name", "width", "height", "fx", "fy", "cx", "cy", "world_to_camera")


def load_views(path) -> ViewSet:
    """Load a JSON array of view records.

    Each record needs name, width, height, fx, fy, cx, cy, and a 16-element
    row-major world_to_camera. Rotation blocks must be orthonormal to 1e-4.
    """
    path = str(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ViewsValidationError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, list):
        raise ViewsValidationError(f"{path}: top level must be a JSON array of views")
    views = []
    for i, rec in enumerate(doc):
        if not isinstance(rec, dict):
            raise ViewsValidationError(f"{path}: view {i} is not an object")
        missing = [k for k in _REQUIRED_KEYS if k not in rec]
        if missing:
            raise ViewsValidationError(f"{path}: view {i} missing keys {missing}")
        w2c = rec["world_to_camera"]
        if not isinstance(w2c, list) or len(w2c) != 16:
            raise ViewsValidationError(
                f"{path}: view {i} world_to_camera must be a 16-element row-major list"
            )
        try:
            views.append(
                CameraView(
                    name=str(rec["name"]),
                    width=int(rec["width"]),
                    height=int(rec["height"]),
                    fx=float(rec["fx"]),
                    fy=float(rec["fy"]),
                    cx=float(rec["cx"]),
                    cy=float(rec["cy"]),
                    world_to_camera=np.array(w2c, dtype=np.float64).reshape(4, 4),
                )
            )
        except ViewsValidationError as exc:
            raise ViewsValidationError(f"{path}: view {i}: {exc}") from None
    return ViewSet(views=tuple(views))


def save_views(views: ViewSet, path) -> None:
    doc = [
        {
            "name": v.name,
            "width": v.width,
            "height": v.height,
            "fx": v.fx,
            "fy": v.fy,
            "cx": v.cx,
            "cy": v.cy,
            "world_to_camera": [float(x) for x in v.world_to_camera.reshape(16)],
        }
        for v in views
    ]
    with open(str(path), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Batch quaternion (w, x, y, z) to rotation matrix. Normalizes first.

    Parameters
    ----------
    q : (M, 4) array

    Returns
    -------
    (M, 3, 3) array in the dtype of ``q``.
    """
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    m = np.empty(q.shape[:1] + (3, 3), dtype=q.dtype)
    m[:, 0, 0] = 1 - 2 * (y * y + z * z)
    m[:, 0, 1] = 2 * (x * y - w * z)
    m[:, 0, 2] = 2 * (x * z + w * y)
    m[:, 1, 0] = 2 * (x * y + w * z)
    m[:, 1, 1] = 1 - 2 * (x * x + z * z)
    m[:, 1, 2] = 2 * (y * z - w * x)
    m[:, 2, 0] = 2 * (x * z - w * y)
    m[:, 2, 1] = 2 * (y * z + w * x)
    m[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def eval_sh(coeffs: np.ndarray, dirs: np.ndarray, degree: int) -> np.ndarray:
    """Evaluate real SH radiance along unit directions.

    Parameters
    ----------
    coeffs : (M, 16, 3) array, full degree-3 coefficient block per Gaussian.
    dirs : (M, 3) array of unit vectors.
    degree : 0..3, how many bands to evaluate.

    Returns
    -------
    (M, 3) raw radiance; callers add the 0.5 offset and clamp.
    """
    if not 0 <= degree <= 3:
        raise ValueError(f"sh degree must be in 0..3, got {degree}")
    out = SH_C0 * coeffs[:, 0, :]
    if degree >= 1:
        x = dirs[:, 0:1]
        y = dirs[:, 1:2]
        z = dirs[:, 2:3]
        out = out - SH_C1 * y * coeffs[:, 1, :] + SH_C1 * z * coeffs[:, 2, :] - SH_C1 * x * coeffs[:, 3, :]
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        out = (
            out
            + SH_C2[0] * xy * coeffs[:, 4, :]
            + SH_C2[1] * yz * coeffs[:, 5, :]
            + SH_C2[2] * (2 * zz - xx - yy) * coeffs[:, 6, :]
            + SH_C2[3] * xz * coeffs[:, 7, :]
            + SH_C2[4] * (xx - yy) * coeffs[:, 8, :]
        )
    if degree >= 3:
        out = (
            out
            + SH_C3[0] * y * (3 * xx - yy) * coeffs[:, 9, :]
            + SH_C3[1] * xy * z * coeffs[:, 10, :]
            + SH_C3[2] * y * (4 * zz - xx - yy) * coeffs[:, 11, :]
            + SH_C3[3] * z * (2 * zz - 3 * xx - 3 * yy) * coeffs[:, 12, :]
            + SH_C3[4] * x * (4 * zz - xx - yy) * coeffs[:, 13, :]
            + SH_C3[5] * z * (xx - yy) * coeffs[:, 14, :]
            + SH_C3[6] * x * (xx - 3 * yy) * coeffs[:, 15, :]
        )
    return out


@dataclass(eq=False)
class ProjectedGaussians:
    """Screen-space splats surviving culling, parallel arrays keyed by ``ids``."""

    ids: np.ndarray      # (K,) int64, original scene ids
    mean2d: np.ndarray   # (K, 2) pixel coordinates
    cov2d: np.ndarray    # (K, 2, 2) screen covariance, low-pass floored
    depth: np.ndarray    # (K,) camera-space z
    color: np.ndarray    # (K, 3) view-dependent RGB, clamped >= 0
    opacity: np.ndarray  # (K,) sigmoid-activated

    def __len__(self) -> int:
        return self.ids.shape[0]


def sh_coefficient_block(scene: GaussianScene) -> np.ndarray:
    """Assemble the (M, 16, 3) coefficient block from flat scene storage.

    On-disk rest coefficients are channel-major (15 for R, then G, then B).
    """
    m = len(scene)
    coeffs = np.empty((m, 16, 3), dtype=np.float32)
    coeffs[:, 0, :] = scene.sh_dc
    coeffs[:, 1:, :] = scene.sh_rest.reshape(m, 3, 15).transpose(0, 2, 1)
    return coeffs


def project(
    scene: GaussianScene,
    view: CameraView,
    sh_degree: int = 3,
    *,
    dtype=np.float32,
    lowpass: float = LOWPASS_PX2,
    near: float = NEAR_PLANE,
) -> ProjectedGaussians:
    """Project a scene into one view via a first-order (Jacobian) splat map.

    3D covariance is rebuilt from quaternion and exp(log_scale); the screen
    covariance is J W Sigma W^T J^T plus a ``lowpass`` floor on the diagonal.
    Culling drops splats behind ``near``, splats whose 3-sigma screen bounds
    miss the image, and splats with degenerate screen covariance.

    All arithmetic runs in ``dtype`` (float32 by default, float64 for
    validation paths).
    """
    w2c = view.world_to_camera.astype(dtype)
    rot_w2c = w2c[:3, :3]
    pos = scene.positions.astype(dtype)
    t = pos @ rot_w2c.T + w2c[:3, 3]
    depth = t[:, 2]

    keep = depth > dtype(near)
    ids = np.nonzero(keep)[0].astype(np.int64)
    if ids.size == 0:
        return ProjectedGaussians(
            ids=ids,
            mean2d=np.zeros((0, 2), dtype),
            cov2d=np.zeros((0, 2, 2), dtype),
            depth=np.zeros((0,), dtype),
            color=np.zeros((0, 3), dtype),
            opacity=np.zeros((0,), dtype),
        )
    t = t[keep]
    depth = depth[keep]

    fx = dtype(view.fx)
    fy = dtype(view.fy)
    inv_z = 1.0 / depth
    u = fx * t[:, 0] * inv_z + dtype(view.cx)
    v = fy * t[:, 1] * inv_z + dtype(view.cy)

    # Sigma = R diag(exp(s))^2 R^T, built from raw attributes
    rmat = quat_to_rotmat(scene.rotation[ids].astype(dtype))
    scales = np.exp(scene.log_scale[ids].astype(dtype))
    msqrt = rmat * scales[:, None, :]
    sigma = msqrt @ msqrt.transpose(0, 2, 1)

    # Jacobian of the pinhole map at the splat center
    k = ids.size
    jac = np.zeros((k, 2, 3), dtype=dtype)
    jac[:, 0, 0] = fx * inv_z
    jac[:, 0, 2] = -fx * t[:, 0] * inv_z * inv_z
    jac[:, 1, 1] = fy * inv_z
    jac[:, 1, 2] = -fy * t[:, 1] * inv_z * inv_z
    jw = jac @ rot_w2c[None, :, :]
    cov2d = jw @ sigma @ jw.transpose(0, 2, 1)
    cov2d[:, 0, 0] += dtype(lowpass)
    cov2d[:, 1, 1] += dtype(lowpass)

    # view-dependent color, offset and clamped at zero
    cam_center = (-view.rotation.T @ view.translation).astype(dtype)
    dirs = pos[ids] - cam_center
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    norms[norms == 0] = 1
    dirs = dirs / norms
    color = eval_sh(sh_coefficient_block(scene)[ids].astype(dtype), dirs, sh_degree)
    color = np.maximum(color + dtype(0.5), dtype(0.0))

    opacity = 1.0 / (1.0 + np.exp(-scene.opacity_logit[ids].astype(dtype)))

    # screen-bounds cull at CULL_SIGMA standard deviations, degenerate skip
    var_x = cov2d[:, 0, 0]
    var_y = cov2d[:, 1, 1]
    det = var_x * var_y - cov2d[:, 0, 1] * cov2d[:, 1, 0]
    finite = np.isfinite(var_x) & np.isfinite(var_y) & np.isfinite(det)
    ok = finite & (det > 0) & (var_x > 0) & (var_y > 0)
    with np.errstate(invalid="ignore"):
        rx = dtype(CULL_SIGMA) * np.sqrt(np.where(ok, var_x, 1))
        ry = dtype(CULL_SIGMA) * np.sqrt(np.where(ok, var_y, 1))
    ok &= (u + rx >= 0) & (u - rx <= view.width - 1) & (v + ry >= 0) & (v - ry <= view.height - 1)

    mean2d = np.stack([u, v], axis=1)
    return ProjectedGaussians(
        ids=ids[ok],
        mean2d=mean2d[ok],
        cov2d=cov2d[ok],
        depth=depth[ok],
        color=color[ok],
        opacity=opacity[ok],
    )
