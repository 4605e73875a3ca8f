"""Pinhole camera model, relative poses and per-hypothesis warping.

Conventions: pixel coordinates are (u, v) = (column, row) with pixel centers
at integer coordinates; grids are indexed [row, col].  Extrinsics map world
to camera coordinates (cam = R @ world + t), depths are measured along the
optical axis in millimetres.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import BehindCamera, ConfigError, InvalidConfig

# points closer than this to the camera plane count as behind it (mm)
MIN_DEPTH_MM = 1e-6

ORTHO_TOL = 1e-9


class PixelCoord(NamedTuple):
    u: float
    v: float


def _check_rotation(rotation: np.ndarray, what: str) -> None:
    if rotation.shape != (3, 3):
        raise InvalidConfig(f"{what}: rotation must be 3x3, got {rotation.shape}")
    err = np.abs(rotation.T @ rotation - np.eye(3)).max()
    if not np.isfinite(rotation).all() or err > 1e-6:
        raise InvalidConfig(f"{what}: rotation not orthonormal (residual {err:.3e})")


@dataclass(frozen=True, eq=False)
class CameraView:
    """One calibrated image: intrinsics, world-to-camera pose and depth range."""

    intrinsics: np.ndarray   # 3x3, pixels
    rotation: np.ndarray     # 3x3, world-to-camera
    translation: np.ndarray  # (3,), mm, world-to-camera
    depth_min: float
    depth_max: float
    width: int
    height: int

    def __post_init__(self):
        K = np.asarray(self.intrinsics, dtype=float)
        R = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "intrinsics", K)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if K.shape != (3, 3) or not np.isfinite(K).all():
            raise InvalidConfig("intrinsics must be a finite 3x3 matrix")
        if K[0, 0] <= 0 or K[1, 1] <= 0 or abs(np.linalg.det(K)) < 1e-12:
            raise InvalidConfig("intrinsics must be invertible with positive focals")
        _check_rotation(R, "CameraView")
        if not (0 < self.depth_min < self.depth_max):
            raise InvalidConfig(
                f"need 0 < depth_min < depth_max, got [{self.depth_min}, {self.depth_max}]"
            )
        if self.width < 1 or self.height < 1:
            raise InvalidConfig("image dimensions must be positive")

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def scaled(self, factor: float) -> "CameraView":
        """View with intrinsics and image size scaled by `factor` (e.g. 1/8).

        Uses the pixel-center convention: a scaled pixel (i, j) maps to the
        full-resolution point ((j+0.5)/factor - 0.5, (i+0.5)/factor - 0.5),
        i.e. the centre of the block it was downsampled from.
        """
        K = self.intrinsics.copy()
        K[:2, :] *= factor
        K[0, 2] += (factor - 1.0) / 2.0
        K[1, 2] += (factor - 1.0) / 2.0
        return CameraView(
            intrinsics=K,
            rotation=self.rotation,
            translation=self.translation,
            depth_min=self.depth_min,
            depth_max=self.depth_max,
            width=int(round(self.width * factor)),
            height=int(round(self.height * factor)),
        )

    def image_to_world(self) -> np.ndarray:
        """4x4 matrix mapping homogeneous image coords to world coords."""
        K4 = np.eye(4)
        K4[:3, :3] = self.intrinsics
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return np.linalg.inv(K4 @ T)


@dataclass(frozen=True, eq=False)
class RelativePose:
    """Rigid transform taking source-camera coordinates to reference-camera ones."""

    rotation: np.ndarray     # 3x3
    translation: np.ndarray  # (3,), mm

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        _check_rotation(R, "RelativePose")

    def inverse(self) -> "RelativePose":
        return RelativePose(self.rotation.T, -self.rotation.T @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (3,) or (3, N)."""
        p = np.asarray(points, dtype=float)
        if p.ndim == 1:
            return self.rotation @ p + self.translation
        return self.rotation @ p + self.translation[:, None]


def relative_pose(src: CameraView, ref: CameraView) -> RelativePose:
    """Pose mapping src-camera coordinates into the ref camera frame."""
    R = ref.rotation @ src.rotation.T
    t = ref.translation - R @ src.translation
    return RelativePose(R, t)


def warp_pixels(u, v, depth, pose: RelativePose, k_from: np.ndarray, k_to: np.ndarray):
    """Vectorised per-hypothesis warp between two views.

    Lifts pixels (u, v) of the `k_from` camera to 3D at `depth` along their
    rays, applies `pose`, and projects with `k_to`.  Arrays broadcast
    together.  Returns (u2, v2, depth2, in_front); behind-camera points get
    in_front=False and non-finite coordinates rather than raising.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    depth = np.asarray(depth, dtype=float)
    shape = np.broadcast_shapes(u.shape, v.shape, depth.shape)
    u, v, depth = (np.broadcast_to(a, shape) for a in (u, v, depth))

    k_inv = np.linalg.inv(k_from)
    pix = np.stack([u.ravel(), v.ravel(), np.ones(u.size)], axis=0)  # (3, N)
    pts = (k_inv @ pix) * depth.ravel()[None, :]
    pts = pose.rotation @ pts + pose.translation[:, None]
    z = pts[2].copy()
    proj = k_to @ pts
    in_front = z > MIN_DEPTH_MM
    with np.errstate(divide="ignore", invalid="ignore"):
        u2 = np.where(in_front, proj[0] / proj[2], np.nan)
        v2 = np.where(in_front, proj[1] / proj[2], np.nan)
    return (
        u2.reshape(shape),
        v2.reshape(shape),
        z.reshape(shape),
        in_front.reshape(shape),
    )


def forward_warp_coord(
    c: PixelCoord,
    d: float,
    pose: RelativePose,
    k_src: np.ndarray,
    k_ref: np.ndarray,
) -> PixelCoord:
    """Reference-view pixel of the 3D point at depth `d` along the source ray.

    The projection divides by the third homogeneous component; out-of-frame
    results are returned unclamped.  Raises BehindCamera when the transformed
    point has depth <= MIN_DEPTH_MM.
    """
    if d <= 0:
        raise InvalidConfig(f"depth must be positive, got {d}")
    u2, v2, z, ok = warp_pixels(c[0], c[1], d, pose, k_src, k_ref)
    if not ok:
        raise BehindCamera(f"warped point depth {float(z):.3g} mm is behind the camera")
    return PixelCoord(float(u2), float(v2))


def backward_lookup(
    c_ref: PixelCoord,
    d: float,
    pose_ref_to_src: RelativePose,
    k_ref: np.ndarray,
    k_src: np.ndarray,
) -> PixelCoord:
    """Source-image sampling coordinate for a reference pixel at depth `d`.

    This is the per-reference-pixel lookup used when warping source data onto
    a hypothesis plane; it is the mutual inverse of forward_warp_coord given
    inverse poses.
    """
    return forward_warp_coord(c_ref, d, pose_ref_to_src, k_ref, k_src)


def bilinear_sample(grid: np.ndarray, u, v):
    """Bilinear interpolation of `grid` at continuous pixel coords (u, v).

    `grid` is (H, W) or (C, H, W); u/v may be scalars or arrays (broadcast
    together).  Coordinates outside [0, W-1] x [0, H-1] yield value 0 and a
    False validity flag.  Returns (values, valid) where values has the
    channel axis first for (C, H, W) grids.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 2:
        return _bilinear(grid[None], u, v, squeeze=True)
    if grid.ndim == 3:
        return _bilinear(grid, u, v, squeeze=False)
    raise InvalidConfig(f"grid must be 2D or 3D, got ndim={grid.ndim}")


def _bilinear(grid: np.ndarray, u, v, squeeze: bool):
    c, h, w = grid.shape
    if h == 0 or w == 0:
        raise InvalidConfig("cannot sample an empty grid")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    shape = np.broadcast_shapes(u.shape, v.shape)
    u = np.broadcast_to(u, shape).ravel()
    v = np.broadcast_to(v, shape).ravel()

    with np.errstate(invalid="ignore"):
        valid = (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    us = np.where(valid, u, 0.0)
    vs = np.where(valid, v, 0.0)
    u0 = np.floor(us).astype(int)
    v0 = np.floor(vs).astype(int)
    u0 = np.minimum(u0, w - 2) if w > 1 else u0 * 0
    v0 = np.minimum(v0, h - 2) if h > 1 else v0 * 0
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = us - u0
    fv = vs - v0

    flat = grid.reshape(c, -1)
    idx00 = v0 * w + u0
    idx01 = v0 * w + u1
    idx10 = v1 * w + u0
    idx11 = v1 * w + u1
    vals = (
        flat[:, idx00] * ((1 - fu) * (1 - fv))
        + flat[:, idx01] * (fu * (1 - fv))
        + flat[:, idx10] * ((1 - fu) * fv)
        + flat[:, idx11] * (fu * fv)
    )
    vals = np.where(valid[None, :], vals, 0.0)
    vals = vals.reshape((c,) + shape)
    valid = valid.reshape(shape)
    if squeeze:
        vals = vals[0]
    if shape == ():
        return (vals if not squeeze else float(vals)), bool(valid)
    return vals, valid


def bilinear_resize(grid: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Resize an (H, W) or (C, H, W) grid with align-corners bilinear mapping."""
    grid = np.asarray(grid, dtype=float)
    two_d = grid.ndim == 2
    if two_d:
        grid = grid[None]
    _, h, w = grid.shape
    oh, ow = out_hw
    if oh < 1 or ow < 1:
        raise InvalidConfig(f"invalid target size {out_hw}")
    vs = np.linspace(0.0, h - 1.0, oh) if oh > 1 else np.zeros(1)
    us = np.linspace(0.0, w - 1.0, ow) if ow > 1 else np.zeros(1)
    uu, vv = np.meshgrid(us, vs)
    out, _ = _bilinear(grid, uu, vv, squeeze=False)
    return out[0] if two_d else out


def pixel_grid(height: int, width: int):
    """Integer pixel-center coordinate grids (u, v), each (H, W)."""
    v, u = np.mgrid[0:height, 0:width]
    return u.astype(float), v.astype(float)


# --- camera text files (MVSNet-style convention) ---------------------------

# depth count assumed when the depth line carries only (min, interval)
DEFAULT_DEPTH_NUM = 192


def load_camera_text(path, width: int, height: int) -> CameraView:
    """Read an extrinsic/intrinsic/depth-range camera text file.

    Layout: an ``extrinsic`` block (4 rows of 4: world-to-camera), an
    ``intrinsic`` block (3 rows of 3) and a final line with 2-4 numbers:
    ``depth_min depth_interval [depth_num [depth_max]]``.  Whitespace and
    blank lines between blocks are ignored.  With fewer than 4 numbers,
    depth_max = depth_min + interval * (depth_num - 1).
    """
    with open(path, "r", encoding="ascii") as fh:
        tokens = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            tokens.extend(line.split())
    words = [t.lower() for t in tokens]
    try:
        ei = words.index("extrinsic")
        ii = words.index("intrinsic")
    except ValueError as exc:
        raise ConfigError(f"{path}: missing extrinsic/intrinsic block") from exc
    return _parse_camera_tokens(tokens, ei, ii, width, height)


def _parse_camera_tokens(tokens, ei, ii, width, height) -> CameraView:
    try:
        ext = np.array([float(t) for t in tokens[ei + 1 : ei + 17]]).reshape(4, 4)
        intr = np.array([float(t) for t in tokens[ii + 1 : ii + 10]]).reshape(3, 3)
        depth_vals = [float(t) for t in tokens[ii + 10 :]]
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"malformed camera file: {exc}") from exc
    if len(depth_vals) < 2:
        raise ConfigError("camera file needs a 'depth_min depth_interval' line")
    dmin, dint = depth_vals[0], depth_vals[1]
    if len(depth_vals) >= 4:
        dmax = depth_vals[3]
    else:
        num = depth_vals[2] if len(depth_vals) == 3 else DEFAULT_DEPTH_NUM
        dmax = dmin + dint * (num - 1)
    return CameraView(
        intrinsics=intr,
        rotation=ext[:3, :3],
        translation=ext[:3, 3],
        depth_min=dmin,
        depth_max=dmax,
        width=width,
        height=height,
    )


def save_camera_text(path, view: CameraView) -> None:
    """Write a camera file in the 4-number depth-line form (min itv num max)."""
    ext = np.eye(4)
    ext[:3, :3] = view.rotation
    ext[:3, 3] = view.translation
    num = DEFAULT_DEPTH_NUM
    itv = (view.depth_max - view.depth_min) / (num - 1)
    lines = ["extrinsic"]
    lines += [" ".join(f"{x:.17g}" for x in row) for row in ext]
    lines.append("")
    lines.append("intrinsic")
    lines += [" ".join(f"{x:.17g}" for x in row) for row in view.intrinsics]
    lines.append("")
    lines.append(f"{view.depth_min:.17g} {itv:.17g} {num} {view.depth_max:.17g}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
