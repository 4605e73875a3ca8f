"""Synthetic scenes with exact analytic depth, used as the test oracle.

Scenes are ray-cast against closed-form geometry (no meshes), textured with a
seeded 3D procedural pattern so the same surface point looks identical from
every view, and paired with a monocular-depth oracle whose affine-in-inverse-
depth distortion is known exactly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import io as msio
from .camera import CameraView, load_camera_text, pixel_grid, save_camera_text
from .errors import InvalidConfig

DEPTH_RANGE_MM = (425.0, 935.0)

PLANE_Z = 600.0
STEP_NEAR_Z = 500.0
STEP_FAR_Z = 700.0
STEP_SPLIT_X = 0.0
SPHERE_CENTER = (0.0, 0.0, 640.0)
SPHERE_RADIUS = 110.0
SPHERE_BACK_Z = 700.0

BASELINE_MM = 150.0
LOOKAT = (0.0, 0.0, 600.0)

# minimum per-8x8-block intensity variance of the reference image
TEXTURE_VARIANCE_FLOOR = 3e-5
_TEXTURE_ATTEMPTS = 8

SCENE_KINDS = ("plane", "step", "sphere-on-plane")


@dataclass(frozen=True)
class MonoOracleParams:
    """Known affine distortion (in inverse depth) of the synthetic mono oracle."""

    a_true: float = 1.0       # 1/mm per mono unit
    b_true: float = 0.0       # 1/mm
    noise_sigma: float = 0.0  # relative-unit std
    seed: int = 0

    def __post_init__(self):
        if not (self.a_true > 0 and np.isfinite(self.a_true)):
            raise InvalidConfig(f"a_true must be positive, got {self.a_true}")
        if self.noise_sigma < 0 or not np.isfinite(self.b_true):
            raise InvalidConfig("bad mono oracle parameters")


@dataclass(eq=False)
class SyntheticScene:
    views: list[CameraView]
    images: list[np.ndarray]      # (H, W) float in [0, 1]
    gt_depths: list[np.ndarray]   # (H, W) mm, 0 where invalid
    valid_masks: list[np.ndarray]
    meta: dict = field(default_factory=dict)

    @property
    def n_views(self) -> int:
        return len(self.views)


def _lookat_rotation(position: np.ndarray, target: np.ndarray) -> np.ndarray:
    """World-to-camera rotation for a camera at `position` looking at `target`.

    World axes follow the reference-camera convention: x right, y down,
    z forward.
    """
    forward = target - position
    norm = np.linalg.norm(forward)
    if norm < 1e-9:
        raise InvalidConfig("camera position coincides with look-at target")
    forward = forward / norm
    down = np.array([0.0, 1.0, 0.0])
    right = np.cross(down, forward)
    rnorm = np.linalg.norm(right)
    if rnorm < 1e-9:
        raise InvalidConfig("degenerate camera orientation (forward parallel to down)")
    right = right / rnorm
    down = np.cross(forward, right)
    return np.stack([right, down, forward], axis=0)


def _rig_views(resolution, n_views) -> list[CameraView]:
    h, w = resolution
    fx = 1.875 * w
    intr = np.array([[fx, 0.0, (w - 1) / 2.0], [0.0, fx, (h - 1) / 2.0], [0.0, 0.0, 1.0]])
    target = np.array(LOOKAT)
    # view 0 centred, then alternating left/right offsets
    offsets = [0.0]
    k = 1
    while len(offsets) < n_views:
        offsets.append(-k * BASELINE_MM)
        if len(offsets) < n_views:
            offsets.append(k * BASELINE_MM)
        k += 1
    views = []
    for dx in offsets:
        pos = np.array([dx, 0.0, 0.0])
        rot = _lookat_rotation(pos, target)
        views.append(
            CameraView(
                intrinsics=intr,
                rotation=rot,
                translation=-rot @ pos,
                depth_min=DEPTH_RANGE_MM[0],
                depth_max=DEPTH_RANGE_MM[1],
                width=w,
                height=h,
            )
        )
    return views


def analytic_depth(view: CameraView, kind: str, u, v) -> np.ndarray:
    """Exact surface depth along the rays through continuous coords (u, v)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    depth, _ = _cast(view, kind, u.ravel(), v.ravel())
    return depth.reshape(u.shape)


def _ray_cast(view: CameraView, kind: str):
    """Analytic depth of the nearest surface along each pixel ray.

    Returns (depth, hit_points) with depth = 0 where no surface is hit;
    hit_points is (3, H, W) world coordinates (NaN where invalid).
    """
    h, w = view.height, view.width
    u, v = pixel_grid(h, w)
    depth, pts = _cast(view, kind, u.ravel(), v.ravel())
    return depth.reshape(h, w), pts.reshape(3, h, w)


def _cast(view: CameraView, kind: str, u: np.ndarray, v: np.ndarray):
    dirs_cam = np.linalg.inv(view.intrinsics) @ np.stack(
        [u, v, np.ones(u.size)], axis=0
    )
    dirs = view.rotation.T @ dirs_cam  # world directions, z-cam depth = param s
    origin = view.center

    def plane_hit(z0, x_lo=-np.inf, x_hi=np.inf):
        dz = dirs[2]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (z0 - origin[2]) / dz
        x = origin[0] + s * dirs[0]
        ok = np.isfinite(s) & (s > 0) & (x >= x_lo) & (x < x_hi)
        return np.where(ok, s, np.inf)

    if kind == "plane":
        s = plane_hit(PLANE_Z)
    elif kind == "step":
        s_near = plane_hit(STEP_NEAR_Z, x_hi=STEP_SPLIT_X)
        s_far = plane_hit(STEP_FAR_Z, x_lo=STEP_SPLIT_X)
        s = np.minimum(s_near, s_far)
    elif kind == "sphere-on-plane":
        center = np.array(SPHERE_CENTER)
        oc = origin - center
        b = 2.0 * (dirs * oc[:, None]).sum(axis=0)
        a = (dirs * dirs).sum(axis=0)
        c = oc @ oc - SPHERE_RADIUS**2
        disc = b * b - 4 * a * c
        with np.errstate(invalid="ignore"):
            s_sph = (-b - np.sqrt(np.maximum(disc, 0.0))) / (2 * a)
        s_sph = np.where((disc >= 0) & (s_sph > 0), s_sph, np.inf)
        s = np.minimum(s_sph, plane_hit(SPHERE_BACK_Z))
    else:
        raise InvalidConfig(f"unknown scene kind {kind!r}; choose from {SCENE_KINDS}")

    depth = np.where(np.isfinite(s), s, 0.0)
    pts = origin[:, None] + s[None, :] * dirs
    pts = np.where(np.isfinite(s)[None, :], pts, np.nan)
    return depth, pts


class _Texture:
    """Seeded sum-of-sinusoids 3D texture plus a gentle world gradient.

    Wavelengths follow a fixed geometric ladder so every texture carries both
    block-scale detail (well-posed matching) and long-wave structure that
    survives coarse downsampling; directions are damped in z so variation
    shows up in roughly fronto-parallel images.
    """

    def __init__(self, rng: np.random.Generator, amp_total: float, lam_range):
        k = 12
        lam = np.geomspace(lam_range[0], lam_range[1], k)
        dirs = rng.normal(size=(k, 3))
        dirs[:, 2] *= 0.3
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        self.freqs = 2.0 * np.pi * dirs / lam[:, None]
        self.phases = rng.uniform(0, 2 * np.pi, size=k)
        self.amps = np.full(k, amp_total / k)
        self.grad = rng.normal(size=3) * (0.03 / 1000.0)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at (3, ...) world points."""
        flat = points.reshape(3, -1)
        phase = self.freqs @ flat + self.phases[:, None]
        vals = (self.amps[:, None] * np.sin(phase)).sum(axis=0)
        vals = vals + self.grad @ flat
        return vals.reshape(points.shape[1:])


def _block_variance_floor(image: np.ndarray, block: int = 8) -> float:
    h, w = image.shape
    hb, wb = h - h % block, w - w % block
    tiles = image[:hb, :wb].reshape(hb // block, block, wb // block, block)
    return float(tiles.var(axis=(1, 3)).min())


def generate_scene(
    kind: str,
    resolution: tuple[int, int] = (64, 80),
    n_views: int = 3,
    texture_seed: int = 0,
) -> SyntheticScene:
    """Build a fully known scene: cameras, textured images and exact depths.

    `resolution` is (height, width); both must be >= 16.  Raises
    InvalidConfig on a degenerate layout or if no seeded texture meets the
    per-block variance floor.
    """
    h, w = resolution
    if h < 16 or w < 16:
        raise InvalidConfig(f"resolution must be at least 16x16, got {resolution}")
    if n_views < 2:
        raise InvalidConfig(f"need at least 2 views, got {n_views}")
    if kind not in SCENE_KINDS:
        raise InvalidConfig(f"unknown scene kind {kind!r}; choose from {SCENE_KINDS}")

    views = _rig_views(resolution, n_views)
    depths, points = zip(*(_ray_cast(view, kind) for view in views))

    # the step's albedo split must dominate texture gradients for edge masks
    amp_total = 0.12 if kind == "step" else 0.3
    seed_seq = np.random.SeedSequence(texture_seed)
    texture = None
    for child in seed_seq.spawn(_TEXTURE_ATTEMPTS):
        cand = _Texture(np.random.default_rng(child), amp_total, (18.0, 360.0))
        ref_img = _shade(points[0], cand, kind)
        if _block_variance_floor(ref_img) >= TEXTURE_VARIANCE_FLOOR:
            texture = cand
            break
    if texture is None:
        raise InvalidConfig("no seeded texture met the block-variance floor")

    images, masks, gt = [], [], []
    for view, depth, pts in zip(views, depths, points):
        img = _shade(pts, texture, kind)
        valid = (depth >= view.depth_min) & (depth <= view.depth_max)
        images.append(np.where(np.isfinite(img), img, 0.5))
        masks.append(valid)
        gt.append(np.where(valid, depth, 0.0))

    meta = {"kind": kind}
    if kind == "step":
        # split at world x=0 projects to the principal column of view 0
        meta["step_column"] = float(views[0].intrinsics[0, 2])
        meta["step_near_mm"] = STEP_NEAR_Z
        meta["step_far_mm"] = STEP_FAR_Z
    return SyntheticScene(list(views), images, gt, masks, meta)


def _shade(points: np.ndarray, texture: _Texture, kind: str) -> np.ndarray:
    base = np.full(points.shape[1:], 0.5)
    if kind == "step":
        base = np.where(points[0] < STEP_SPLIT_X, 0.25, 0.75)
    return np.clip(base + texture(points), 0.0, 1.0)


def make_mono_depth(
    gt_depth: np.ndarray,
    params: MonoOracleParams,
    valid_mask: np.ndarray | None = None,
) -> np.ndarray:
    """Relative mono depth with a known inverse-depth affine distortion.

    mono = (1/gt - b_true) / a_true + noise, so a_true*mono + b_true = 1/gt
    holds exactly at noise 0.  Larger mono means nearer (disparity-like).
    Invalid pixels produce 0.
    """
    gt = np.asarray(gt_depth, dtype=float)
    if valid_mask is None:
        valid_mask = gt > 0
    if not (gt[valid_mask] > 0).all():
        raise InvalidConfig("gt depth must be positive on the valid mask")
    with np.errstate(divide="ignore"):
        mono = (1.0 / np.where(valid_mask, gt, 1.0) - params.b_true) / params.a_true
    if params.noise_sigma > 0:
        rng = np.random.default_rng(params.seed)
        mono = mono + params.noise_sigma * rng.standard_normal(gt.shape)
    return np.where(valid_mask, mono, 0.0)


# --- on-disk scene layout ---------------------------------------------------

def save_scene(scene: SyntheticScene, out_dir, monos=None) -> str:
    """Write PPM images, PFM depths and camera files plus a manifest.

    Returns the manifest path.  Invalid depth pixels are stored as 0.
    `monos` optionally adds per-view mono-depth PFMs.
    """
    os.makedirs(out_dir, exist_ok=True)
    entries: dict[str, str] = {
        "n_views": str(scene.n_views),
        "height": str(scene.images[0].shape[0]),
        "width": str(scene.images[0].shape[1]),
    }
    for key, val in scene.meta.items():
        entries[f"meta.{key}"] = str(val)
    for i, view in enumerate(scene.views):
        img = f"view_{i}.ppm"
        cam = f"view_{i}_cam.txt"
        dep = f"view_{i}_gt.pfm"
        msio.write_ppm(os.path.join(out_dir, img), scene.images[i])
        save_camera_text(os.path.join(out_dir, cam), view)
        msio.write_pfm(os.path.join(out_dir, dep), scene.gt_depths[i])
        entries[f"image_{i}"] = img
        entries[f"camera_{i}"] = cam
        entries[f"gt_depth_{i}"] = dep
        if monos is not None:
            mono = f"view_{i}_mono.pfm"
            msio.write_pfm(os.path.join(out_dir, mono), monos[i])
            entries[f"mono_{i}"] = mono
    manifest = os.path.join(out_dir, "manifest.txt")
    msio.write_manifest(manifest, entries)
    return manifest


def load_scene(manifest_path):
    """Load a scene written by save_scene.

    Returns (scene, monos) where monos is a list of per-view mono grids or
    None when the manifest carries no mono entries.
    """
    entries = msio.read_manifest(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    n = int(entries["n_views"])
    h, w = int(entries["height"]), int(entries["width"])
    views, images, gt, masks = [], [], [], []
    monos = []
    for i in range(n):
        views.append(load_camera_text(os.path.join(base, entries[f"camera_{i}"]), w, h))
        images.append(msio.to_gray(msio.read_ppm(os.path.join(base, entries[f"image_{i}"]))))
        key = f"gt_depth_{i}"
        if key in entries:
            depth = msio.read_pfm(os.path.join(base, entries[key]))
            gt.append(depth)
            masks.append(depth > 0)
        else:
            gt.append(np.zeros((h, w)))
            masks.append(np.zeros((h, w), dtype=bool))
        mkey = f"mono_{i}"
        monos.append(msio.read_pfm(os.path.join(base, entries[mkey])) if mkey in entries else None)
    meta = {k[len("meta."):]: v for k, v in entries.items() if k.startswith("meta.")}
    scene = SyntheticScene(views, images, gt, masks, meta)
    if all(m is None for m in monos):
        return scene, None
    return scene, monos
