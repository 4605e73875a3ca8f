"""Geometric-consistency filtering and fusion of per-view depth maps.

A reference pixel is checked by projecting into each source view, reading the
source depth there, and reprojecting back; small round-trip pixel and
relative-depth errors mark the source as consistent.  Fusion accepts a pixel
when any configured tier (k, pix_k, rel_k) finds at least k consistent
sources, averages the consistent depth estimates, and back-projects to world
coordinates.  Clouds serialise as binary little-endian PLY.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraView, bilinear_sample, pixel_grid, relative_pose, warp_pixels
from .errors import EmptyCloud, InvalidConfig, MalformedPly

DEFAULT_TIERS = ((2, 1.0, 0.01), (3, 2.0, 0.02))
DEFAULT_CONF_MIN = 0.3


@dataclass(eq=False)
class ConsistencyRecord:
    """Per-source reprojection errors for one reference view."""

    pixel_err: np.ndarray  # (V, H, W), inf where the check is undefined
    depth_err: np.ndarray  # (V, H, W) relative
    consistent: np.ndarray  # (V, H, W) bool under the record's thresholds
    count: np.ndarray       # (H, W) number of consistent sources

    def __post_init__(self):
        if self.pixel_err.shape != self.depth_err.shape:
            raise InvalidConfig("error array shapes differ")
        if (self.count > self.pixel_err.shape[0]).any():
            raise InvalidConfig("count exceeds number of source views")


@dataclass(eq=False)
class PointCloud:
    """Metric points (float32 mm) with optional uint8 colors."""

    points: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float32).reshape(-1, 3))
        object.__setattr__(self, "points", pts)
        if not np.isfinite(pts).all():
            raise InvalidConfig("point cloud contains non-finite coordinates")
        if self.colors is not None:
            col = np.ascontiguousarray(np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3))
            if col.shape[0] != pts.shape[0]:
                raise InvalidConfig("color count does not match point count")
            object.__setattr__(self, "colors", col)

    def __len__(self) -> int:
        return self.points.shape[0]


def _round_trip_errors(ref_view, src_view, ref_depth, src_depth):
    """Forward-backward reprojection errors of ref pixels against one source."""
    h, w = ref_depth.shape
    u, v = pixel_grid(h, w)
    pose_rs = relative_pose(ref_view, src_view)
    k_ref, k_src = ref_view.intrinsics, src_view.intrinsics

    has_depth = ref_depth > 0
    d_ref = np.where(has_depth, ref_depth, 1.0)
    u2, v2, _, front = warp_pixels(u, v, d_ref, pose_rs, k_ref, k_src)
    u2s = np.where(front, u2, -1.0)
    v2s = np.where(front, v2, -1.0)
    sampled, in_frame = bilinear_sample(src_depth, u2s, v2s)
    ok = has_depth & front & in_frame & (sampled > 0)

    u3, v3, z3, front3 = warp_pixels(
        np.where(ok, u2s, 0.0),
        np.where(ok, v2s, 0.0),
        np.where(ok, sampled, 1.0),
        pose_rs.inverse(),
        k_src,
        k_ref,
    )
    ok = ok & front3
    pixel_err = np.where(ok, np.hypot(u3 - u, v3 - v), np.inf)
    depth_err = np.where(ok, np.abs(z3 - d_ref) / d_ref, np.inf)
    reproj_depth = np.where(ok, z3, 0.0)
    return pixel_err, depth_err, reproj_depth


def check_consistency(
    ref_idx: int,
    depths: list[np.ndarray],
    views: list[CameraView],
    pix_thresh: float = 1.0,
    rel_thresh: float = 0.01,
) -> ConsistencyRecord:
    """Round-trip reprojection check of one view's depth against all others."""
    if len(depths) != len(views) or len(views) < 2:
        raise InvalidConfig("need matching depth/view lists with at least 2 views")
    pixel_errs, depth_errs = [], []
    for j, (depth, view) in enumerate(zip(depths, views)):
        if j == ref_idx:
            continue
        pe, de, _ = _round_trip_errors(views[ref_idx], view, depths[ref_idx], depth)
        pixel_errs.append(pe)
        depth_errs.append(de)
    pixel_err = np.stack(pixel_errs)
    depth_err = np.stack(depth_errs)
    consistent = (pixel_err < pix_thresh) & (depth_err < rel_thresh)
    return ConsistencyRecord(
        pixel_err=pixel_err,
        depth_err=depth_err,
        consistent=consistent,
        count=consistent.sum(axis=0),
    )


def _backproject(view: CameraView, u, v, depth):
    rays = np.linalg.inv(view.intrinsics) @ np.stack(
        [u.ravel(), v.ravel(), np.ones(u.size)], axis=0
    )
    cam = rays * depth.ravel()[None]
    world = view.rotation.T @ (cam - view.translation[:, None])
    return world.T  # (N, 3)


def fuse_point_cloud(
    depths: list[np.ndarray],
    confidences: list[np.ndarray],
    views: list[CameraView],
    tiers=DEFAULT_TIERS,
    conf_min: float = DEFAULT_CONF_MIN,
    images: list[np.ndarray] | None = None,
) -> PointCloud:
    """Fuse per-view depth maps into one world-space point cloud.

    Every view takes a turn as reference; its low-confidence pixels are
    rejected, remaining pixels are accepted if some tier (k, pix_k, rel_k)
    finds >= k sources with pixel error < pix_k and relative depth error <
    rel_k.  Accepted depths are averaged with the consistent sources'
    reprojected estimates (first satisfied tier, ascending k) before
    back-projection.  Points accumulate in view then row-major pixel order.
    Raises EmptyCloud when nothing is accepted.
    """
    if len(depths) != len(views) or len(depths) != len(confidences):
        raise InvalidConfig("depths, confidences and views must align")
    tiers = sorted((tuple(t) for t in tiers), key=lambda t: t[0])
    if not tiers or any(len(t) != 3 for t in tiers):
        raise InvalidConfig("tiers must be (k, pix, rel) triples")

    all_points, all_colors = [], []
    for r in range(len(views)):
        h, w = depths[r].shape
        u, v = pixel_grid(h, w)
        pe, de, zs = [], [], []
        for j in range(len(views)):
            if j == r:
                continue
            p_err, d_err, z3 = _round_trip_errors(views[r], views[j], depths[r], depths[j])
            pe.append(p_err)
            de.append(d_err)
            zs.append(z3)
        pe, de, zs = np.stack(pe), np.stack(de), np.stack(zs)

        confident = (confidences[r] >= conf_min) & (depths[r] > 0)
        accepted = np.zeros((h, w), dtype=bool)
        depth_sum = np.where(depths[r] > 0, depths[r], 0.0).copy()
        depth_n = np.ones((h, w))
        for k, pix_k, rel_k in tiers:
            ok = (pe < pix_k) & (de < rel_k)
            tier_hit = confident & (ok.sum(axis=0) >= k) & ~accepted
            if tier_hit.any():
                depth_sum[tier_hit] += np.where(ok, zs, 0.0).sum(axis=0)[tier_hit]
                depth_n[tier_hit] += ok.sum(axis=0)[tier_hit]
                accepted |= tier_hit
        if not accepted.any():
            continue
        avg_depth = depth_sum[accepted] / depth_n[accepted]
        pts = _backproject(views[r], u[accepted], v[accepted], avg_depth)
        all_points.append(pts)
        if images is not None:
            gray = np.clip(np.round(images[r][accepted] * 255.0), 0, 255).astype(np.uint8)
            all_colors.append(np.repeat(gray[:, None], 3, axis=1))

    if not all_points:
        raise EmptyCloud("no pixel satisfied any consistency tier")
    points = np.concatenate(all_points)
    colors = np.concatenate(all_colors) if images is not None else None
    return PointCloud(points=points, colors=colors)


# --- PLY serialisation -------------------------------------------------------

def write_ply(cloud: PointCloud, path) -> None:
    """Binary little-endian PLY with float x/y/z (+ uchar rgb when colored)."""
    n = len(cloud)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {axis}" for axis in "xyz"]
    if cloud.colors is not None:
        header += [f"property uchar {c}" for c in ("red", "green", "blue")]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if cloud.colors is None:
            fh.write(cloud.points.astype("<f4").tobytes())
        else:
            row = np.dtype([("xyz", "<f4", 3), ("rgb", "u1", 3)])
            packed = np.empty(n, dtype=row)
            packed["xyz"] = cloud.points
            packed["rgb"] = cloud.colors
            fh.write(packed.tobytes())


def read_ply(path) -> PointCloud:
    """Read a PLY produced by write_ply (strict layout check)."""
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise MalformedPly(f"{path}: missing ply magic")
        if fh.readline().strip() != b"format binary_little_endian 1.0":
            raise MalformedPly(f"{path}: unsupported format line")
        n = None
        props = []
        while True:
            line = fh.readline()
            if not line:
                raise MalformedPly(f"{path}: header not terminated")
            line = line.strip()
            if line == b"end_header":
                break
            if line.startswith(b"comment"):
                continue
            if line.startswith(b"element vertex"):
                n = int(line.split()[-1])
            elif line.startswith(b"element"):
                raise MalformedPly(f"{path}: unsupported element {line!r}")
            elif line.startswith(b"property"):
                props.append(tuple(line.split()[1:]))
        if n is None:
            raise MalformedPly(f"{path}: no vertex element")
        plain = [(b"float", b"x"), (b"float", b"y"), (b"float", b"z")]
        colored = plain + [(b"uchar", b"red"), (b"uchar", b"green"), (b"uchar", b"blue")]
        if props == plain:
            raw = fh.read(12 * n)
            if len(raw) != 12 * n:
                raise MalformedPly(f"{path}: truncated payload")
            pts = np.frombuffer(raw, dtype="<f4").reshape(n, 3)
            return PointCloud(points=pts.copy())
        if props == colored:
            row = np.dtype([("xyz", "<f4", 3), ("rgb", "u1", 3)])
            raw = fh.read(row.itemsize * n)
            if len(raw) != row.itemsize * n:
                raise MalformedPly(f"{path}: truncated payload")
            packed = np.frombuffer(raw, dtype=row)
            return PointCloud(points=packed["xyz"].copy(), colors=packed["rgb"].copy())
        raise MalformedPly(f"{path}: unsupported property layout {props}")
