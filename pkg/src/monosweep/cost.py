"""Group-correlation cost volume, smoothing, and depth read-out.

The volume averages per-group feature correlations over the source views
that see each (pixel, candidate) cell; a separable box filter stands in for
learned regularisation, and depth comes from the per-pixel softmax either by
winner-take-all or as the probability-weighted expectation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraView, bilinear_sample, pixel_grid, relative_pose, warp_pixels
from .errors import InvalidConfig
from .sampling import DepthHypotheses


@dataclass(eq=False)
class CostVolume:
    """Per-group correlation scores and per-cell visibility counts."""

    values: np.ndarray  # (G, D, H, W); 0 where no view was visible
    counts: np.ndarray  # (D, H, W) visible source views per cell

    def __post_init__(self):
        if self.values.ndim != 4 or self.counts.shape != self.values.shape[1:]:
            raise InvalidConfig("cost volume shapes inconsistent")
        if not np.isfinite(self.values).all():
            raise InvalidConfig("cost volume contains non-finite values")

    @property
    def valid_pixels(self) -> np.ndarray:
        """Pixels with at least one visible cell somewhere along depth."""
        return (self.counts > 0).any(axis=0)


def build_cost_volume(
    ref_feat: np.ndarray,
    src_feats: list[np.ndarray],
    ref_view: CameraView,
    src_views: list[CameraView],
    hyp: DepthHypotheses,
    groups: int,
) -> CostVolume:
    """Average group-wise correlations against all warped source features.

    For each pixel/candidate the reference ray is looked up in every source
    view, features are sampled bilinearly and correlated per channel group
    (inner product / group size); out-of-frame or behind-camera views are
    excluded from the average and cells no view sees stay zero.
    """
    c, h, w = ref_feat.shape
    if c % groups:
        raise InvalidConfig(f"channels {c} not divisible by groups {groups}")
    if len(src_feats) != len(src_views):
        raise InvalidConfig("need one source view per source feature map")
    scale = h / ref_view.height
    k_ref = ref_view.scaled(scale).intrinsics

    depths = hyp.per_pixel(h, w)
    d = depths.shape[0]
    u, v = pixel_grid(h, w)
    ref_groups = ref_feat.reshape(groups, c // groups, h, w)

    accum = np.zeros((groups, d, h, w))
    counts = np.zeros((d, h, w), dtype=np.int32)
    for feat, view in zip(src_feats, src_views):
        pose = relative_pose(ref_view, view)
        k_src = view.scaled(scale).intrinsics
        u2, v2, _, in_front = warp_pixels(u, v, depths, pose, k_ref, k_src)
        sampled, in_frame = bilinear_sample(feat, np.where(in_front, u2, -1.0), v2)
        vis = in_front & in_frame
        src_groups = sampled.reshape(groups, c // groups, d, h, w)
        corr = np.einsum("gcdhw,gchw->gdhw", src_groups, ref_groups) / (c // groups)
        accum += np.where(vis[None], corr, 0.0)
        counts += vis
    values = accum / np.maximum(counts, 1)[None]
    return CostVolume(values=values, counts=counts)


def _box1d(arr: np.ndarray, radius: int, axis: int) -> np.ndarray:
    """Truncated-window box mean along one axis (renormalised at the edges)."""
    if radius == 0:
        return arr
    moved = np.moveaxis(arr, axis, 0)
    n = moved.shape[0]
    cs = np.concatenate([np.zeros((1,) + moved.shape[1:]), np.cumsum(moved, axis=0)])
    idx = np.arange(n)
    lo = np.maximum(idx - radius, 0)
    hi = np.minimum(idx + radius, n - 1)
    sums = cs[hi + 1] - cs[lo]
    width = (hi - lo + 1).reshape((-1,) + (1,) * (moved.ndim - 1))
    return np.moveaxis(sums / width, 0, axis)


def regularize(vol: CostVolume, radii: tuple[int, int, int] = (1, 1, 1)) -> np.ndarray:
    """Group-averaged scores smoothed by a separable box over (D, H, W).

    Radii of zero are an exact no-op per axis; edge windows renormalise so
    constants are preserved.
    """
    scores = vol.values.mean(axis=0)
    for axis, radius in enumerate(radii):
        if radius < 0:
            raise InvalidConfig(f"smoothing radius must be >= 0, got {radii}")
        scores = _box1d(scores, radius, axis)
    return scores


def to_probability(scores: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
    """Per-pixel softmax over the candidate axis; invalid pixels go uniform."""
    if not np.isfinite(scores).all():
        raise InvalidConfig("scores must be finite")
    shifted = scores - scores.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    prob = e / e.sum(axis=0, keepdims=True)
    if valid is not None:
        d = scores.shape[0]
        prob = np.where(valid[None], prob, 1.0 / d)
    return prob


def wta_depth(prob: np.ndarray, hyp: DepthHypotheses):
    """Winner-take-all depth and its confidence (the max probability).

    Argmax ties break to the lowest candidate index.  Returns
    (depth (H, W), confidence (H, W)).
    """
    d, h, w = prob.shape
    values = hyp.per_pixel(h, w)
    if values.shape[0] != d:
        raise InvalidConfig("probability/candidate counts differ")
    best = prob.argmax(axis=0)
    depth = np.take_along_axis(values, best[None], axis=0)[0]
    conf = np.take_along_axis(prob, best[None], axis=0)[0]
    return depth, conf


def expected_depth(prob: np.ndarray, hyp: DepthHypotheses) -> np.ndarray:
    """Probability-weighted depth expectation per pixel."""
    d, h, w = prob.shape
    values = hyp.per_pixel(h, w)
    if values.shape[0] != d:
        raise InvalidConfig("probability/candidate counts differ")
    return (prob * values).sum(axis=0)
