"""Coarse-to-fine inverse-depth hypothesis generation and edge-guided updates.

Candidates are spaced uniformly in 1/d.  Each refinement stage shrinks the
per-pixel inverse-depth window to one candidate interval of the previous
stage, scaled by that stage's interval multiplier, and recentres it on the
upsampled previous prediction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import bilinear_resize
from .errors import InvalidConfig


@dataclass(eq=False)
class DepthHypotheses:
    """Ordered depth candidates: a shared (D,) list or per-pixel (D, H, W)."""

    values: np.ndarray
    stage: int
    inv_width: float                 # inverse-depth span of one pixel's window
    range_mm: tuple[float, float]    # global clamp bounds

    def __post_init__(self):
        if self.values.ndim not in (1, 3):
            raise InvalidConfig(f"candidates must be (D,) or (D,H,W), got {self.values.shape}")
        if not (self.values > 0).all():
            raise InvalidConfig("depth candidates must be strictly positive")
        if not (np.diff(self.values, axis=0) > 0).all():
            raise InvalidConfig("depth candidates must be strictly increasing")

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def shared(self) -> bool:
        return self.values.ndim == 1

    def per_pixel(self, height: int, width: int) -> np.ndarray:
        """Candidates as (D, H, W), broadcasting the shared list if needed."""
        if self.shared:
            return np.broadcast_to(self.values[:, None, None], (self.count, height, width))
        if self.values.shape[1:] != (height, width):
            raise InvalidConfig(
                f"hypotheses are {self.values.shape[1:]}, expected {(height, width)}"
            )
        return self.values


@dataclass(eq=False)
class EdgeMask:
    """Edge confidence in [0, 1] and its thresholded mask at one stage."""

    mask: np.ndarray
    confidence: np.ndarray
    threshold: float

    def __post_init__(self):
        if self.mask.shape != self.confidence.shape:
            raise InvalidConfig("mask and confidence shapes differ")


def init_hypotheses(range_mm: tuple[float, float], count: int) -> DepthHypotheses:
    """Stage-0 candidates, shared by all pixels, uniform in inverse depth."""
    dmin, dmax = range_mm
    if not (0 < dmin < dmax):
        raise InvalidConfig(f"bad depth range {range_mm}")
    if count < 2:
        raise InvalidConfig(f"need at least 2 candidates, got {count}")
    inv = np.linspace(1.0 / dmin, 1.0 / dmax, count)  # descending inverse depth
    return DepthHypotheses(
        values=1.0 / inv,
        stage=0,
        inv_width=1.0 / dmin - 1.0 / dmax,
        range_mm=(float(dmin), float(dmax)),
    )


def refine_hypotheses(
    prev_depth: np.ndarray,
    prev: DepthHypotheses,
    count: int,
    interval_multiplier: float = 0.5,
) -> DepthHypotheses:
    """Per-pixel candidates around the previous prediction.

    `prev_depth` must already be at the new stage resolution (upsampled by
    the caller).  The new inverse-depth window is one candidate interval of
    the previous stage times `interval_multiplier`, centred at 1/prev_depth
    and shifted (width-preserving) back inside the global range when it
    overflows.
    """
    if count < 2:
        raise InvalidConfig(f"need at least 2 candidates, got {count}")
    dmin, dmax = prev.range_mm
    width = prev.inv_width / (prev.count - 1) * interval_multiplier
    inv_lo_g, inv_hi_g = 1.0 / dmax, 1.0 / dmin
    width = min(width, inv_hi_g - inv_lo_g)

    center = 1.0 / np.clip(np.asarray(prev_depth, dtype=float), dmin, dmax)
    lo = center - width / 2.0
    lo = np.where(lo < inv_lo_g, inv_lo_g, lo)
    lo = np.where(lo + width > inv_hi_g, inv_hi_g - width, lo)

    steps = np.arange(count) / (count - 1)
    inv = lo[None] + width * steps[:, None, None]  # ascending inverse depth
    return DepthHypotheses(
        values=1.0 / inv[::-1],
        stage=prev.stage + 1,
        inv_width=width,
        range_mm=prev.range_mm,
    )


def _sobel_magnitude(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=float)
    p = np.pad(img, 1, mode="edge")
    gx = (
        (p[:-2, 2:] + 2 * p[1:-1, 2:] + p[2:, 2:])
        - (p[:-2, :-2] + 2 * p[1:-1, :-2] + p[2:, :-2])
    )
    gy = (
        (p[2:, :-2] + 2 * p[2:, 1:-1] + p[2:, 2:])
        - (p[:-2, :-2] + 2 * p[:-2, 1:-1] + p[:-2, 2:])
    )
    return np.hypot(gx, gy)


def edge_mask(ref_image: np.ndarray, lam: float, stage_resolution) -> EdgeMask:
    """Edge confidence from normalised Sobel magnitude, resized per stage.

    Confidence is gradient magnitude over its image maximum (all zeros for a
    constant image); the mask keeps pixels with confidence strictly above
    `lam`.
    """
    if not (0 < lam <= 1):
        raise InvalidConfig(f"lambda must be in (0, 1], got {lam}")
    mag = _sobel_magnitude(ref_image)
    peak = mag.max()
    conf = mag / peak if peak > 0 else np.zeros_like(mag)
    conf = bilinear_resize(conf, tuple(stage_resolution))
    conf = np.clip(conf, 0.0, 1.0)
    return EdgeMask(mask=conf > lam, confidence=conf, threshold=lam)


def dynamic_replace(
    hyp: DepthHypotheses,
    aligned_mono: np.ndarray,
    mask: EdgeMask,
) -> DepthHypotheses:
    """Swap each masked pixel's nearest candidate for the aligned mono depth.

    Nearest is by absolute depth difference with ties to the lowest index;
    the candidate list is re-sorted afterwards.  Unmasked pixels are left
    bit-identical; with an empty mask the input is returned unchanged.
    """
    sel = np.asarray(mask.mask, dtype=bool)
    if not sel.any():
        return hyp
    h, w = sel.shape
    vals = np.array(hyp.per_pixel(h, w), dtype=float)  # materialised copy
    mono = np.asarray(aligned_mono, dtype=float)
    if mono.shape != (h, w):
        raise InvalidConfig(f"aligned mono is {mono.shape}, expected {(h, w)}")

    cols = vals[:, sel]                       # (D, n_masked)
    nearest = np.argmin(np.abs(cols - mono[sel][None, :]), axis=0)
    cols[nearest, np.arange(cols.shape[1])] = mono[sel]
    vals[:, sel] = np.sort(cols, axis=0)
    return DepthHypotheses(
        values=vals, stage=hyp.stage, inv_width=hyp.inv_width, range_mm=hyp.range_mm
    )
