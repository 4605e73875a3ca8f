"""Scale/shift alignment of relative monocular depth to metric inverse depth.

The fit solves min over (a, b) of sum (1/pred_depth - (a*mono + b))^2 in
closed form on a confidence-filtered pixel set; applying it returns metric
depth 1/(a*mono + b) clamped to the working range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFit, EmptySelection, InvalidConfig

DEFAULT_KEEP_FRACTION = 0.8


@dataclass(frozen=True)
class AlignmentParams:
    a: float  # inverse-mm per mono unit
    b: float  # inverse-mm

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise InvalidConfig(f"alignment parameters not finite: {self}")


def select_confident(
    conf: np.ndarray,
    keep_fraction: float = DEFAULT_KEEP_FRACTION,
    valid: np.ndarray | None = None,
):
    """Coordinates of the top keep_fraction of valid pixels by confidence.

    Keeps ceil(keep_fraction * n_valid) pixels; ties break in row-major
    order.  Returns (rows, cols) index arrays.
    """
    if not (0 < keep_fraction <= 1):
        raise InvalidConfig(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    conf = np.asarray(conf, dtype=float)
    if valid is None:
        valid = np.ones(conf.shape, dtype=bool)
    flat_valid = valid.ravel()
    n_valid = int(flat_valid.sum())
    if n_valid == 0:
        raise EmptySelection("no valid pixels to select from")
    k = int(np.ceil(keep_fraction * n_valid))
    order = np.argsort(-conf.ravel(), kind="stable")
    order = order[flat_valid[order]][:k]
    return np.unravel_index(order, conf.shape)


def fit_scale_shift(pred_depth: np.ndarray, mono: np.ndarray, coords) -> AlignmentParams:
    """Exact least-squares (a, b) with targets 1/pred_depth and regressor mono.

    Solved via mean-centred 2x2 normal equations.  Raises DegenerateFit when
    fewer than 2 points are given or mono is constant on them.
    """
    x = np.asarray(mono, dtype=float)[coords]
    d = np.asarray(pred_depth, dtype=float)[coords]
    if x.size < 2:
        raise DegenerateFit(f"need at least 2 points, got {x.size}")
    if not (d > 0).all():
        raise InvalidConfig("predicted depth must be positive at fit coordinates")
    y = 1.0 / d
    xm = x.mean()
    ym = y.mean()
    xc = x - xm
    sxx = xc @ xc
    # guard the numerically-constant case (centering residue ~ eps * |x|)
    if sxx <= (np.finfo(float).eps * np.abs(x).max(initial=0.0)) ** 2 * x.size:
        raise DegenerateFit("mono values constant on the selected pixels")
    a = (xc @ (y - ym)) / sxx
    b = ym - a * xm
    return AlignmentParams(a=float(a), b=float(b))


def apply_alignment(
    mono: np.ndarray,
    params: AlignmentParams,
    depth_range: tuple[float, float],
) -> np.ndarray:
    """Metric depth 1/(a*mono + b), clamped to depth_range.

    Pixels where a*mono + b <= 0 clamp to depth_max.
    """
    dmin, dmax = depth_range
    inv = params.a * np.asarray(mono, dtype=float) + params.b
    with np.errstate(divide="ignore"):
        depth = np.where(inv > 0, 1.0 / np.where(inv > 0, inv, 1.0), dmax)
    return np.clip(depth, dmin, dmax)


def initial_scale(mono: np.ndarray, depth_range: tuple[float, float]) -> np.ndarray:
    """Stage-0 scaling: map the mono extremes onto the full metric range.

    Disparity-like convention: mono_max lands at depth_min and mono_min at
    depth_max, affinely in inverse depth.  Raises DegenerateFit for constant
    mono.
    """
    dmin, dmax = depth_range
    m = np.asarray(mono, dtype=float)
    m_lo, m_hi = m.min(), m.max()
    if m_hi == m_lo:
        raise DegenerateFit("mono input has no spread")
    inv = 1.0 / dmax + (m - m_lo) * (1.0 / dmin - 1.0 / dmax) / (m_hi - m_lo)
    return 1.0 / inv
