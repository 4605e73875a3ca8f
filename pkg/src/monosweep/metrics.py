"""Depth-map and point-cloud quality metrics.

Depth: mean absolute error plus the percentage of pixels whose error exceeds
2/4/8 mm (lower is better).  Clouds: mean nearest-neighbour distance from
prediction to truth (accuracy) and back (completeness), outliers beyond
max_dist excluded, and their average as the overall score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyCloud, EmptyMask, InvalidConfig
from .fusion import PointCloud

DEFAULT_MAX_DIST_MM = 20.0


@dataclass(frozen=True)
class DepthMetrics:
    mae: float
    e2: float
    e4: float
    e8: float

    def __post_init__(self):
        if self.mae < 0 or not (100 >= self.e2 >= self.e4 >= self.e8 >= 0):
            raise InvalidConfig(f"inconsistent depth metrics: {self}")


@dataclass(frozen=True)
class CloudMetrics:
    acc: float
    comp: float
    overall: float

    def __post_init__(self):
        if self.acc < 0 or self.comp < 0:
            raise InvalidConfig(f"negative cloud metrics: {self}")
        if abs(self.overall - (self.acc + self.comp) / 2) > 1e-9:
            raise InvalidConfig("overall must be the mean of acc and comp")


def depth_metrics(pred: np.ndarray, gt: np.ndarray, valid_mask: np.ndarray) -> DepthMetrics:
    """MAE and exceedance ratios of |pred - gt| over the valid mask."""
    mask = np.asarray(valid_mask, dtype=bool)
    if pred.shape != gt.shape or pred.shape != mask.shape:
        raise InvalidConfig("shape mismatch in depth metrics")
    if not mask.any():
        raise EmptyMask("depth metrics need at least one valid pixel")
    err = np.abs(pred[mask] - gt[mask])
    return DepthMetrics(
        mae=float(err.mean()),
        e2=float(100.0 * (err > 2.0).mean()),
        e4=float(100.0 * (err > 4.0).mean()),
        e8=float(100.0 * (err > 8.0).mean()),
    )


def _directed_mean(src: np.ndarray, dst: np.ndarray, max_dist: float) -> float:
    dist, _ = cKDTree(dst).query(src, k=1)
    inliers = dist[dist <= max_dist]
    if inliers.size == 0:
        return float(max_dist)  # saturate when every match is an outlier
    return float(inliers.mean())


def cloud_metrics(
    pred: PointCloud, gt: PointCloud, max_dist: float = DEFAULT_MAX_DIST_MM
) -> CloudMetrics:
    """Accuracy/completeness/overall between two clouds, KD-tree backed."""
    if len(pred) == 0 or len(gt) == 0:
        raise EmptyCloud("cloud metrics need non-empty clouds")
    p = pred.points.astype(float)
    g = gt.points.astype(float)
    acc = _directed_mean(p, g, max_dist)
    comp = _directed_mean(g, p, max_dist)
    return CloudMetrics(acc=acc, comp=comp, overall=(acc + comp) / 2.0)


def format_report(entries: dict) -> str:
    """key=value lines with stable float formatting (for files and stdout)."""
    lines = []
    for key, value in entries.items():
        if isinstance(value, float):
            lines.append(f"{key}={value:.9g}")
        else:
            lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def write_report(path, entries: dict) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_report(entries))
