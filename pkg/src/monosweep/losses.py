"""Diagnostic training-objective terms: cross-entropy and relative consistency.

Nothing is trained here; these quantities are computed on pipeline outputs
and reported.  The relative-consistency hinge penalises predicted depth
pairs whose ordering contradicts the monocular ordering (mono is
disparity-like: larger means nearer, hence the sign negation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask, InvalidConfig
from .sampling import DepthHypotheses

_PROB_FLOOR = 1e-12
_RESAMPLE_TRIES = 10


@dataclass(eq=False)
class PixelPairSample:
    """Two equally long coordinate lists of (row, col) pairs."""

    coords1: np.ndarray  # (M, 2) int
    coords2: np.ndarray
    seed: int

    def __post_init__(self):
        if self.coords1.shape != self.coords2.shape:
            raise InvalidConfig("pair coordinate lists must have equal shape")

    def __len__(self) -> int:
        return self.coords1.shape[0]


def cross_entropy_loss(
    prob: np.ndarray,
    gt_depth: np.ndarray,
    hyp: DepthHypotheses,
    valid_mask: np.ndarray,
) -> float:
    """Mean -log P at the candidate nearest to ground truth (one-hot target).

    Probabilities are floored at 1e-12 before the log.  Raises EmptyMask if
    no pixel is valid.
    """
    mask = np.asarray(valid_mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("cross entropy needs at least one valid pixel")
    d, h, w = prob.shape
    values = hyp.per_pixel(h, w)
    gt = np.asarray(gt_depth, dtype=float)
    dmin, dmax = hyp.range_mm
    if ((gt[mask] < dmin) | (gt[mask] > dmax)).any():
        raise InvalidConfig("gt depth outside the global range on valid pixels")
    i_gt = np.abs(values - gt[None]).argmin(axis=0)
    p = np.take_along_axis(prob, i_gt[None], axis=0)[0]
    return float(-np.log(np.maximum(p[mask], _PROB_FLOOR)).mean())


def sample_pairs(
    valid_mask: np.ndarray,
    m: int,
    seed: int,
    mono: np.ndarray | None = None,
) -> PixelPairSample:
    """Two seeded sets of M pixels drawn with replacement from the mask.

    When `mono` is given, pairs with zero monocular difference are redrawn up
    to a retry cap and then dropped, so the consistency sign is always
    defined.  Raises EmptyMask with fewer than 2 valid pixels.
    """
    mask = np.asarray(valid_mask, dtype=bool)
    rows, cols = np.nonzero(mask)
    if len(rows) < 2:
        raise EmptyMask("pair sampling needs at least 2 valid pixels")
    rng = np.random.default_rng(seed)
    coords = np.stack([rows, cols], axis=1)
    if m == 0:
        empty = np.empty((0, 2), dtype=int)
        return PixelPairSample(coords1=empty, coords2=empty, seed=seed)

    i1 = rng.integers(0, len(coords), size=m)
    i2 = rng.integers(0, len(coords), size=m)
    if mono is not None:
        mono = np.asarray(mono, dtype=float)

        def mono_at(idx):
            return mono[coords[idx, 0], coords[idx, 1]]

        for _ in range(_RESAMPLE_TRIES):
            tied = mono_at(i1) == mono_at(i2)
            if not tied.any():
                break
            i1[tied] = rng.integers(0, len(coords), size=int(tied.sum()))
            i2[tied] = rng.integers(0, len(coords), size=int(tied.sum()))
        keep = mono_at(i1) != mono_at(i2)
        i1, i2 = i1[keep], i2[keep]
    return PixelPairSample(coords1=coords[i1], coords2=coords[i2], seed=seed)


def relative_consistency_loss(
    d_prob: np.ndarray,
    mono_resized: np.ndarray,
    pairs: PixelPairSample,
) -> float:
    """Hinge on depth-pair orderings that contradict the monocular ordering.

    e = (d1 - d2) * (-sign(mono1 - mono2)); loss = mean(max(0, -e)).  With
    disparity-like mono, agreement makes e positive and costs nothing.
    An empty sample yields 0.
    """
    if len(pairs) == 0:
        return 0.0
    r1, c1 = pairs.coords1[:, 0], pairs.coords1[:, 1]
    r2, c2 = pairs.coords2[:, 0], pairs.coords2[:, 1]
    d1, d2 = d_prob[r1, c1], d_prob[r2, c2]
    sign = np.sign(mono_resized[r1, c1] - mono_resized[r2, c2])
    e = (d1 - d2) * (-sign)
    return float(np.maximum(0.0, -e).mean())


def overall_loss(ce_per_stage, rc_final: float, gamma: float) -> float:
    """Sum of the four per-stage cross-entropies plus gamma times the final
    relative-consistency term."""
    ce = [float(x) for x in ce_per_stage]
    if len(ce) != 4:
        raise InvalidConfig(f"expected 4 cross-entropy terms, got {len(ce)}")
    if not all(np.isfinite(ce)) or not np.isfinite(rc_final):
        raise InvalidConfig("loss terms must be finite")
    return float(sum(ce) + gamma * rc_final)
