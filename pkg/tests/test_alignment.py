import numpy as np
import pytest

from monosweep.alignment import (
    AlignmentParams,
    apply_alignment,
    fit_scale_shift,
    initial_scale,
    select_confident,
)
from monosweep.errors import DegenerateFit, EmptySelection, InvalidConfig
from monosweep.synth import MonoOracleParams, make_mono_depth

RANGE = (425.0, 935.0)


class TestSelectConfident:
    def test_uniform_ties_row_major(self):
        conf = np.full((10, 10), 0.5)
        rows, cols = select_confident(conf, 0.8)
        assert len(rows) == 80
        flat = rows * 10 + cols
        assert np.array_equal(flat, np.arange(80))

    def test_top_half(self):
        conf = np.array([[0.9, 0.1], [0.5, 0.7]])
        rows, cols = select_confident(conf, 0.5)
        picked = set(zip(rows.tolist(), cols.tolist()))
        assert picked == {(0, 0), (1, 1)}

    def test_keep_all(self):
        conf = np.random.default_rng(0).uniform(size=(4, 4))
        rows, _ = select_confident(conf, 1.0)
        assert len(rows) == 16

    def test_valid_mask_respected(self):
        conf = np.array([[0.9, 0.8], [0.7, 0.6]])
        valid = np.array([[False, True], [True, False]])
        rows, cols = select_confident(conf, 1.0, valid)
        assert set(zip(rows.tolist(), cols.tolist())) == {(0, 1), (1, 0)}

    def test_empty_raises(self):
        with pytest.raises(EmptySelection):
            select_confident(np.ones((2, 2)), 0.5, np.zeros((2, 2), dtype=bool))


class TestFitScaleShift:
    def test_self_fit_identity(self):
        rng = np.random.default_rng(1)
        depth = rng.uniform(450, 900, size=(8, 8))
        mono = 1.0 / depth
        coords = np.nonzero(np.ones_like(depth, dtype=bool))
        fit = fit_scale_shift(depth, mono, coords)
        assert fit.a == pytest.approx(1.0, abs=1e-12)
        assert fit.b == pytest.approx(0.0, abs=1e-12)

    def test_oracle_inversion(self, sphere_scene):
        gt = sphere_scene.gt_depths[0]
        mask = sphere_scene.valid_masks[0]
        mono = make_mono_depth(gt, MonoOracleParams(a_true=2.0, b_true=0.2), mask)
        fit = fit_scale_shift(np.where(mask, gt, 1.0), mono, np.nonzero(mask))
        assert fit.a == pytest.approx(2.0, abs=1e-9)
        assert fit.b == pytest.approx(0.2, abs=1e-9)

    def test_filtered_fit_ignores_corruption(self, plane_scene):
        # view 1 is oblique, so the plane's depth (and mono) actually varies
        gt = plane_scene.gt_depths[1].copy()
        mono = make_mono_depth(gt, MonoOracleParams(a_true=1.5, b_true=0.1))
        n = gt.size
        rng = np.random.default_rng(2)
        bad = rng.choice(n, size=n // 5, replace=False)
        conf = np.ones_like(gt)
        conf.ravel()[bad] = 0.0
        gt.ravel()[bad] *= rng.uniform(2.0, 3.0, size=len(bad))  # corrupt 20%
        coords = select_confident(conf, 0.8)
        fit = fit_scale_shift(gt, mono, coords)
        assert fit.a == pytest.approx(1.5, abs=1e-9)
        assert fit.b == pytest.approx(0.1, abs=1e-9)

    def test_residual_orthogonality(self):
        rng = np.random.default_rng(3)
        mono = rng.uniform(0.5, 2.0, size=(6, 6))
        depth = 1.0 / (0.7 * mono + 0.3 + rng.normal(0, 0.01, size=(6, 6)))
        coords = np.nonzero(np.ones_like(depth, dtype=bool))
        fit = fit_scale_shift(depth, mono, coords)
        r = 1.0 / depth - (fit.a * mono + fit.b)
        scale = np.abs(1.0 / depth).sum()
        assert abs(r.sum()) / scale < 1e-9
        assert abs((r * mono).sum()) / scale < 1e-9

    def test_constant_mono_degenerate(self):
        with pytest.raises(DegenerateFit):
            fit_scale_shift(
                np.full((2, 2), 600.0),
                np.full((2, 2), 1.0),
                np.nonzero(np.ones((2, 2), dtype=bool)),
            )

    def test_too_few_points(self):
        coords = (np.array([0]), np.array([0]))
        with pytest.raises(DegenerateFit):
            fit_scale_shift(np.full((2, 2), 600.0), np.ones((2, 2)), coords)


class TestApplyAlignment:
    def test_identity_params(self):
        depth = apply_alignment(np.full((2, 2), 1 / 600.0), AlignmentParams(1.0, 0.0), RANGE)
        assert np.allclose(depth, 600.0)

    def test_nonpositive_clamps_to_max(self):
        depth = apply_alignment(np.array([[0.0]]), AlignmentParams(1.0, 0.0), RANGE)
        assert depth[0, 0] == 935.0
        depth = apply_alignment(np.array([[-2.0]]), AlignmentParams(1.0, 0.001), RANGE)
        assert depth[0, 0] == 935.0

    def test_output_within_range(self):
        rng = np.random.default_rng(4)
        mono = rng.uniform(-5, 5, size=(8, 8))
        depth = apply_alignment(mono, AlignmentParams(0.3, 0.001), RANGE)
        assert (depth >= RANGE[0]).all() and (depth <= RANGE[1]).all()

    def test_end_to_end_inversion(self, step_scene):
        gt = step_scene.gt_depths[0]
        mask = step_scene.valid_masks[0]
        mono = make_mono_depth(gt, MonoOracleParams(a_true=0.8, b_true=0.05), mask)
        fit = fit_scale_shift(np.where(mask, gt, 1.0), mono, np.nonzero(mask))
        aligned = apply_alignment(mono, fit, RANGE)
        assert np.abs(aligned[mask] - gt[mask]).max() < 1e-6

    def test_monotone_larger_mono_nearer(self):
        mono = np.array([[0.0006, 0.001, 0.0014]])
        depth = apply_alignment(mono, AlignmentParams(1.0, 0.0005), RANGE)
        assert depth[0, 0] > depth[0, 1] > depth[0, 2]


class TestInitialScale:
    def test_endpoint_mapping(self):
        depth = initial_scale(np.array([[0.0, 1.0]]), RANGE)
        assert depth[0, 0] == pytest.approx(935.0)
        assert depth[0, 1] == pytest.approx(425.0)

    def test_midpoint_in_inverse_depth(self):
        depth = initial_scale(np.array([[0.0, 0.5, 1.0]]), RANGE)
        assert depth[0, 1] == pytest.approx(2.0 / (1 / 425 + 1 / 935), rel=1e-12)

    def test_constant_mono_degenerate(self):
        with pytest.raises(DegenerateFit):
            initial_scale(np.full((3, 3), 0.5), RANGE)
