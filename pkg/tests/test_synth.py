import numpy as np
import pytest

from monosweep.camera import bilinear_sample, pixel_grid, relative_pose, warp_pixels
from monosweep.errors import InvalidConfig
from monosweep.synth import (
    analytic_depth,
    STEP_FAR_Z,
    STEP_NEAR_Z,
    TEXTURE_VARIANCE_FLOOR,
    MonoOracleParams,
    generate_scene,
    load_scene,
    make_mono_depth,
    save_scene,
)


def reprojection_agreement(scene, src_idx):
    """Check warped gt depth against source gt where co-visibility is provable.

    Co-visibility comes from the analytic caster (exact, no interpolation);
    pixels whose source sampling footprint spans a depth discontinuity are
    excluded since bilinear interpolation is meaningless across a jump.
    Returns (fraction agreeing within 1e-3 relative, fraction usable).
    """
    kind = scene.meta["kind"]
    ref, src = scene.views[0], scene.views[src_idx]
    pose = relative_pose(ref, src)
    u, v = pixel_grid(ref.height, ref.width)
    depth = scene.gt_depths[0]
    u2, v2, z2, ok = warp_pixels(u, v, depth, pose, ref.intrinsics, src.intrinsics)
    sampled, in_frame = bilinear_sample(scene.gt_depths[src_idx], u2, v2)
    usable = scene.valid_masks[0] & ok & in_frame & (sampled > 0)

    # exact co-visibility: the source ray through the projection must hit the
    # same 3D point (depth match to the analytic caster)
    exact = analytic_depth(src, kind, np.where(usable, u2, 0.0), np.where(usable, v2, 0.0))
    covisible = usable & (np.abs(exact - z2) <= 1e-6 * z2)

    # footprint smoothness: 2x2 neighbourhood of the sample must not span a jump
    gt_src = scene.gt_depths[src_idx]
    u0 = np.clip(np.floor(np.where(usable, u2, 0.0)).astype(int), 0, gt_src.shape[1] - 2)
    v0 = np.clip(np.floor(np.where(usable, v2, 0.0)).astype(int), 0, gt_src.shape[0] - 2)
    corners = np.stack(
        [gt_src[v0, u0], gt_src[v0, u0 + 1], gt_src[v0 + 1, u0], gt_src[v0 + 1, u0 + 1]]
    )
    smooth = (corners.max(axis=0) - corners.min(axis=0)) < 0.01 * z2
    testable = covisible & smooth

    rel = np.abs(sampled[testable] - z2[testable]) / z2[testable]
    return (rel < 1e-3).mean(), testable.mean()


class TestGenerateScene:
    def test_plane_reference_depth_constant(self, plane_scene):
        gt = plane_scene.gt_depths[0]
        assert plane_scene.valid_masks[0].all()
        assert np.allclose(gt, 600.0, atol=1e-9)

    def test_step_discontinuity_column(self, step_scene):
        gt = step_scene.gt_depths[0]
        col = step_scene.meta["step_column"]
        left = gt[:, : int(np.floor(col)) + 1]
        right = gt[:, int(np.ceil(col)) :]
        assert np.allclose(left, STEP_NEAR_Z, atol=1e-9)
        assert np.allclose(right, STEP_FAR_Z, atol=1e-9)

    def test_sphere_depths_in_range(self, sphere_scene):
        for gt, mask, view in zip(
            sphere_scene.gt_depths, sphere_scene.valid_masks, sphere_scene.views
        ):
            assert mask.any()
            assert (gt[mask] >= view.depth_min).all()
            assert (gt[mask] <= view.depth_max).all()

    @pytest.mark.parametrize("kind", ["plane", "step", "sphere-on-plane"])
    def test_cross_view_reprojection(self, kind, plane_scene, step_scene, sphere_scene):
        scene = {"plane": plane_scene, "step": step_scene, "sphere-on-plane": sphere_scene}[kind]
        for s in range(1, scene.n_views):
            agree, coverage = reprojection_agreement(scene, s)
            assert coverage > 0.5
            assert agree == 1.0

    def test_determinism(self):
        a = generate_scene("step", resolution=(32, 32), n_views=2, texture_seed=9)
        b = generate_scene("step", resolution=(32, 32), n_views=2, texture_seed=9)
        for ia, ib in zip(a.images, b.images):
            assert np.array_equal(ia, ib)
        for da, db in zip(a.gt_depths, b.gt_depths):
            assert np.array_equal(da, db)

    def test_texture_variance_floor(self, plane_scene, step_scene):
        for scene in (plane_scene, step_scene):
            img = scene.images[0]
            tiles = img[:64, :80].reshape(8, 8, 10, 8)
            assert tiles.var(axis=(1, 3)).min() >= TEXTURE_VARIANCE_FLOOR

    def test_rejects_degenerate_layouts(self):
        with pytest.raises(InvalidConfig):
            generate_scene("plane", resolution=(8, 8), n_views=3)
        with pytest.raises(InvalidConfig):
            generate_scene("plane", resolution=(32, 32), n_views=1)
        with pytest.raises(InvalidConfig):
            generate_scene("cube", resolution=(32, 32), n_views=2)


class TestMonoOracle:
    def test_identity_params(self, plane_scene):
        gt = plane_scene.gt_depths[0]
        mono = make_mono_depth(gt, MonoOracleParams())
        assert np.allclose(mono, 1.0 / gt)

    def test_affine_identity_holds(self, sphere_scene):
        gt = sphere_scene.gt_depths[0]
        mask = sphere_scene.valid_masks[0]
        params = MonoOracleParams(a_true=2.0, b_true=0.2)
        mono = make_mono_depth(gt, params, mask)
        lhs = 2.0 * mono[mask] + 0.2
        assert np.abs(lhs - 1.0 / gt[mask]).max() < 1e-12

    def test_noise_determinism(self, plane_scene):
        gt = plane_scene.gt_depths[0]
        params = MonoOracleParams(noise_sigma=1e-4, seed=7)
        a = make_mono_depth(gt, params)
        b = make_mono_depth(gt, params)
        assert np.array_equal(a, b)
        c = make_mono_depth(gt, MonoOracleParams(noise_sigma=1e-4, seed=8))
        assert not np.array_equal(a, c)

    def test_rejects_nonpositive_scale(self):
        with pytest.raises(InvalidConfig):
            MonoOracleParams(a_true=0.0)


class TestSceneOnDisk:
    def test_round_trip(self, tmp_path, step_scene):
        monos = [make_mono_depth(d, MonoOracleParams(), m)
                 for d, m in zip(step_scene.gt_depths, step_scene.valid_masks)]
        manifest = save_scene(step_scene, tmp_path / "scene", monos=monos)
        scene, loaded_monos = load_scene(manifest)
        assert scene.n_views == step_scene.n_views
        assert scene.meta["kind"] == "step"
        assert float(scene.meta["step_column"]) == step_scene.meta["step_column"]
        for a, b in zip(scene.gt_depths, step_scene.gt_depths):
            assert np.abs(a - b).max() < 1e-3  # float32 PFM quantisation
        for a, b in zip(loaded_monos, monos):
            assert np.abs(a - b).max() < 1e-6
        for view, orig in zip(scene.views, step_scene.views):
            assert np.allclose(view.rotation, orig.rotation)
            assert np.allclose(view.translation, orig.translation)
