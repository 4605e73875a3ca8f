import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monosweep.camera import (
    CameraView,
    PixelCoord,
    RelativePose,
    backward_lookup,
    bilinear_resize,
    bilinear_sample,
    forward_warp_coord,
    load_camera_text,
    relative_pose,
    save_camera_text,
    warp_pixels,
)
from monosweep.errors import BehindCamera, ConfigError, InvalidConfig

from conftest import random_view

K_TOY = np.array([[100.0, 0.0, 50.0], [0.0, 100.0, 50.0], [0.0, 0.0, 1.0]])
IDENTITY = RelativePose(np.eye(3), np.zeros(3))


def simple_view(**overrides):
    kwargs = dict(
        intrinsics=K_TOY,
        rotation=np.eye(3),
        translation=np.zeros(3),
        depth_min=400.0,
        depth_max=1000.0,
        width=101,
        height=101,
    )
    kwargs.update(overrides)
    return CameraView(**kwargs)


class TestCameraView:
    def test_validates_rotation(self):
        with pytest.raises(InvalidConfig):
            simple_view(rotation=np.eye(3) * 2.0)

    def test_validates_depth_range(self):
        with pytest.raises(InvalidConfig):
            simple_view(depth_min=700.0, depth_max=500.0)

    def test_validates_focals(self):
        bad = K_TOY.copy()
        bad[0, 0] = -5.0
        with pytest.raises(InvalidConfig):
            simple_view(intrinsics=bad)

    def test_center_identity_pose(self):
        assert np.allclose(simple_view().center, 0.0)


class TestRelativePose:
    def test_same_view_is_identity(self):
        view = simple_view()
        pose = relative_pose(view, view)
        assert np.allclose(pose.rotation, np.eye(3), atol=1e-12)
        assert np.allclose(pose.translation, 0.0, atol=1e-12)

    def test_pure_translation(self):
        # ref displaced by (-1, 0, 0) in world, both axis-aligned
        src = simple_view()
        ref = simple_view(translation=np.array([1.0, 0.0, 0.0]))
        pose = relative_pose(src, ref)
        assert np.allclose(pose.rotation, np.eye(3))
        assert np.allclose(pose.translation, [1.0, 0.0, 0.0])

    def test_compose_and_check_on_random_points(self):
        rng = np.random.default_rng(42)
        src, ref = random_view(rng), random_view(rng)
        pose = relative_pose(src, ref)
        pts = rng.uniform(-500, 500, size=(3, 100))
        src_cam = src.rotation @ pts + src.translation[:, None]
        ref_cam = ref.rotation @ pts + ref.translation[:, None]
        err = np.abs(pose.apply(src_cam) - ref_cam).max()
        assert err < 1e-9

    def test_inverse_composes_to_identity(self):
        rng = np.random.default_rng(7)
        pose = relative_pose(random_view(rng), random_view(rng))
        inv = pose.inverse()
        assert np.abs(inv.rotation @ pose.rotation - np.eye(3)).max() < 1e-9
        assert np.abs(pose.rotation @ inv.translation + pose.translation).max() < 1e-9


class TestForwardWarp:
    def test_identity_pose_is_identity(self):
        for d in (1.0, 10.0, 500.0):
            out = forward_warp_coord(PixelCoord(12.5, 30.25), d, IDENTITY, K_TOY, K_TOY)
            assert np.allclose(out, (12.5, 30.25), atol=1e-12)

    def test_hand_projection(self):
        pose = RelativePose(np.eye(3), np.array([1.0, 0.0, 0.0]))
        out = forward_warp_coord(PixelCoord(50, 50), 10.0, pose, K_TOY, K_TOY)
        assert np.allclose(out, (60.0, 50.0), atol=1e-12)

    def test_parallax_shrinks_with_depth(self):
        pose = RelativePose(np.eye(3), np.array([1.0, 0.0, 0.0]))
        out = forward_warp_coord(PixelCoord(50, 50), 100.0, pose, K_TOY, K_TOY)
        assert np.allclose(out, (51.0, 50.0), atol=1e-12)

    def test_behind_camera_raises(self):
        flip = RelativePose(
            np.diag([1.0, -1.0, -1.0]), np.zeros(3)
        )  # 180deg about x: points end up behind
        with pytest.raises(BehindCamera):
            forward_warp_coord(PixelCoord(50, 50), 10.0, flip, K_TOY, K_TOY)

    def test_epipolar_collinearity(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            src, ref = random_view(rng), random_view(rng)
            pose = relative_pose(src, ref)
            c = PixelCoord(rng.uniform(0, 39), rng.uniform(0, 31))
            pts = []
            for d in (450.0, 600.0, 900.0):
                try:
                    pts.append(forward_warp_coord(c, d, pose, src.intrinsics, ref.intrinsics))
                except BehindCamera:
                    break
            if len(pts) < 3:
                continue
            a, b, cc = (np.array([p[0], p[1], 1.0]) for p in pts)
            area = np.cross(b - a, cc - a)
            span = max(np.linalg.norm(b - a), np.linalg.norm(cc - a), 1.0)
            assert abs(area[2]) / span < 1e-6


class TestBackwardLookup:
    def test_identity(self):
        out = backward_lookup(PixelCoord(3.0, 4.0), 55.0, IDENTITY, K_TOY, K_TOY)
        assert np.allclose(out, (3.0, 4.0), atol=1e-12)

    def test_translation_baseline(self):
        pose_ref_to_src = RelativePose(np.eye(3), np.array([-1.0, 0.0, 0.0]))
        out = backward_lookup(PixelCoord(60, 50), 10.0, pose_ref_to_src, K_TOY, K_TOY)
        assert np.allclose(out, (50.0, 50.0), atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_round_trip_property(self, seed):
        rng = np.random.default_rng(seed)
        src, ref = random_view(rng), random_view(rng)
        pose = relative_pose(src, ref)
        inv = pose.inverse()
        u = rng.uniform(0, src.width - 1, size=40)
        v = rng.uniform(0, src.height - 1, size=40)
        d = rng.uniform(src.depth_min, src.depth_max, size=40)
        u2, v2, d2, ok = warp_pixels(u, v, d, pose, src.intrinsics, ref.intrinsics)
        u3, v3, d3, ok3 = warp_pixels(u2[ok], v2[ok], d2[ok], inv, ref.intrinsics, src.intrinsics)
        assert ok3.all()
        assert np.abs(u3 - u[ok]).max(initial=0.0) < 1e-6
        assert np.abs(v3 - v[ok]).max(initial=0.0) < 1e-6
        assert np.abs(d3 - d[ok]).max(initial=0.0) < 1e-6


class TestBilinearSample:
    def test_integer_coordinate_exact(self):
        grid = np.arange(12.0).reshape(3, 4)
        val, ok = bilinear_sample(grid, 2, 1)
        assert ok and val == 6.0

    def test_midpoint_interpolates(self):
        grid = np.array([[2.0, 4.0]])
        val, ok = bilinear_sample(grid, 0.5, 0.0)
        assert ok and val == pytest.approx(3.0)

    def test_out_of_bounds_flagged(self):
        grid = np.ones((3, 3))
        val, ok = bilinear_sample(grid, -0.5, 0.0)
        assert not ok and val == 0.0

    def test_channel_grids(self):
        grid = np.stack([np.zeros((2, 2)), np.ones((2, 2))])
        vals, ok = bilinear_sample(grid, 0.5, 0.5)
        assert ok
        assert np.allclose(vals, [0.0, 1.0])

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(0)
        grid = rng.normal(size=(5, 7))
        us = rng.uniform(-1, 7, size=20)
        vs = rng.uniform(-1, 5, size=20)
        vals, ok = bilinear_sample(grid, us, vs)
        for i in range(20):
            v_i, ok_i = bilinear_sample(grid, us[i], vs[i])
            assert ok_i == ok[i]
            assert v_i == pytest.approx(vals[i], abs=1e-12)


class TestBilinearResize:
    def test_identity(self):
        grid = np.random.default_rng(1).normal(size=(6, 9))
        assert np.allclose(bilinear_resize(grid, (6, 9)), grid)

    def test_corners_preserved(self):
        grid = np.random.default_rng(2).normal(size=(4, 4))
        up = bilinear_resize(grid, (7, 7))
        assert up[0, 0] == pytest.approx(grid[0, 0])
        assert up[-1, -1] == pytest.approx(grid[-1, -1])

    def test_linear_ramp_exact(self):
        ramp = np.tile(np.linspace(0, 1, 5), (3, 1))
        up = bilinear_resize(ramp, (3, 9))
        assert np.allclose(up, np.tile(np.linspace(0, 1, 9), (3, 1)))


class TestCameraText:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        view = random_view(rng)
        path = tmp_path / "cam.txt"
        save_camera_text(path, view)
        back = load_camera_text(path, view.width, view.height)
        assert np.allclose(back.intrinsics, view.intrinsics)
        assert np.allclose(back.rotation, view.rotation)
        assert np.allclose(back.translation, view.translation)
        assert back.depth_min == pytest.approx(view.depth_min)
        assert back.depth_max == pytest.approx(view.depth_max)

    def test_two_number_depth_line(self, tmp_path):
        path = tmp_path / "cam.txt"
        ext = np.eye(4)
        body = "extrinsic\n" + "\n".join(
            " ".join(str(x) for x in row) for row in ext
        )
        body += "\n\nintrinsic\n100 0 50\n0 100 50\n0 0 1\n\n425.0 2.5\n"
        path.write_text(body)
        view = load_camera_text(path, 101, 101)
        assert view.depth_min == pytest.approx(425.0)
        assert view.depth_max == pytest.approx(425.0 + 2.5 * 191)

    def test_malformed_raises(self, tmp_path):
        path = tmp_path / "cam.txt"
        path.write_text("intrinsic only\n")
        with pytest.raises(ConfigError):
            load_camera_text(path, 10, 10)
