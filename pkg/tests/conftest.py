import numpy as np
import pytest

from monosweep.camera import CameraView
from monosweep.synth import generate_scene


def random_view(rng, width=40, height=32):
    """Random but valid camera: orthonormal pose via QR, modest translation."""
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    fx = rng.uniform(60, 200)
    intr = np.array(
        [[fx, 0.0, (width - 1) / 2], [0.0, fx, (height - 1) / 2], [0.0, 0.0, 1.0]]
    )
    return CameraView(
        intrinsics=intr,
        rotation=q,
        translation=rng.uniform(-50, 50, size=3),
        depth_min=400.0,
        depth_max=1000.0,
        width=width,
        height=height,
    )


@pytest.fixture(scope="session")
def plane_scene():
    return generate_scene("plane", resolution=(64, 80), n_views=3, texture_seed=3)


@pytest.fixture(scope="session")
def step_scene():
    return generate_scene("step", resolution=(64, 80), n_views=3, texture_seed=5)


@pytest.fixture(scope="session")
def sphere_scene():
    return generate_scene("sphere-on-plane", resolution=(64, 80), n_views=3, texture_seed=7)
