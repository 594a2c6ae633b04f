import numpy as np
import pytest

from splatseg import CameraIntrinsics, PointCloud


@pytest.fixture(scope="session", autouse=True)
def _compile_kernels():
    # one-time JIT compilation, so individual tests measure steady state
    from splatseg.splat import warmup_kernels

    warmup_kernels()


@pytest.fixture
def rng():
    return np.random.default_rng(20260823)


def make_cloud(xyz, rgb=None, labels=None, intensity=None):
    xyz = np.asarray(xyz, dtype=np.float64)
    n = len(xyz)
    if rgb is None:
        rgb = np.full((n, 3), 128.0)
    if intensity is None:
        intensity = np.zeros(n)
    return PointCloud(xyz, np.asarray(intensity, float), np.asarray(rgb, float), labels)


def square_intrinsics(size: int, f: float | None = None) -> CameraIntrinsics:
    if f is None:
        f = size / 2.0
    return CameraIntrinsics(fx=f, fy=f, cx=size / 2.0, cy=size / 2.0, width=size, height=size)
