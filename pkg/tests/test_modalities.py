import numpy as np
import pytest

from splatseg import DataError, depth_to_jet, normals_from_depth
from splatseg.modalities import backproject_depth

from conftest import square_intrinsics
from oracles import jet_oracle


def analytic_slant_depth(k, a, c):
    """Depth image of the plane z = a*x + c seen by an identity camera.

    Solving z = a*(u - cx)/fx*z + c per pixel column gives
    z = c / (1 - a*(u - cx)/fx).
    """
    u = np.arange(k.width) + 0.5
    z_col = c / (1.0 - a * (u - k.cx) / k.fx)
    return np.tile(z_col.astype(np.float32), (k.height, 1))


class TestNormals:
    def test_frontal_plane(self):
        k = square_intrinsics(16)
        depth = np.full((16, 16), 7.0, dtype=np.float32)
        n = normals_from_depth(depth, k)
        assert np.allclose(n, [0.0, 0.0, -1.0], atol=1e-9)

    def test_borders_use_one_sided_differences(self):
        k = square_intrinsics(8)
        depth = np.full((8, 8), 3.0, dtype=np.float32)
        n = normals_from_depth(depth, k)
        assert not np.isnan(n).any()

    def test_slanted_plane_analytic(self):
        k = square_intrinsics(32)
        a, c = 0.3, 10.0
        depth = analytic_slant_depth(k, a, c)
        n = normals_from_depth(depth, k)
        # plane z - a*x = c has normal prop to (-a, 0, 1); flipped to face camera
        want = np.array([a, 0.0, -1.0])
        want /= np.linalg.norm(want)
        interior = n[2:-2, 2:-2]
        err = np.linalg.norm(interior - want, axis=-1)
        assert err.max() < 1e-3

    def test_unit_norm(self, rng):
        k = square_intrinsics(24)
        depth = (5.0 + 0.05 * rng.standard_normal((24, 24))).astype(np.float32)
        n = normals_from_depth(depth, k)
        norms = np.linalg.norm(n, axis=-1)
        assert np.all(np.abs(norms - 1.0) < 1e-6)

    def test_faces_camera(self, rng):
        k = square_intrinsics(24)
        depth = (5.0 + 0.1 * rng.standard_normal((24, 24))).astype(np.float32)
        n = normals_from_depth(depth, k)
        assert np.all(n[..., 2] <= 1e-12)

    def test_empty_image_all_nan(self):
        k = square_intrinsics(8)
        depth = np.full((8, 8), np.nan, dtype=np.float32)
        n = normals_from_depth(depth, k)
        assert np.isnan(n).all()

    def test_isolated_pixel_undefined(self):
        k = square_intrinsics(8)
        depth = np.full((8, 8), np.nan, dtype=np.float32)
        depth[4, 4] = 5.0
        n = normals_from_depth(depth, k)
        assert np.isnan(n[4, 4]).all()

    def test_discontinuity_not_bridged(self):
        k = square_intrinsics(16)
        depth = np.full((16, 16), 5.0, dtype=np.float32)
        depth[:, 8:] = 50.0  # jump >> threshold
        n = normals_from_depth(depth, k, depth_discontinuity=2.0)
        # both sides stay frontal; the seam never mixes depths across the jump
        ok = ~np.isnan(n[..., 0])
        assert np.allclose(n[ok], [0.0, 0.0, -1.0], atol=1e-6)

    def test_backproject_center_pixel(self):
        k = square_intrinsics(16)
        depth = np.full((16, 16), 4.0, dtype=np.float32)
        pts = backproject_depth(depth, k)
        # pixel (8, 8) center sits half a pixel past the principal point
        want_xy = 0.5 / k.fx * 4.0
        assert np.allclose(pts[8, 8], [want_xy, want_xy, 4.0], atol=1e-7)


class TestJet:
    def test_midrange_color(self):
        depth = np.array([[50.0]], dtype=np.float32)
        img = depth_to_jet(depth)
        assert tuple(img[0, 0]) == (128, 255, 128)

    def test_range_start_deep_blue(self):
        depth = np.array([[2.0]], dtype=np.float32)
        img = depth_to_jet(depth, d_min=2.0, d_max=4.0)
        assert tuple(img[0, 0]) == (0, 0, 128)

    def test_empty_pixels_black(self):
        depth = np.array([[np.nan, 10.0]], dtype=np.float32)
        img = depth_to_jet(depth)
        assert tuple(img[0, 0]) == (0, 0, 0)
        assert tuple(img[0, 1]) != (0, 0, 0)

    def test_clamps_out_of_range(self):
        depth = np.array([[0.5, 500.0]], dtype=np.float32)
        img = depth_to_jet(depth, d_min=2.0, d_max=4.0)
        assert tuple(img[0, 0]) == (0, 0, 128)
        assert tuple(img[0, 1]) == jet_oracle(1.0)

    def test_matches_scalar_oracle(self, rng):
        d = rng.uniform(0.5, 99.5, 64).astype(np.float32)
        img = depth_to_jet(d.reshape(8, 8))
        for val, px in zip(d, img.reshape(-1, 3)):
            assert tuple(px) == jet_oracle(float(val) / 100.0)

    def test_monotone_along_colormap(self):
        # map each rendered color back to its position on a dense reference
        # ramp; positions must be non-decreasing in depth
        ramp_t = np.linspace(0.0, 1.0, 2001)
        ramp = np.array([jet_oracle(t) for t in ramp_t], dtype=np.float64)
        depths = np.linspace(0.1, 99.9, 257, dtype=np.float32)
        img = depth_to_jet(depths.reshape(1, -1))[0].astype(np.float64)
        pos = [
            int(np.argmin(np.linalg.norm(ramp - px, axis=1))) for px in img
        ]
        assert all(b >= a for a, b in zip(pos, pos[1:]))

    def test_custom_range(self):
        depth = np.array([[3.0]], dtype=np.float32)
        img = depth_to_jet(depth, d_min=2.0, d_max=4.0)
        assert tuple(img[0, 0]) == (128, 255, 128)

    def test_bad_range_rejected(self):
        with pytest.raises(DataError):
            depth_to_jet(np.full((2, 2), 5.0, dtype=np.float32), d_min=5.0, d_max=5.0)
