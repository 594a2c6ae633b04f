"""Image modalities derived from rendered depth.

Surface normals come from the depth image alone: covered pixels are
back-projected to camera-space 3D, tangents are estimated by central
differences (falling back to one-sided at borders and next to empty or
depth-discontinuous neighbors), and the normal is their cross product
oriented toward the camera.  Depth is also colorized with the classic
four-segment jet ramp so color-trained scorers can consume it.
"""

from __future__ import annotations

import numpy as np

from .camera import CameraIntrinsics
from .errors import DataError
from .formats import quantize_u8
from .validation import check_depth_image

DEFAULT_DEPTH_DISCONTINUITY = 2.0  # meters
DEFAULT_JET_RANGE = (0.0, 100.0)  # meters


def backproject_depth(depth: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Lift each covered pixel center to camera-space 3D; NaN elsewhere."""
    check_depth_image(depth)
    h, w = depth.shape
    u = (np.arange(w) + 0.5)[None, :] - intrinsics.cx
    v = (np.arange(h) + 0.5)[:, None] - intrinsics.cy
    points = np.empty((h, w, 3))
    points[:, :, 0] = u / intrinsics.fx * depth
    points[:, :, 1] = v / intrinsics.fy * depth
    points[:, :, 2] = depth
    return points


def _shifted(a: np.ndarray, dr: int, dc: int) -> np.ndarray:
    """Shift a (H, W, ...) array so out[r, c] = a[r+dr, c+dc]; NaN-pad."""
    out = np.full_like(a, np.nan)
    h, w = a.shape[:2]
    rs = slice(max(dr, 0), h + min(dr, 0))
    cs = slice(max(dc, 0), w + min(dc, 0))
    rd = slice(max(-dr, 0), h + min(-dr, 0))
    cd = slice(max(-dc, 0), w + min(-dc, 0))
    out[rd, cd] = a[rs, cs]
    return out


def normals_from_depth(
    depth: np.ndarray,
    intrinsics: CameraIntrinsics,
    depth_discontinuity: float = DEFAULT_DEPTH_DISCONTINUITY,
) -> np.ndarray:
    """Estimate camera-space unit normals from a depth image.

    Returns (H, W, 3) float64 with NaN rows at empty pixels and wherever
    the tangent stencil lacks usable neighbors.  Normals are oriented
    toward the camera (n_z <= 0).
    """
    check_depth_image(depth)
    if depth_discontinuity <= 0:
        raise DataError("depth_discontinuity must be positive")
    covered = np.isfinite(depth)
    points = backproject_depth(depth, intrinsics)

    # a neighbor is usable when covered and depth-close to the center;
    # precompute closeness per direction instead of per pair
    normals = np.full_like(points, np.nan)
    d = depth

    def ok_dir(dr, dc):
        nd = _shifted(d, dr, dc)
        with np.errstate(invalid="ignore"):
            close = np.abs(nd - d) <= depth_discontinuity
        return covered & np.isfinite(nd) & close

    # tangency masks depend on the center pixel too, so fold ``covered`` in
    ok_right = ok_dir(0, 1)
    ok_left = ok_dir(0, -1)
    ok_down = ok_dir(1, 0)
    ok_up = ok_dir(-1, 0)

    t_u = _stencil_diff(points, ok_right, ok_left, 0, 1)
    t_v = _stencil_diff(points, ok_down, ok_up, 1, 0)

    have = covered & np.isfinite(t_u[:, :, 0]) & np.isfinite(t_v[:, :, 0])
    n = np.cross(t_u[have], t_v[have])
    norm = np.linalg.norm(n, axis=1)
    good = norm > 0
    n[good] /= norm[good, None]
    n[~good] = np.nan
    # orient toward the camera: visible surfaces face against the view ray
    flip = n[:, 2] > 0
    n[flip] = -n[flip]
    normals[have] = n
    return normals


def _stencil_diff(points, ok_plus, ok_minus, dr, dc):
    p_plus = _shifted(points, dr, dc)
    p_minus = _shifted(points, -dr, -dc)
    t = np.full_like(points, np.nan)
    both = ok_plus & ok_minus
    only_plus = ok_plus & ~ok_minus
    only_minus = ok_minus & ~ok_plus
    t[both] = (p_plus - p_minus)[both]
    t[only_plus] = (p_plus - points)[only_plus]
    t[only_minus] = (points - p_minus)[only_minus]
    return t


def depth_to_jet(
    depth: np.ndarray,
    d_min: float = DEFAULT_JET_RANGE[0],
    d_max: float = DEFAULT_JET_RANGE[1],
) -> np.ndarray:
    """Colorize depth with the four-segment jet ramp; empty pixels map to
    black.  Depths are normalized to [0, 1] over [d_min, d_max] and
    clamped outside it."""
    check_depth_image(depth)
    if not d_max > d_min:
        raise DataError("jet range requires d_max > d_min")
    t = np.clip((depth - d_min) / (d_max - d_min), 0.0, 1.0)
    covered = np.isfinite(depth)
    t = np.where(covered, t, 0.0)
    r = np.clip(1.5 - np.abs(4.0 * t - 3.0), 0.0, 1.0)
    g = np.clip(1.5 - np.abs(4.0 * t - 2.0), 0.0, 1.0)
    b = np.clip(1.5 - np.abs(4.0 * t - 1.0), 0.0, 1.0)
    img = quantize_u8(np.stack([r, g, b], axis=-1) * 255.0)
    img[~covered] = 0
    return img
