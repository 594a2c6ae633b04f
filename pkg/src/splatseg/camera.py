"""Virtual camera model and orbital view planning.

Cameras follow the computer-vision pinhole convention: x right, y down,
z forward, with world-to-camera poses ``p_cam = R @ p_world + t``.  Views
are planned as horizontal orbits around a fixed vertical (world z) axis,
the camera looking outward from the orbit center; several orbits with
different pitch angles and camera offsets are stacked to cover a scene.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .validation import check_rotation

DEFAULT_PITCHES_DEG = (-15.0, 0.0, 15.0, 30.0)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise DataError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise DataError("image size must be at least 1x1")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise DataError("principal point must lie inside the image")

    @classmethod
    def default(cls, width: int = 512, height: int = 512) -> "CameraIntrinsics":
        # wide field of view suited to outdoor scans: f = half the image width
        return cls(
            fx=width / 2.0,
            fy=width / 2.0,
            cx=width / 2.0,
            cy=height / 2.0,
            width=width,
            height=height,
        )


@dataclass(frozen=True)
class CameraPose:
    """World-to-camera rigid transform: ``p_cam = rotation @ p_world + translation``."""

    rotation: np.ndarray  # (3, 3), orthonormal, det +1
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        check_rotation(self.rotation)
        if np.asarray(self.translation).shape != (3,):
            raise DataError("translation must be a 3-vector")

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def looking(cls, position, direction, up=(0.0, 0.0, 1.0)) -> "CameraPose":
        """Pose of a camera at ``position`` with forward axis ``direction``."""
        f = np.asarray(direction, dtype=np.float64)
        f = f / np.linalg.norm(f)
        u = np.asarray(up, dtype=np.float64)
        right = np.cross(f, u)
        norm = np.linalg.norm(right)
        if norm < 1e-12:
            raise DataError("view direction parallel to the up axis")
        right /= norm
        down = np.cross(f, right)
        rotation = np.stack([right, down, f])
        translation = -rotation @ np.asarray(position, dtype=np.float64)
        return cls(rotation, translation)

    def camera_center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation


@dataclass(frozen=True)
class OrbitSpec:
    """A stack of 360-degree horizontal orbits around a vertical axis.

    Each orbit is a ``(pitch_radians, camera_offset)`` entry; the camera sits
    at ``center + offset`` and sweeps ``angles_per_orbit`` equally spaced yaw
    angles while looking outward with the given pitch (positive = upward).
    """

    center: np.ndarray
    angles_per_orbit: int = 30
    orbits: tuple = field(
        default_factory=lambda: tuple(
            (math.radians(p), np.zeros(3)) for p in DEFAULT_PITCHES_DEG
        )
    )

    def __post_init__(self):
        if self.angles_per_orbit < 1:
            raise DataError("angles_per_orbit must be at least 1")
        if len(self.orbits) == 0:
            raise DataError("orbit list must be non-empty")

    @property
    def n_views(self) -> int:
        return len(self.orbits) * self.angles_per_orbit


@dataclass(frozen=True)
class ViewFilterConfig:
    """Thresholds for pruning uninformative rendered views."""

    near_depth_threshold: float = 5.0  # meters
    near_fraction_max: float = 0.10
    min_coverage: float = 0.05

    def __post_init__(self):
        if self.near_depth_threshold <= 0:
            raise DataError("near_depth_threshold must be positive")
        for frac in (self.near_fraction_max, self.min_coverage):
            if not 0.0 <= frac <= 1.0:
                raise DataError("filter fractions must lie in [0, 1]")


def plan_orbit_views(spec: OrbitSpec) -> list[CameraPose]:
    """Generate the camera poses of every orbit.

    Within an orbit, yaw angle k covers ``2*pi*k / angles_per_orbit``; orbits
    are emitted in order, yielding ``len(orbits) * angles_per_orbit`` poses.
    """
    center = np.asarray(spec.center, dtype=np.float64)
    poses = []
    for pitch, offset in spec.orbits:
        position = center + np.asarray(offset, dtype=np.float64)
        cos_p, sin_p = math.cos(pitch), math.sin(pitch)
        for k in range(spec.angles_per_orbit):
            yaw = 2.0 * math.pi * k / spec.angles_per_orbit
            direction = (
                math.cos(yaw) * cos_p,
                math.sin(yaw) * cos_p,
                sin_p,
            )
            poses.append(CameraPose.looking(position, direction))
    return poses


def project_points(
    xyz: np.ndarray, pose: CameraPose, intrinsics: CameraIntrinsics
):
    """Project world points through the pinhole model.

    Returns ``(pixels, depths, valid)`` where ``valid`` marks points in
    front of the camera (depth > 0).  Pixels of invalid points are NaN;
    valid pixels may still lie outside the image bounds.
    """
    xyz = np.asarray(xyz, dtype=np.float64)
    cam = xyz @ pose.rotation.T + pose.translation
    depth = cam[:, 2]
    valid = depth > 0.0
    pixels = np.full((len(xyz), 2), np.nan)
    z = np.where(valid, depth, 1.0)
    pixels[:, 0] = np.where(valid, intrinsics.fx * cam[:, 0] / z + intrinsics.cx, np.nan)
    pixels[:, 1] = np.where(valid, intrinsics.fy * cam[:, 1] / z + intrinsics.cy, np.nan)
    return pixels, depth, valid


def project_point(p, pose: CameraPose, intrinsics: CameraIntrinsics):
    """Single-point form of project_points: ``(pixel, depth)`` or None."""
    pixels, depths, valid = project_points(
        np.asarray(p, dtype=np.float64)[None, :], pose, intrinsics
    )
    if not valid[0]:
        return None
    return pixels[0], float(depths[0])


def view_filter_verdict(depth_image: np.ndarray, cfg: ViewFilterConfig):
    """Classify one rendered depth image.

    Returns ``(kept, reason, coverage, near_fraction)``; ``reason`` is None
    for kept views, else "coverage" or "near".  The near fraction counts
    covered pixels closer than the threshold over ALL pixels (the stricter
    reading of the 10%-within-5m rule).
    """
    total = depth_image.size
    covered = np.isfinite(depth_image)
    coverage = covered.sum() / total
    near_fraction = (covered & (depth_image < cfg.near_depth_threshold)).sum() / total
    if coverage < cfg.min_coverage:
        return False, "coverage", coverage, near_fraction
    if near_fraction > cfg.near_fraction_max:
        return False, "near", coverage, near_fraction
    return True, None, coverage, near_fraction


def filter_views(views, cfg: ViewFilterConfig) -> list[int]:
    """Indices of views that survive the coverage and near-depth filters."""
    kept = []
    for i, view in enumerate(views):
        depth = view if isinstance(view, np.ndarray) else view.depth
        ok, _, _, _ = view_filter_verdict(depth, cfg)
        if ok:
            kept.append(i)
    return kept
