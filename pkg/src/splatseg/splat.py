"""Visibility-aware Gaussian point splatting.

Each 3D point is projected into the image and spread over nearby pixels by
an isotropic Gaussian point spread function ``w = exp(-||p - y||^2 / (2 sigma^2))``
truncated at radius ``trunc_radius``.  Because spread functions from
different surfaces overlap in image space, per-pixel visibility is resolved
by mean-shift clustering of the contributor depths:

1. every contributor depth ``z_i`` seeds a fixed-point iteration
   ``d <- sum_i w_i G(d - z_i) z_i / sum_i w_i G(d - z_i)`` with the
   unnormalized Gaussian ``G(x) = exp(-x^2 / (2 s^2))``;
2. converged iterates closer than ``cluster_merge_tol`` merge into cluster
   centers ``d_k``;
3. each cluster is ranked by ``v_k + D / d_k`` where ``v_k`` is its kernel
   density and the near-camera bonus ``D`` suppresses occluded surfaces
   while rejecting sparse foreground noise;
4. the pixel takes the winning center's depth, and features are composited
   with weights ``w_i G(d_chosen - z_i)``.

Those composite weights are retained per pixel as "memberships" so that
per-pixel scores can later be mapped back onto the contributing points.

All kernels are compiled with numba; pixels are independent, so the
clustering pass parallelizes over pixels and rendering never mutates the
cloud.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange
from sklearn.base import BaseEstimator

from .camera import CameraIntrinsics, CameraPose, project_points
from .cloud import PointCloud
from .errors import DataError
from .formats import BACKGROUND_LABEL
from .validation import check_positive, check_non_negative

DEFAULT_SIGMA = 1.0
DEFAULT_DEPTH_KERNEL_WIDTH = 0.2  # meters
DEFAULT_PROXIMITY_WEIGHT = 0.5  # meters; +0.1 rank bonus for a cluster at 5 m
DEFAULT_MEANSHIFT_TOL = 1e-4  # meters
DEFAULT_MEANSHIFT_MAX_ITERS = 500
MEMBERSHIP_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _splat_count(px, py, valid, height, width, radius):
    """Count contributors per pixel (pass 1 of the CSR build)."""
    counts = np.zeros(height * width, dtype=np.int64)
    r2 = radius * radius
    for i in range(px.shape[0]):
        if not valid[i]:
            continue
        u = px[i]
        v = py[i]
        c0 = int(np.floor(u - radius - 0.5)) + 1
        c1 = int(np.ceil(u + radius - 0.5)) - 1
        r0 = int(np.floor(v - radius - 0.5)) + 1
        r1 = int(np.ceil(v + radius - 0.5)) - 1
        if c0 < 0:
            c0 = 0
        if r0 < 0:
            r0 = 0
        if c1 > width - 1:
            c1 = width - 1
        if r1 > height - 1:
            r1 = height - 1
        for rr in range(r0, r1 + 1):
            dy = rr + 0.5 - v
            for cc in range(c0, c1 + 1):
                dx = cc + 0.5 - u
                if dx * dx + dy * dy < r2:
                    counts[rr * width + cc] += 1
    return counts


@njit(cache=True)
def _splat_fill(px, py, z, valid, height, width, radius, sigma, ptr, idx, wgt, dep):
    """Fill CSR slots in point order (pass 2); keeps per-pixel entries
    sorted by point index, which makes accumulation order deterministic."""
    fill = ptr[:-1].copy()
    inv = 1.0 / (2.0 * sigma * sigma)
    r2 = radius * radius
    for i in range(px.shape[0]):
        if not valid[i]:
            continue
        u = px[i]
        v = py[i]
        c0 = int(np.floor(u - radius - 0.5)) + 1
        c1 = int(np.ceil(u + radius - 0.5)) - 1
        r0 = int(np.floor(v - radius - 0.5)) + 1
        r1 = int(np.ceil(v + radius - 0.5)) - 1
        if c0 < 0:
            c0 = 0
        if r0 < 0:
            r0 = 0
        if c1 > width - 1:
            c1 = width - 1
        if r1 > height - 1:
            r1 = height - 1
        for rr in range(r0, r1 + 1):
            dy = rr + 0.5 - v
            for cc in range(c0, c1 + 1):
                dx = cc + 0.5 - u
                d2 = dx * dx + dy * dy
                if d2 < r2:
                    pix = rr * width + cc
                    slot = fill[pix]
                    fill[pix] = slot + 1
                    idx[slot] = i
                    wgt[slot] = np.exp(-d2 * inv)
                    dep[slot] = z[i]


@njit(cache=True)
def _pixel_clusters(w, z, s, tol, max_iters, merge_tol):
    """Mean-shift the contributor depths of one pixel into cluster centers.

    Every contributor seeds the iteration at its own depth.  Identical
    starting depths share a single trajectory (bit-identical outcome, so
    only a speedup); their multiplicity still weights the merge step.
    Returns (ascending centers clipped to [min z, max z], #non-converged
    trajectories).
    """
    n = w.shape[0]
    inv = 1.0 / (2.0 * s * s)
    # stop well below tol: near a slowly contracting mode the remaining
    # distance can exceed the last step severalfold, and iterates of the
    # same mode stopping on opposite sides must still fall inside the
    # merge window
    stop = tol * 0.01
    order = np.argsort(z)
    uval = np.empty(n)
    ucnt = np.empty(n, dtype=np.int64)
    m = 0
    for k in range(n):
        v = z[order[k]]
        if m > 0 and v == uval[m - 1]:
            ucnt[m - 1] += 1
        else:
            uval[m] = v
            ucnt[m] = 1
            m += 1

    conv = np.empty(m)
    failed = 0
    for k in range(m):
        d = uval[k]
        converged = False
        for _ in range(max_iters):
            num = 0.0
            den = 0.0
            for j in range(n):
                diff = d - z[j]
                g = w[j] * np.exp(-diff * diff * inv)
                num += g * z[j]
                den += g
            d_new = num / den
            moved = abs(d_new - d)
            d = d_new
            if moved < stop:
                converged = True
                break
        if not converged:
            failed += 1
        conv[k] = d

    # merge converged iterates closer than merge_tol (single linkage over
    # the sorted values); center = multiplicity-weighted mean of the group
    order2 = np.argsort(conv)
    centers = np.empty(m)
    n_centers = 0
    acc = 0.0
    cnt = 0
    prev = 0.0
    for k in range(m):
        v = conv[order2[k]]
        c = ucnt[order2[k]]
        if cnt > 0 and v - prev >= merge_tol:
            centers[n_centers] = acc / cnt
            n_centers += 1
            acc = 0.0
            cnt = 0
        acc += v * c
        cnt += c
        prev = v
    if cnt > 0:
        centers[n_centers] = acc / cnt
        n_centers += 1

    zmin = z[0]
    zmax = z[0]
    for j in range(1, n):
        if z[j] < zmin:
            zmin = z[j]
        elif z[j] > zmax:
            zmax = z[j]
    out = centers[:n_centers].copy()
    for k in range(n_centers):
        if out[k] < zmin:
            out[k] = zmin
        elif out[k] > zmax:
            out[k] = zmax
    return out, failed


@njit(cache=True)
def _kernel_density(w, z, centers, s):
    """v_k = sum_i w_i G(d_k - z_i) / sum_i w_i for each center."""
    inv = 1.0 / (2.0 * s * s)
    wsum = 0.0
    for j in range(w.shape[0]):
        wsum += w[j]
    v = np.empty(centers.shape[0])
    for k in range(centers.shape[0]):
        acc = 0.0
        for j in range(w.shape[0]):
            diff = centers[k] - z[j]
            acc += w[j] * np.exp(-diff * diff * inv)
        v[k] = acc / wsum
    return v


@njit(cache=True)
def _choose_cluster(centers, v, proximity_weight):
    """argmax of v_k + D/d_k; ties stay with the nearer (first) center."""
    best = 0
    best_s = v[0] + proximity_weight / centers[0]
    for k in range(1, centers.shape[0]):
        sk = v[k] + proximity_weight / centers[k]
        if sk > best_s:
            best_s = sk
            best = k
    return best


@njit(parallel=True, cache=True)
def _cluster_image(ptr, w, z, s, proximity_weight, tol, max_iters, merge_tol, floor):
    """Resolve visibility at every pixel; pixels are independent.

    Returns the chosen depth per pixel (NaN where uncovered), membership
    weights aligned with the contribution CSR slots (0 = dropped by the
    floor), cluster counts and non-converged trajectory counts.
    """
    n_px = ptr.shape[0] - 1
    depth = np.full(n_px, np.nan)
    mem = np.zeros(w.shape[0])
    n_clusters = np.zeros(n_px, dtype=np.int32)
    n_failed = np.zeros(n_px, dtype=np.int32)
    inv = 1.0 / (2.0 * s * s)
    for p in prange(n_px):
        a = ptr[p]
        b = ptr[p + 1]
        if b == a:
            continue
        centers, failed = _pixel_clusters(w[a:b], z[a:b], s, tol, max_iters, merge_tol)
        v = _kernel_density(w[a:b], z[a:b], centers, s)
        k = _choose_cluster(centers, v, proximity_weight)
        d_chosen = centers[k]
        depth[p] = d_chosen
        n_clusters[p] = centers.shape[0]
        n_failed[p] = failed
        kept = 0
        best = a
        best_m = -1.0
        for j in range(a, b):
            diff = d_chosen - z[j]
            mj = w[j] * np.exp(-diff * diff * inv)
            if mj > best_m:
                best_m = mj
                best = j
            if mj > floor:
                mem[j] = mj
                kept += 1
        if kept == 0:
            # covered pixels must keep at least one membership
            mem[best] = best_m
    return depth, mem, n_clusters, n_failed


# ---------------------------------------------------------------------------
# public surface
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PixelContributors:
    """CSR table of the points splatting into each pixel.

    ``pixel_ptr`` has H*W+1 entries; pixel (row, col) owns the slice
    ``[pixel_ptr[row*W + col], pixel_ptr[row*W + col + 1])`` of the
    parallel (point_index, weight, depth) arrays, in point-index order.
    """

    pixel_ptr: np.ndarray
    point_index: np.ndarray
    weight: np.ndarray
    depth: np.ndarray
    height: int
    width: int

    def at(self, row: int, col: int):
        a, b = self.pixel_ptr[row * self.width + col], self.pixel_ptr[row * self.width + col + 1]
        return self.point_index[a:b], self.weight[a:b], self.depth[a:b]

    @property
    def total(self) -> int:
        return len(self.point_index)


@dataclass(frozen=True)
class ClusterResult:
    """Depth clusters of one pixel: centers, kernel densities, chosen index."""

    centers: np.ndarray
    densities: np.ndarray
    chosen: int


@dataclass
class RenderedView:
    """One rendered view: rasters plus the point<->pixel membership table.

    ``depth`` uses NaN for empty pixels; ``label_image`` uses
    ``BACKGROUND_LABEL`` (255) for them.  Membership weights are the
    composite weights ``w_ij * G(d_chosen - z_i)`` stored in the same CSR
    layout as PixelContributors.
    """

    depth: np.ndarray  # (H, W) float32, NaN = empty
    rgb: np.ndarray | None  # (H, W, 3) float32, zeros where empty
    mem_pixel_ptr: np.ndarray  # (H*W + 1,) int64
    mem_point_index: np.ndarray  # (M,) int64
    mem_weight: np.ndarray  # (M,) float32
    pose: CameraPose
    intrinsics: CameraIntrinsics
    label_image: np.ndarray | None = None  # (H, W) uint8
    meanshift_max_iter_hits: int = 0
    cluster_counts: np.ndarray | None = field(default=None, repr=False)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def covered(self) -> np.ndarray:
        return np.isfinite(self.depth)

    def memberships_at(self, row: int, col: int):
        a = self.mem_pixel_ptr[row * self.width + col]
        b = self.mem_pixel_ptr[row * self.width + col + 1]
        return self.mem_point_index[a:b], self.mem_weight[a:b]


def gather_contributions(
    cloud: PointCloud,
    pose: CameraPose,
    intrinsics: CameraIntrinsics,
    sigma: float = DEFAULT_SIGMA,
    trunc_radius: float | None = None,
) -> PixelContributors:
    """Splat every point into the pixels within ``trunc_radius`` of its
    projection; weights follow the truncated Gaussian spread function."""
    check_positive("sigma", sigma)
    if trunc_radius is None:
        trunc_radius = 3.0 * sigma
    check_positive("trunc_radius", trunc_radius)
    pixels, depths, valid = project_points(cloud.xyz, pose, intrinsics)
    px = np.ascontiguousarray(np.where(valid, pixels[:, 0], 0.0))
    py = np.ascontiguousarray(np.where(valid, pixels[:, 1], 0.0))
    z = np.ascontiguousarray(depths)
    h, w = intrinsics.height, intrinsics.width
    counts = _splat_count(px, py, valid, h, w, float(trunc_radius))
    ptr = np.zeros(h * w + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    total = int(ptr[-1])
    idx = np.empty(total, dtype=np.int64)
    wgt = np.empty(total, dtype=np.float64)
    dep = np.empty(total, dtype=np.float64)
    _splat_fill(px, py, z, valid, h, w, float(trunc_radius), float(sigma), ptr, idx, wgt, dep)
    return PixelContributors(ptr, idx, wgt, dep, h, w)


def meanshift_depths(
    weights,
    depths,
    depth_kernel_width: float = DEFAULT_DEPTH_KERNEL_WIDTH,
    tol: float = DEFAULT_MEANSHIFT_TOL,
    max_iters: int = DEFAULT_MEANSHIFT_MAX_ITERS,
    merge_tol: float | None = None,
):
    """Cluster one pixel's contributor depths; returns ascending centers.

    ``tol`` is the accuracy target for the reported centers; the fixed-point
    iteration runs until its step drops two orders of magnitude below it (or
    ``max_iters``), so centers of well-separated modes are good to ``tol``
    regardless of how slowly the iteration contracts.
    """
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    depths = np.ascontiguousarray(depths, dtype=np.float64)
    if len(weights) == 0:
        raise DataError("meanshift_depths requires a non-empty contributor list")
    if len(weights) != len(depths):
        raise DataError("weights and depths must have equal length")
    check_positive("depth_kernel_width", depth_kernel_width)
    check_positive("tol", tol)
    if max_iters < 1:
        raise DataError("max_iters must be at least 1")
    if merge_tol is None:
        merge_tol = 3.0 * tol
    check_positive("merge_tol", merge_tol)
    centers, _ = _pixel_clusters(
        weights, depths, float(depth_kernel_width), float(tol), int(max_iters), float(merge_tol)
    )
    return centers


def cluster_scores(
    centers,
    weights,
    depths,
    depth_kernel_width: float = DEFAULT_DEPTH_KERNEL_WIDTH,
    proximity_weight: float = DEFAULT_PROXIMITY_WEIGHT,
) -> ClusterResult:
    """Rank clusters by density plus the near-camera bonus D/d."""
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    depths = np.ascontiguousarray(depths, dtype=np.float64)
    if len(centers) == 0:
        raise DataError("no cluster centers")
    if (centers <= 0).any():
        raise DataError("non-positive cluster center; upstream projection bug")
    check_non_negative("proximity_weight", proximity_weight)
    densities = _kernel_density(weights, depths, centers, float(depth_kernel_width))
    chosen = int(_choose_cluster(centers, densities, float(proximity_weight)))
    return ClusterResult(centers, densities, chosen)


def composite_pixel(
    weights,
    depths,
    chosen_center: float,
    features=None,
    depth_kernel_width: float = DEFAULT_DEPTH_KERNEL_WIDTH,
):
    """Composite one pixel against the chosen cluster.

    Returns ``(depth, feature_vector, membership_weights)``; the feature
    vector is None when no features are given.  Membership weights cover
    every contributor (far-cluster points simply receive negligible
    weight).
    """
    weights = np.asarray(weights, dtype=np.float64)
    depths = np.asarray(depths, dtype=np.float64)
    memberships = weights * np.exp(
        -((chosen_center - depths) ** 2) / (2.0 * depth_kernel_width**2)
    )
    feature = None
    if features is not None:
        features = np.asarray(features, dtype=np.float64)
        feature = memberships @ features / memberships.sum()
    return float(chosen_center), feature, memberships


class SplatRenderer(BaseEstimator):
    """Renders point clouds into depth/color/label images with per-pixel
    visibility resolved by mean-shift depth clustering.

    Parameters
    ----------
    sigma : float
        Point spread function standard deviation, pixels.
    trunc_radius : float or None
        Spread truncation radius in pixels; None means ``3 * sigma``.
    depth_kernel_width : float
        Gaussian kernel width ``s`` of the depth density estimator, meters.
    proximity_weight : float
        Near-camera bonus ``D``; a cluster at depth d gains ``D / d`` rank.
    meanshift_tol : float
        Accuracy target for cluster centers, meters; iteration steps are
        driven two orders of magnitude below it before stopping.
    meanshift_max_iters : int
        Iteration cap per trajectory; hitting it counts into diagnostics.
    cluster_merge_tol : float or None
        Converged iterates closer than this are one cluster; None means
        ``3 * meanshift_tol``.
    membership_floor : float
        Memberships below this weight are dropped to bound memory.
    """

    def __init__(
        self,
        sigma=DEFAULT_SIGMA,
        trunc_radius=None,
        depth_kernel_width=DEFAULT_DEPTH_KERNEL_WIDTH,
        proximity_weight=DEFAULT_PROXIMITY_WEIGHT,
        meanshift_tol=DEFAULT_MEANSHIFT_TOL,
        meanshift_max_iters=DEFAULT_MEANSHIFT_MAX_ITERS,
        cluster_merge_tol=None,
        membership_floor=MEMBERSHIP_FLOOR,
    ):
        self.sigma = sigma
        self.trunc_radius = trunc_radius
        self.depth_kernel_width = depth_kernel_width
        self.proximity_weight = proximity_weight
        self.meanshift_tol = meanshift_tol
        self.meanshift_max_iters = meanshift_max_iters
        self.cluster_merge_tol = cluster_merge_tol
        self.membership_floor = membership_floor

    def _resolved(self):
        check_positive("sigma", self.sigma)
        check_positive("depth_kernel_width", self.depth_kernel_width)
        check_non_negative("proximity_weight", self.proximity_weight)
        check_positive("meanshift_tol", self.meanshift_tol)
        if self.meanshift_max_iters < 1:
            raise DataError("meanshift_max_iters must be at least 1")
        radius = self.trunc_radius if self.trunc_radius is not None else 3.0 * self.sigma
        check_positive("trunc_radius", radius)
        merge = (
            self.cluster_merge_tol
            if self.cluster_merge_tol is not None
            else 3.0 * self.meanshift_tol
        )
        check_positive("cluster_merge_tol", merge)
        return float(radius), float(merge)

    def render(
        self,
        cloud: PointCloud,
        pose: CameraPose,
        intrinsics: CameraIntrinsics,
        with_rgb: bool = True,
        with_labels: bool | None = None,
    ) -> RenderedView:
        """Render one view; pure with respect to all inputs."""
        radius, merge_tol = self._resolved()
        if with_labels is None:
            with_labels = cloud.labels is not None
        if with_labels and cloud.labels is None:
            raise DataError("label image requested but the cloud has no labels")

        contribs = gather_contributions(cloud, pose, intrinsics, self.sigma, radius)
        depth_flat, mem_all, n_clusters, n_failed = _cluster_image(
            contribs.pixel_ptr,
            contribs.weight,
            contribs.depth,
            float(self.depth_kernel_width),
            float(self.proximity_weight),
            float(self.meanshift_tol),
            int(self.meanshift_max_iters),
            merge_tol,
            float(self.membership_floor),
        )
        h, w = contribs.height, contribs.width
        n_px = h * w

        keep = mem_all > 0.0
        counts = np.diff(contribs.pixel_ptr)
        pix_of_slot = np.repeat(np.arange(n_px), counts)
        kept_pix = pix_of_slot[keep]
        mem_counts = np.bincount(kept_pix, minlength=n_px)
        mem_ptr = np.zeros(n_px + 1, dtype=np.int64)
        np.cumsum(mem_counts, out=mem_ptr[1:])
        mem_point = contribs.point_index[keep]
        mem_w64 = mem_all[keep]

        rgb = None
        if with_rgb:
            den = np.bincount(kept_pix, weights=mem_w64, minlength=n_px)
            rgb_flat = np.zeros((n_px, 3))
            safe = den > 0
            for c in range(3):
                num = np.bincount(
                    kept_pix, weights=mem_w64 * cloud.rgb[mem_point, c], minlength=n_px
                )
                rgb_flat[safe, c] = num[safe] / den[safe]
            rgb = rgb_flat.reshape(h, w, 3).astype(np.float32)

        label_image = None
        if with_labels:
            votes = np.zeros((9, n_px))
            point_labels = cloud.labels[mem_point]
            for lab in range(9):
                mask = point_labels == lab
                if mask.any():
                    votes[lab] = np.bincount(
                        kept_pix[mask], weights=mem_w64[mask], minlength=n_px
                    )
            label_flat = np.argmax(votes, axis=0).astype(np.uint8)
            label_flat[mem_counts == 0] = BACKGROUND_LABEL
            label_image = label_flat.reshape(h, w)

        return RenderedView(
            depth=depth_flat.reshape(h, w).astype(np.float32),
            rgb=rgb,
            mem_pixel_ptr=mem_ptr,
            mem_point_index=mem_point,
            mem_weight=mem_w64.astype(np.float32),
            pose=pose,
            intrinsics=intrinsics,
            label_image=label_image,
            meanshift_max_iter_hits=int(n_failed.sum()),
            cluster_counts=n_clusters.reshape(h, w),
        )


def warmup_kernels() -> None:
    """Trigger JIT compilation of all kernels on a tiny scene."""
    cloud = PointCloud(
        np.array([[0.0, 0.0, 2.0], [0.1, 0.0, 2.0]]),
        np.zeros(2),
        np.full((2, 3), 128.0),
        np.array([1, 2]),
    )
    intr = CameraIntrinsics(fx=4.0, fy=4.0, cx=4.0, cy=4.0, width=8, height=8)
    SplatRenderer().render(cloud, CameraPose.identity(), intr)
