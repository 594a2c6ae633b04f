"""Multi-view score fusion and segmentation metrics.

Per-view score maps are mapped back onto the 3D points through the
membership tables produced at render time: every membership (pixel,
point, weight) adds ``weight * score[pixel, class]`` to the point's
accumulator for the eight object classes.  The background channel
describes empty image regions, not any point, so it never accumulates.
Points seen by no view fall back either to the label of the nearest
scored point or to unlabeled.

Evaluation follows the usual semantic segmentation protocol: a confusion
matrix over ground-truth-labeled points, per-class intersection over
union, and overall accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree

from .cloud import CLASS_NAMES, N_CLASSES, PointCloud
from .errors import DataError
from .formats import N_SCORE_CHANNELS


class Fallback(Enum):
    """Label source for points never covered by any kept view."""

    NEAREST = "nearest"
    UNLABELED = "unlabeled"


@dataclass
class PointScores:
    """Per-point class score accumulator across views.

    ``scores`` holds summed membership-weighted scores for object classes
    1..8 (column c is class c+1); ``view_hits`` counts memberships, so a
    point is "covered" when it contributed to at least one scored pixel.
    """

    scores: np.ndarray  # (N, 8) float64
    view_hits: np.ndarray  # (N,) int64

    @classmethod
    def zeros(cls, n_points: int) -> "PointScores":
        return cls(
            np.zeros((n_points, N_CLASSES)), np.zeros(n_points, dtype=np.int64)
        )

    @property
    def covered(self) -> np.ndarray:
        return self.view_hits > 0


def accumulate_view(
    acc: PointScores,
    mem_pixel_ptr: np.ndarray,
    mem_point_index: np.ndarray,
    mem_weight: np.ndarray,
    score_map: np.ndarray,
    weighted: bool = True,
) -> None:
    """Fold one view's score map into the point accumulator.

    ``weighted`` scales each pixel score by the membership weight; the
    uniform variant counts every membership equally.  Accumulation uses
    bincount per class, so results do not depend on membership order.
    """
    if score_map.ndim != 3 or score_map.shape[2] != N_SCORE_CHANNELS:
        raise DataError(f"score map must be (H, W, {N_SCORE_CHANNELS})")
    h, w = score_map.shape[:2]
    if mem_pixel_ptr.shape[0] != h * w + 1:
        raise DataError("membership table and score map disagree on image size")
    if mem_point_index.size == 0:
        return
    if mem_point_index.max() >= acc.scores.shape[0]:
        raise DataError("membership point index out of range")
    n_points = acc.scores.shape[0]
    pix = np.repeat(np.arange(h * w), np.diff(mem_pixel_ptr))
    weights = mem_weight.astype(np.float64) if weighted else 1.0
    flat = score_map.reshape(h * w, N_SCORE_CHANNELS).astype(np.float64)
    for c in range(N_CLASSES):
        acc.scores[:, c] += np.bincount(
            mem_point_index, weights=weights * flat[pix, c], minlength=n_points
        )
    acc.view_hits += np.bincount(mem_point_index, minlength=n_points)


def fuse_views(n_points: int, views, weighted: bool = True) -> PointScores:
    """Accumulate (memberships, score_map) pairs in the given order."""
    acc = PointScores.zeros(n_points)
    for (ptr, idx, wgt), scores in views:
        accumulate_view(acc, ptr, idx, wgt, scores, weighted=weighted)
    return acc


def assign_labels(
    acc: PointScores,
    xyz: np.ndarray | None = None,
    fallback: Fallback = Fallback.NEAREST,
) -> np.ndarray:
    """Pick each point's class as the argmax of its fused scores.

    Ties break toward the smaller class id.  Uncovered points copy the
    label of the nearest covered point (needs ``xyz``) or stay unlabeled.
    """
    covered = acc.covered
    labels = np.zeros(acc.scores.shape[0], dtype=np.int64)
    labels[covered] = np.argmax(acc.scores[covered], axis=1) + 1
    missing = ~covered
    if not missing.any():
        return labels
    if fallback is Fallback.UNLABELED:
        return labels
    if xyz is None:
        raise DataError("nearest fallback needs point coordinates")
    if not covered.any():
        raise DataError("no point was covered by any view; cannot infer labels")
    tree = cKDTree(xyz[covered])
    _, nearest = tree.query(xyz[missing], k=1)
    labels[missing] = labels[covered][nearest]
    return labels


def segment_cloud(
    cloud: PointCloud, views, weighted: bool = True, fallback: Fallback = Fallback.NEAREST
) -> np.ndarray:
    """Fuse per-view scores over a cloud and return per-point labels."""
    acc = fuse_views(len(cloud), views, weighted=weighted)
    return assign_labels(acc, cloud.xyz, fallback=fallback)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


@dataclass
class ConfusionMatrix:
    """Confusion counts over ground-truth-labeled points.

    ``matrix[i, j]`` counts points of class i+1 predicted as j+1;
    ``unpredicted[i]`` counts class i+1 points left unlabeled by the
    fallback.  Points without ground truth never enter the matrix.
    """

    matrix: np.ndarray = field(
        default_factory=lambda: np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    )
    unpredicted: np.ndarray = field(
        default_factory=lambda: np.zeros(N_CLASSES, dtype=np.int64)
    )

    def update(self, gt: np.ndarray, pred: np.ndarray) -> None:
        gt = np.asarray(gt)
        pred = np.asarray(pred)
        if gt.shape != pred.shape:
            raise DataError("ground truth and predictions must have equal length")
        if ((gt < 0) | (gt > N_CLASSES)).any():
            raise DataError("ground-truth labels must lie in 0..8")
        if ((pred < 0) | (pred > N_CLASSES)).any():
            raise DataError("predicted labels must lie in 0..8")
        keep = gt >= 1
        g = gt[keep] - 1
        p = pred[keep]
        scored = p >= 1
        self.matrix += np.bincount(
            g[scored] * N_CLASSES + (p[scored] - 1), minlength=N_CLASSES * N_CLASSES
        ).reshape(N_CLASSES, N_CLASSES)
        self.unpredicted += np.bincount(g[~scored], minlength=N_CLASSES)

    @property
    def total(self) -> int:
        return int(self.matrix.sum() + self.unpredicted.sum())

    def class_present(self) -> np.ndarray:
        """A class counts as present when it occurs in ground truth or in
        a prediction of a ground-truth-labeled point."""
        gt_rows = self.matrix.sum(axis=1) + self.unpredicted
        pred_cols = self.matrix.sum(axis=0)
        return (gt_rows > 0) | (pred_cols > 0)

    def iou_per_class(self) -> np.ndarray:
        """IoU per class; NaN for classes absent from both axes.
        Unpredicted points enlarge their class union without ever
        intersecting, exactly like a wrong prediction would."""
        inter = np.diag(self.matrix).astype(np.float64)
        union = (
            self.matrix.sum(axis=1)
            + self.unpredicted
            + self.matrix.sum(axis=0)
            - np.diag(self.matrix)
        ).astype(np.float64)
        out = np.full(N_CLASSES, np.nan)
        present = self.class_present()
        out[present] = inter[present] / union[present]
        return out

    def mean_iou(self) -> float:
        iou = self.iou_per_class()
        present = ~np.isnan(iou)
        if not present.any():
            return float("nan")
        return float(iou[present].mean())

    def overall_accuracy(self) -> float:
        if self.total == 0:
            raise DataError("no ground-truth-labeled points to evaluate")
        return float(np.trace(self.matrix) / self.total)


def evaluate_labels(gt: np.ndarray, pred: np.ndarray) -> ConfusionMatrix:
    cm = ConfusionMatrix()
    cm.update(gt, pred)
    return cm


def _key_name(class_id: int) -> str:
    return CLASS_NAMES[class_id].replace(" ", "_").replace("-", "_")


def metrics_report(cm: ConfusionMatrix) -> str:
    """Flat key-value text report: per-class IoU, mean IoU, accuracy."""
    lines = [
        f"evaluated_points = {cm.total}",
        f"overall_accuracy = {cm.overall_accuracy():.6f}",
        f"mean_iou = {cm.mean_iou():.6f}",
    ]
    iou = cm.iou_per_class()
    for c in range(N_CLASSES):
        value = "absent" if np.isnan(iou[c]) else f"{iou[c]:.6f}"
        lines.append(f"iou.{_key_name(c + 1)} = {value}")
    return "\n".join(lines) + "\n"
