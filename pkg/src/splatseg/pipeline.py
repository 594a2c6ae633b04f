"""End-to-end segmentation pipeline over a directory of artifacts.

The pipeline runs in four stages that communicate only through files, so
each stage can be re-run or swapped out independently:

render  points (+labels) -> per-view depth/memberships/modality images,
        a view manifest, and the resolved configuration;
score   modality images -> one score map per kept view;
fuse    score maps x memberships -> per-point labels;
eval    predictions x ground truth -> metrics report.

``ProjectiveSegmenter`` offers the same computation as an in-memory
estimator: fit() renders a labeled cloud and trains the baseline scorer,
predict() renders, scores and fuses an unlabeled cloud.  Because scorers
consume the quantized 8-bit images exactly as stored in the PNGs, the
in-memory and on-disk paths produce identical predictions.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .camera import CameraIntrinsics, CameraPose, plan_orbit_views, view_filter_verdict
from .cloud import PointCloud, bounding_box, write_predictions_file
from .config import PipelineConfig, write_config_file
from .errors import DataError
from .formats import (
    encode_normals_u8,
    quantize_u8,
    read_image_png,
    read_memberships,
    read_score_map,
    write_depth,
    write_image_png,
    write_memberships,
    write_score_map,
)
from .fusion import (
    ConfusionMatrix,
    PointScores,
    assign_labels,
    fuse_views,
    metrics_report,
)
from .modalities import depth_to_jet, normals_from_depth
from .scoring import (
    ExternalScorer,
    NearestCentroidScorer,
    collect_training_pixels,
    stack_features,
)
from .splat import RenderedView, SplatRenderer

MANIFEST_NAME = "manifest.json"
RESOLVED_CONFIG_NAME = "config.resolved.txt"
VIEWS_DIR = "views"
SCORES_DIR = "scores"
PREDICTIONS_NAME = "predictions.txt"
METRICS_NAME = "metrics.txt"


def _scene_center(cloud: PointCloud) -> np.ndarray:
    """Bounding-box center; an empty cloud orbits the origin (every view
    comes out uncovered and gets discarded, which is the useful outcome)."""
    if len(cloud) == 0:
        return np.zeros(3)
    lo, hi = bounding_box(cloud)
    return (lo + hi) / 2.0


@dataclass
class ViewRecord:
    """One planned view in the manifest; artifacts exist only when kept."""

    index: int
    name: str
    kept: bool
    reason: str | None
    coverage: float
    near_fraction: float
    rotation: list
    translation: list

    def pose(self) -> CameraPose:
        return CameraPose(np.array(self.rotation), np.array(self.translation))


def view_dir(out_dir, record_name: str) -> Path:
    return Path(out_dir) / VIEWS_DIR / record_name


def score_path(out_dir, record_name: str) -> Path:
    return Path(out_dir) / SCORES_DIR / f"{record_name}.spsc"


def write_manifest(out_dir, intrinsics: CameraIntrinsics, n_points: int, records) -> None:
    payload = {
        "intrinsics": {
            "fx": intrinsics.fx,
            "fy": intrinsics.fy,
            "cx": intrinsics.cx,
            "cy": intrinsics.cy,
            "width": intrinsics.width,
            "height": intrinsics.height,
        },
        "n_points": n_points,
        "views": [asdict(r) for r in records],
    }
    with open(Path(out_dir) / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def read_manifest(out_dir):
    """Returns (intrinsics, n_points, [ViewRecord])."""
    path = Path(out_dir) / MANIFEST_NAME
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"no manifest at {path}; run the render stage first") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt manifest {path}: {exc}") from exc
    intr = CameraIntrinsics(**payload["intrinsics"])
    records = [ViewRecord(**row) for row in payload["views"]]
    return intr, int(payload["n_points"]), records


def render_stage(
    cloud: PointCloud,
    out_dir,
    cfg: PipelineConfig,
    max_views: int | None = None,
) -> list[ViewRecord]:
    """Render all planned views, filter them, and write kept artifacts."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / VIEWS_DIR).mkdir(exist_ok=True)
    write_config_file(cfg, out_dir / RESOLVED_CONFIG_NAME)

    poses = plan_orbit_views(cfg.orbit_spec(default_center=_scene_center(cloud)))
    if max_views is not None:
        if max_views < 1:
            raise DataError("view cap must be at least 1")
        poses = poses[:max_views]

    renderer = cfg.renderer()
    intrinsics = cfg.intrinsics()
    filter_cfg = cfg.view_filter()
    with_labels = cloud.labels is not None
    records = []
    for i, pose in enumerate(poses):
        view = renderer.render(cloud, pose, intrinsics, with_labels=with_labels)
        kept, reason, coverage, near_fraction = view_filter_verdict(view.depth, filter_cfg)
        name = f"view_{i:04d}"
        records.append(
            ViewRecord(
                index=i,
                name=name,
                kept=kept,
                reason=reason,
                coverage=float(coverage),
                near_fraction=float(near_fraction),
                rotation=pose.rotation.tolist(),
                translation=pose.translation.tolist(),
            )
        )
        if kept:
            _write_view_artifacts(view_dir(out_dir, name), view, cfg)
    write_manifest(out_dir, intrinsics, len(cloud), records)
    return records


def _write_view_artifacts(vdir: Path, view: RenderedView, cfg: PipelineConfig) -> None:
    vdir.mkdir(parents=True, exist_ok=True)
    write_depth(vdir / "depth.spdz", view.depth)
    write_memberships(
        vdir / "memberships.spix",
        view.mem_pixel_ptr,
        view.mem_point_index,
        view.mem_weight,
        view.height,
        view.width,
    )
    write_image_png(vdir / "rgb.png", quantize_u8(view.rgb))
    m = cfg.modalities
    write_image_png(vdir / "jet.png", depth_to_jet(view.depth, m.jet_min, m.jet_max))
    normals = normals_from_depth(view.depth, view.intrinsics, m.depth_discontinuity)
    write_image_png(vdir / "normal.png", encode_normals_u8(normals))
    if view.label_image is not None:
        write_image_png(vdir / "labels.png", view.label_image)


def _kept(records) -> list[ViewRecord]:
    return [r for r in records if r.kept]


def score_stage(out_dir, cfg: PipelineConfig, scorer_kind: str | None = None) -> int:
    """Score every kept view; returns the number of score maps written."""
    out_dir = Path(out_dir)
    _, _, records = read_manifest(out_dir)
    kept = _kept(records)
    (out_dir / SCORES_DIR).mkdir(exist_ok=True)
    kind = scorer_kind if scorer_kind is not None else cfg.scorer.kind

    if kind == "external":
        if not cfg.scorer.command.strip():
            raise DataError("external scorer selected but scorer.command is empty")
        scorer = ExternalScorer(cfg.scorer.command, cfg.scorer.timeout)
        for rec in kept:
            vdir = view_dir(out_dir, rec.name)
            rgb = read_image_png(vdir / "rgb.png")
            scorer.score_view(
                vdir / "rgb.png",
                vdir / "jet.png",
                vdir / "normal.png",
                score_path(out_dir, rec.name),
                expected_hw=rgb.shape[:2],
            )
        return len(kept)

    features = []
    channels = []
    per_view_feats = {}
    for rec in kept:
        vdir = view_dir(out_dir, rec.name)
        feats = stack_features(
            read_image_png(vdir / "rgb.png"),
            read_image_png(vdir / "jet.png"),
            read_image_png(vdir / "normal.png"),
        )
        per_view_feats[rec.name] = feats
        labels_png = vdir / "labels.png"
        if not labels_png.exists():
            raise DataError(
                f"{labels_png} is missing; the baseline scorer trains on label "
                "images, so render with a labels file"
            )
        X, y = collect_training_pixels(feats, read_image_png(labels_png))
        features.append(X)
        channels.append(y)
    if not kept:
        return 0
    scorer = NearestCentroidScorer().fit(
        np.concatenate(features), np.concatenate(channels)
    )
    for rec in kept:
        feats = per_view_feats[rec.name]
        h, w = feats.shape[:2]
        scores = scorer.score(feats.reshape(-1, feats.shape[2])).reshape(h, w, -1)
        write_score_map(score_path(out_dir, rec.name), scores.astype(np.float32))
    return len(kept)


def fuse_stage(cloud: PointCloud, out_dir, cfg: PipelineConfig) -> np.ndarray:
    """Fuse all score maps back onto the points; returns labels (N,)."""
    out_dir = Path(out_dir)
    _, n_points, records = read_manifest(out_dir)
    if n_points != len(cloud):
        raise DataError(
            f"manifest was rendered from {n_points} points but the cloud has {len(cloud)}"
        )
    pairs = []
    for rec in _kept(records):
        spath = score_path(out_dir, rec.name)
        if not spath.exists():
            raise DataError(f"no score map for {rec.name}; run the score stage first")
        ptr, idx, wgt, h, w = read_memberships(view_dir(out_dir, rec.name) / "memberships.spix")
        scores = read_score_map(spath)
        if scores.shape[:2] != (h, w):
            raise DataError(f"{spath} disagrees with memberships on image size")
        pairs.append(((ptr, idx, wgt), scores))
    acc = fuse_views(n_points, pairs, weighted=cfg.fusion.weighted)
    labels = assign_labels(acc, cloud.xyz, fallback=cfg.fallback())
    write_predictions_file(out_dir / PREDICTIONS_NAME, labels)
    return labels


def eval_stage(gt_labels: np.ndarray, pred_labels: np.ndarray):
    """Returns (confusion matrix, report text)."""
    if len(gt_labels) != len(pred_labels):
        raise DataError(
            f"{len(gt_labels)} ground-truth labels vs {len(pred_labels)} predictions"
        )
    cm = ConfusionMatrix()
    cm.update(gt_labels, pred_labels)
    return cm, metrics_report(cm)


def run_pipeline(
    cloud: PointCloud,
    out_dir,
    cfg: PipelineConfig,
    max_views: int | None = None,
    scorer_kind: str | None = None,
) -> np.ndarray:
    """Render, score and fuse in one call; evaluates when labels exist."""
    out_dir = Path(out_dir)
    render_stage(cloud, out_dir, cfg, max_views=max_views)
    score_stage(out_dir, cfg, scorer_kind=scorer_kind)
    labels = fuse_stage(cloud, out_dir, cfg)
    if cloud.labels is not None:
        _, report = eval_stage(cloud.labels, labels)
        with open(out_dir / METRICS_NAME, "w", encoding="utf-8") as fh:
            fh.write(report)
    return labels


class ProjectiveSegmenter(BaseEstimator):
    """Point cloud semantic segmentation through rendered views.

    fit() renders the labeled training cloud and fits the nearest-centroid
    scorer on its pixels; predict() renders the query cloud, scores every
    kept view, and fuses the scores back onto the points.  ``transform``
    exposes the fused per-point class scores (N, 8) before the argmax.

    Parameters
    ----------
    config : PipelineConfig or None
        Full pipeline configuration; None means all defaults.
    max_views : int or None
        Cap on planned views (useful to bound runtime).
    """

    def __init__(self, config: PipelineConfig | None = None, max_views: int | None = None):
        self.config = config
        self.max_views = max_views

    def _cfg(self) -> PipelineConfig:
        return self.config if self.config is not None else PipelineConfig()

    def _render_kept(self, cloud: PointCloud, with_labels: bool):
        cfg = self._cfg()
        poses = plan_orbit_views(cfg.orbit_spec(default_center=_scene_center(cloud)))
        if self.max_views is not None:
            poses = poses[: self.max_views]
        renderer: SplatRenderer = cfg.renderer()
        intrinsics = cfg.intrinsics()
        filter_cfg = cfg.view_filter()
        views = []
        for pose in poses:
            view = renderer.render(cloud, pose, intrinsics, with_labels=with_labels)
            ok, _, _, _ = view_filter_verdict(view.depth, filter_cfg)
            if ok:
                views.append(view)
        return views

    def _view_features(self, view: RenderedView) -> np.ndarray:
        m = self._cfg().modalities
        normals = normals_from_depth(view.depth, view.intrinsics, m.depth_discontinuity)
        return stack_features(
            quantize_u8(view.rgb),
            depth_to_jet(view.depth, m.jet_min, m.jet_max),
            encode_normals_u8(normals),
        )

    def fit(self, cloud: PointCloud, labels=None):
        if labels is not None:
            cloud = cloud.with_labels(np.asarray(labels))
        if cloud.labels is None:
            raise DataError("fitting requires a labeled cloud")
        views = self._render_kept(cloud, with_labels=True)
        if not views:
            raise DataError("every planned view was filtered out; nothing to train on")
        xs, ys = [], []
        for view in views:
            X, y = collect_training_pixels(self._view_features(view), view.label_image)
            xs.append(X)
            ys.append(y)
        self.scorer_ = NearestCentroidScorer().fit(np.concatenate(xs), np.concatenate(ys))
        return self

    def transform(self, cloud: PointCloud) -> PointScores:
        if not hasattr(self, "scorer_"):
            raise DataError("segmenter is not fitted")
        cfg = self._cfg()
        views = self._render_kept(cloud, with_labels=False)
        pairs = []
        for view in views:
            feats = self._view_features(view)
            h, w = feats.shape[:2]
            scores = (
                self.scorer_.score(feats.reshape(-1, feats.shape[2]))
                .reshape(h, w, -1)
                .astype(np.float32)
            )
            pairs.append(
                ((view.mem_pixel_ptr, view.mem_point_index, view.mem_weight), scores)
            )
        return fuse_views(len(cloud), pairs, weighted=cfg.fusion.weighted)

    def predict(self, cloud: PointCloud) -> np.ndarray:
        acc = self.transform(cloud)
        return assign_labels(acc, cloud.xyz, fallback=self._cfg().fallback())

    def fit_predict(self, cloud: PointCloud, labels=None) -> np.ndarray:
        return self.fit(cloud, labels).predict(cloud)
