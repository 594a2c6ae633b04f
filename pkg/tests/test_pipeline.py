import numpy as np
import pytest
from sklearn.base import clone

from splatseg import (
    CameraIntrinsics,
    DataError,
    ProjectiveSegmenter,
    eval_stage,
    fuse_stage,
    parse_config,
    render_stage,
    run_pipeline,
    score_stage,
)
from splatseg.config import format_config
from splatseg.pipeline import (
    MANIFEST_NAME,
    METRICS_NAME,
    PREDICTIONS_NAME,
    RESOLVED_CONFIG_NAME,
    ViewRecord,
    read_manifest,
    write_manifest,
)

from conftest import make_cloud
from oracles import cylinder_band_scene

SMALL_CFG = (
    "camera.width = 64\n"
    "camera.height = 64\n"
    "views.angles_per_orbit = 6\n"
    "views.pitches_deg = 0\n"
)


@pytest.fixture(scope="module")
def scene():
    xyz, rgb, labels = cylinder_band_scene(radius=10.0, height=4.0, spacing=0.25)
    return make_cloud(xyz, rgb=rgb, labels=labels)


def small_config():
    return parse_config(SMALL_CFG)


class TestManifest:
    def test_round_trip(self, tmp_path):
        k = CameraIntrinsics(10.0, 11.0, 5.0, 6.0, 20, 21)
        records = [
            ViewRecord(
                index=0,
                name="view_0000",
                kept=True,
                reason=None,
                coverage=0.5,
                near_fraction=0.0,
                rotation=np.eye(3).tolist(),
                translation=[0.0, 1.0, 2.0],
            ),
            ViewRecord(
                index=1,
                name="view_0001",
                kept=False,
                reason="coverage",
                coverage=0.01,
                near_fraction=0.0,
                rotation=np.eye(3).tolist(),
                translation=[3.0, 4.0, 5.0],
            ),
        ]
        write_manifest(tmp_path, k, 42, records)
        intr, n, back = read_manifest(tmp_path)
        assert intr == k
        assert n == 42
        assert back == records
        pose = back[0].pose()
        assert np.array_equal(pose.translation, [0.0, 1.0, 2.0])

    def test_missing_manifest_names_render_stage(self, tmp_path):
        with pytest.raises(DataError, match="run the render stage"):
            read_manifest(tmp_path)

    def test_corrupt_manifest(self, tmp_path):
        (tmp_path / MANIFEST_NAME).write_text("{oops")
        with pytest.raises(DataError, match="corrupt manifest"):
            read_manifest(tmp_path)


class TestRenderStage:
    def test_artifacts_for_kept_views(self, tmp_path, scene):
        records = render_stage(scene, tmp_path, small_config())
        assert len(records) == 6
        assert (tmp_path / RESOLVED_CONFIG_NAME).exists()
        kept = [r for r in records if r.kept]
        assert kept
        for rec in kept:
            vdir = tmp_path / "views" / rec.name
            for fname in (
                "depth.spdz",
                "memberships.spix",
                "rgb.png",
                "jet.png",
                "normal.png",
                "labels.png",
            ):
                assert (vdir / fname).exists(), fname
        for rec in records:
            if not rec.kept:
                assert not (tmp_path / "views" / rec.name).exists()

    def test_resolved_config_reparses_identically(self, tmp_path, scene):
        cfg = small_config()
        render_stage(scene, tmp_path, cfg, max_views=1)
        text = (tmp_path / RESOLVED_CONFIG_NAME).read_text()
        assert parse_config(text) == cfg
        assert format_config(parse_config(text)) == text

    def test_no_labels_no_label_image(self, tmp_path, scene):
        bare = make_cloud(scene.xyz, rgb=scene.rgb)
        records = render_stage(bare, tmp_path, small_config(), max_views=2)
        rec = next(r for r in records if r.kept)
        assert not (tmp_path / "views" / rec.name / "labels.png").exists()

    def test_empty_cloud_discards_everything(self, tmp_path):
        records = render_stage(make_cloud(np.zeros((0, 3))), tmp_path, small_config())
        assert all(not r.kept for r in records)
        assert all(r.reason == "coverage" for r in records)

    def test_view_cap(self, tmp_path, scene):
        records = render_stage(scene, tmp_path, small_config(), max_views=3)
        assert len(records) == 3
        with pytest.raises(DataError, match="view cap"):
            render_stage(scene, tmp_path, small_config(), max_views=0)


class TestScoreFuseStages:
    def test_score_before_render_fails(self, tmp_path):
        with pytest.raises(DataError, match="render stage"):
            score_stage(tmp_path, small_config())

    def test_fuse_before_score_fails(self, tmp_path, scene):
        render_stage(scene, tmp_path, small_config(), max_views=2)
        with pytest.raises(DataError, match="score stage"):
            fuse_stage(scene, tmp_path, small_config())

    def test_baseline_needs_label_images(self, tmp_path, scene):
        bare = make_cloud(scene.xyz, rgb=scene.rgb)
        render_stage(bare, tmp_path, small_config(), max_views=2)
        with pytest.raises(DataError, match="labels"):
            score_stage(tmp_path, small_config())

    def test_score_writes_one_map_per_kept_view(self, tmp_path, scene):
        records = render_stage(scene, tmp_path, small_config())
        n = score_stage(tmp_path, small_config())
        kept = [r for r in records if r.kept]
        assert n == len(kept)
        for rec in kept:
            assert (tmp_path / "scores" / f"{rec.name}.spsc").exists()

    def test_fuse_checks_point_count(self, tmp_path, scene):
        render_stage(scene, tmp_path, small_config(), max_views=2)
        score_stage(tmp_path, small_config())
        shrunk = make_cloud(scene.xyz[:10], rgb=scene.rgb[:10])
        with pytest.raises(DataError, match="points"):
            fuse_stage(shrunk, tmp_path, small_config())

    def test_full_run_writes_predictions_and_metrics(self, tmp_path, scene):
        labels = run_pipeline(scene, tmp_path, small_config())
        assert len(labels) == len(scene)
        assert (tmp_path / PREDICTIONS_NAME).exists()
        assert (tmp_path / METRICS_NAME).exists()
        cm, report = eval_stage(scene.labels, labels)
        assert cm.overall_accuracy() > 0.9
        assert "overall_accuracy" in report

    def test_staged_equals_composed(self, tmp_path, scene):
        cfg = small_config()
        composed = tmp_path / "a"
        staged = tmp_path / "b"
        run_pipeline(scene, composed, cfg)
        render_stage(scene, staged, cfg)
        score_stage(staged, cfg)
        fuse_stage(scene, staged, cfg)
        assert (
            (composed / PREDICTIONS_NAME).read_bytes()
            == (staged / PREDICTIONS_NAME).read_bytes()
        )

    def test_eval_stage_length_mismatch(self):
        with pytest.raises(DataError):
            eval_stage(np.array([1, 2]), np.array([1]))


class TestEstimator:
    def test_sklearn_params_contract(self):
        seg = ProjectiveSegmenter(max_views=5)
        params = seg.get_params()
        assert params["max_views"] == 5
        assert params["config"] is None
        cloned = clone(seg)
        assert cloned.get_params() == params

    def test_fit_predict_accuracy(self, scene):
        seg = ProjectiveSegmenter(config=small_config())
        pred = seg.fit_predict(scene)
        accuracy = (pred == scene.labels).mean()
        assert accuracy > 0.9

    def test_matches_file_pipeline(self, tmp_path, scene):
        cfg = small_config()
        file_labels = run_pipeline(scene, tmp_path, cfg)
        seg = ProjectiveSegmenter(config=cfg)
        memory_labels = seg.fit_predict(scene)
        assert np.array_equal(file_labels, memory_labels)

    def test_transform_exposes_scores(self, scene):
        seg = ProjectiveSegmenter(config=small_config(), max_views=3)
        seg.fit(scene)
        acc = seg.transform(scene)
        assert acc.scores.shape == (len(scene), 8)
        assert np.isfinite(acc.scores).all()
        assert acc.covered.any()

    def test_fit_needs_labels(self, scene):
        bare = make_cloud(scene.xyz, rgb=scene.rgb)
        with pytest.raises(DataError, match="label"):
            ProjectiveSegmenter(config=small_config()).fit(bare)

    def test_fit_with_separate_labels(self, scene):
        bare = make_cloud(scene.xyz, rgb=scene.rgb)
        seg = ProjectiveSegmenter(config=small_config(), max_views=3)
        seg.fit(bare, labels=scene.labels)
        assert hasattr(seg, "scorer_")

    def test_unfitted_predict_rejected(self, scene):
        with pytest.raises(DataError, match="not fitted"):
            ProjectiveSegmenter(config=small_config()).predict(scene)

    def test_fit_on_empty_cloud_rejected(self):
        empty = make_cloud(np.zeros((0, 3)), labels=np.zeros(0, dtype=np.int64))
        with pytest.raises(DataError, match="filtered out"):
            ProjectiveSegmenter(config=small_config()).fit(empty)
