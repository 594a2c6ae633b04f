import math

import numpy as np
import pytest

from splatseg import ConfigError, PipelineConfig, parse_config, read_config_file
from splatseg.config import format_config, write_config_file
from splatseg.fusion import Fallback


class TestDefaults:
    def test_fresh_config_is_valid(self):
        cfg = PipelineConfig()
        cfg.validate()
        assert cfg.splat.sigma == 1.0
        assert cfg.splat.depth_kernel_width == 0.2
        assert cfg.splat.proximity_weight == 0.5
        assert cfg.camera.width == 512
        assert cfg.views.angles_per_orbit == 30
        assert cfg.filter.min_coverage == 0.05
        assert cfg.fusion.weighted is True
        assert cfg.scorer.kind == "baseline"

    def test_empty_text_gives_defaults(self):
        assert parse_config("") == PipelineConfig()

    def test_derived_intrinsics_follow_size(self):
        cfg = parse_config("camera.width = 100\ncamera.height = 80\n")
        k = cfg.intrinsics()
        assert (k.fx, k.fy, k.cx, k.cy) == (50.0, 50.0, 50.0, 40.0)
        assert (k.width, k.height) == (100, 80)

    def test_explicit_intrinsics_win(self):
        cfg = parse_config("camera.fx = 300.0\ncamera.cy = 10.0\n")
        k = cfg.intrinsics()
        assert k.fx == 300.0
        assert k.cy == 10.0
        assert k.fy == 256.0

    def test_default_orbit_spec(self):
        spec = PipelineConfig().orbit_spec(np.array([1.0, 2.0, 3.0]))
        assert spec.angles_per_orbit == 30
        assert len(spec.orbits) == 4
        assert np.array_equal(spec.center, [1.0, 2.0, 3.0])

    def test_explicit_center_overrides(self):
        cfg = parse_config("views.center = 5, 6, 7\n")
        spec = cfg.orbit_spec(np.zeros(3))
        assert np.array_equal(spec.center, [5.0, 6.0, 7.0])

    def test_z_offsets_map_to_orbits(self):
        cfg = parse_config(
            "views.pitches_deg = 0, 30\nviews.orbit_z_offsets = 0, 2.5\n"
        )
        spec = cfg.orbit_spec(np.zeros(3))
        assert len(spec.orbits) == 2
        pitch, offset = spec.orbits[1]
        assert abs(pitch - math.radians(30.0)) < 1e-12
        assert np.array_equal(offset, [0.0, 0.0, 2.5])

    def test_fallback_enum(self):
        assert PipelineConfig().fallback() is Fallback.NEAREST
        cfg = parse_config("fusion.fallback = unlabeled\n")
        assert cfg.fallback() is Fallback.UNLABELED


class TestParsing:
    def test_types_enforced(self):
        cfg = parse_config(
            "splat.sigma = 2.5\n"
            "views.angles_per_orbit = 8\n"
            "fusion.weighted = false\n"
            "views.pitches_deg = -15, 0, 15\n"
            "scorer.command = run {rgb} {out}\n"
        )
        assert cfg.splat.sigma == 2.5
        assert cfg.views.angles_per_orbit == 8
        assert cfg.fusion.weighted is False
        assert cfg.views.pitches_deg == (-15.0, 0.0, 15.0)
        assert cfg.scorer.command == "run {rgb} {out}"

    def test_comments_and_blanks_skipped(self):
        cfg = parse_config("# a comment\n\nsplat.sigma = 1.5\n\n# tail\n")
        assert cfg.splat.sigma == 1.5

    def test_unknown_key_names_line(self):
        with pytest.raises(ConfigError, match="line 2.*unknown key 'splat.sgima'"):
            parse_config("splat.sigma = 1.0\nsplat.sgima = 2.0\n")

    def test_duplicate_key_names_line(self):
        with pytest.raises(ConfigError, match="line 3.*duplicate"):
            parse_config("splat.sigma = 1.0\n# x\nsplat.sigma = 2.0\n")

    def test_bad_value_names_line_and_type(self):
        with pytest.raises(ConfigError, match="line 1.*not a valid float"):
            parse_config("splat.sigma = wide\n")
        with pytest.raises(ConfigError, match="not a valid int"):
            parse_config("camera.width = 12.5\n")
        with pytest.raises(ConfigError, match="not a valid bool"):
            parse_config("fusion.weighted = yes\n")
        with pytest.raises(ConfigError, match="not a valid floats"):
            parse_config("views.pitches_deg = 1,,2\n")

    def test_non_finite_float_rejected(self):
        with pytest.raises(ConfigError, match="not a valid float"):
            parse_config("splat.sigma = inf\n")

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("splat.sigma 1.0\n")

    def test_empty_value_resets_nullable(self):
        cfg = parse_config("splat.trunc_radius =\n")
        assert cfg.splat.trunc_radius is None

    def test_empty_value_on_required_key(self):
        with pytest.raises(ConfigError, match="requires a value"):
            parse_config("splat.sigma =\n")


class TestValidation:
    def test_bad_fallback(self):
        with pytest.raises(ConfigError, match="fusion.fallback"):
            parse_config("fusion.fallback = guess\n")

    def test_bad_scorer_kind(self):
        with pytest.raises(ConfigError, match="scorer.kind"):
            parse_config("scorer.kind = neural\n")

    def test_external_needs_command(self):
        with pytest.raises(ConfigError, match="scorer.command"):
            parse_config("scorer.kind = external\n")

    def test_jet_range_ordering(self):
        with pytest.raises(ConfigError, match="jet_max"):
            parse_config("modalities.jet_min = 10\nmodalities.jet_max = 10\n")

    def test_offsets_length_must_match(self):
        with pytest.raises(ConfigError, match="orbit_z_offsets"):
            parse_config("views.orbit_z_offsets = 1, 2\n")

    def test_center_needs_three(self):
        with pytest.raises(ConfigError, match="views.center"):
            parse_config("views.center = 1, 2\n")

    def test_splat_params_validated(self):
        with pytest.raises(ConfigError):
            parse_config("splat.sigma = -1.0\n")

    def test_camera_params_validated(self):
        with pytest.raises(ConfigError):
            parse_config("camera.width = 0\n")


class TestRoundTrip:
    def test_format_covers_every_key(self):
        text = format_config(PipelineConfig())
        keys = {
            line.split("=")[0].strip()
            for line in text.splitlines()
            if line.strip()
        }
        assert len(keys) == 29

    def test_parse_format_fixed_point(self):
        cfg = parse_config(
            "splat.sigma = 1.25\n"
            "camera.width = 128\n"
            "camera.height = 128\n"
            "views.pitches_deg = 0, 20\n"
            "views.orbit_z_offsets = 0, 1\n"
            "fusion.weighted = false\n"
            "scorer.timeout = 10.0\n"
        )
        text = format_config(cfg)
        assert parse_config(text) == cfg
        assert format_config(parse_config(text)) == text

    def test_file_round_trip(self, tmp_path):
        cfg = parse_config("splat.sigma = 0.75\nviews.center = 1, 2, 3\n")
        path = tmp_path / "run.cfg"
        write_config_file(cfg, path)
        assert read_config_file(path) == cfg

    def test_missing_file_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read config"):
            read_config_file(tmp_path / "nope.cfg")

    def test_floats_round_trip_exactly(self):
        cfg = PipelineConfig()
        cfg.splat.sigma = 0.1 + 0.2  # not representable prettily
        back = parse_config(format_config(cfg))
        assert back.splat.sigma == cfg.splat.sigma
