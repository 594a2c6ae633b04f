"""Pipeline configuration: a flat, typed ``section.key = value`` format.

The file format is line oriented: blank lines and ``#`` comment lines are
ignored, every other line must read ``section.key = value``.  Keys are
closed-world (unknown ones are errors), values are typed per key, and an
empty value sets an optional key back to "derive the default".  The same
module serializes a fully resolved configuration next to pipeline outputs
so every run is reproducible from its artifacts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .camera import (
    DEFAULT_PITCHES_DEG,
    CameraIntrinsics,
    OrbitSpec,
    ViewFilterConfig,
)
from .errors import ConfigError, DataError
from .fusion import Fallback
from .modalities import DEFAULT_DEPTH_DISCONTINUITY, DEFAULT_JET_RANGE
from .scoring import DEFAULT_SCORER_TIMEOUT
from .splat import (
    DEFAULT_DEPTH_KERNEL_WIDTH,
    DEFAULT_MEANSHIFT_MAX_ITERS,
    DEFAULT_MEANSHIFT_TOL,
    DEFAULT_PROXIMITY_WEIGHT,
    DEFAULT_SIGMA,
    MEMBERSHIP_FLOOR,
    SplatRenderer,
)


@dataclass
class SplatSection:
    sigma: float = DEFAULT_SIGMA
    trunc_radius: float | None = None  # None -> 3 * sigma
    depth_kernel_width: float = DEFAULT_DEPTH_KERNEL_WIDTH
    proximity_weight: float = DEFAULT_PROXIMITY_WEIGHT
    meanshift_tol: float = DEFAULT_MEANSHIFT_TOL
    meanshift_max_iters: int = DEFAULT_MEANSHIFT_MAX_ITERS
    cluster_merge_tol: float | None = None  # None -> 3 * meanshift_tol
    membership_floor: float = MEMBERSHIP_FLOOR


@dataclass
class CameraSection:
    width: int = 512
    height: int = 512
    fx: float | None = None  # None -> width / 2
    fy: float | None = None  # None -> width / 2
    cx: float | None = None  # None -> width / 2
    cy: float | None = None  # None -> height / 2


@dataclass
class ViewsSection:
    angles_per_orbit: int = 30
    pitches_deg: tuple = tuple(DEFAULT_PITCHES_DEG)
    orbit_z_offsets: tuple | None = None  # None -> all zero
    center: tuple | None = None  # None -> cloud bounding-box center


@dataclass
class FilterSection:
    near_depth: float = 5.0
    near_fraction_max: float = 0.10
    min_coverage: float = 0.05


@dataclass
class ModalitiesSection:
    depth_discontinuity: float = DEFAULT_DEPTH_DISCONTINUITY
    jet_min: float = DEFAULT_JET_RANGE[0]
    jet_max: float = DEFAULT_JET_RANGE[1]


@dataclass
class FusionSection:
    weighted: bool = True
    fallback: str = "nearest"  # or "unlabeled"


@dataclass
class ScorerSection:
    kind: str = "baseline"  # or "external"
    command: str = ""
    timeout: float = DEFAULT_SCORER_TIMEOUT


@dataclass
class PipelineConfig:
    splat: SplatSection = field(default_factory=SplatSection)
    camera: CameraSection = field(default_factory=CameraSection)
    views: ViewsSection = field(default_factory=ViewsSection)
    filter: FilterSection = field(default_factory=FilterSection)
    modalities: ModalitiesSection = field(default_factory=ModalitiesSection)
    fusion: FusionSection = field(default_factory=FusionSection)
    scorer: ScorerSection = field(default_factory=ScorerSection)

    # -- derived objects ---------------------------------------------------

    def renderer(self) -> SplatRenderer:
        s = self.splat
        return SplatRenderer(
            sigma=s.sigma,
            trunc_radius=s.trunc_radius,
            depth_kernel_width=s.depth_kernel_width,
            proximity_weight=s.proximity_weight,
            meanshift_tol=s.meanshift_tol,
            meanshift_max_iters=s.meanshift_max_iters,
            cluster_merge_tol=s.cluster_merge_tol,
            membership_floor=s.membership_floor,
        )

    def intrinsics(self) -> CameraIntrinsics:
        c = self.camera
        return CameraIntrinsics(
            fx=c.fx if c.fx is not None else c.width / 2.0,
            fy=c.fy if c.fy is not None else c.width / 2.0,
            cx=c.cx if c.cx is not None else c.width / 2.0,
            cy=c.cy if c.cy is not None else c.height / 2.0,
            width=c.width,
            height=c.height,
        )

    def view_filter(self) -> ViewFilterConfig:
        f = self.filter
        return ViewFilterConfig(
            near_depth_threshold=f.near_depth,
            near_fraction_max=f.near_fraction_max,
            min_coverage=f.min_coverage,
        )

    def orbit_spec(self, default_center) -> OrbitSpec:
        v = self.views
        center = np.asarray(v.center if v.center is not None else default_center, dtype=np.float64)
        offsets = v.orbit_z_offsets
        if offsets is None:
            offsets = (0.0,) * len(v.pitches_deg)
        orbits = tuple(
            (math.radians(pitch), np.array([0.0, 0.0, dz]))
            for pitch, dz in zip(v.pitches_deg, offsets)
        )
        return OrbitSpec(center=center, angles_per_orbit=v.angles_per_orbit, orbits=orbits)

    def fallback(self) -> Fallback:
        return Fallback(self.fusion.fallback)

    def validate(self) -> None:
        if self.fusion.fallback not in ("nearest", "unlabeled"):
            raise ConfigError(
                f"fusion.fallback must be 'nearest' or 'unlabeled', got '{self.fusion.fallback}'"
            )
        if self.scorer.kind not in ("baseline", "external"):
            raise ConfigError(
                f"scorer.kind must be 'baseline' or 'external', got '{self.scorer.kind}'"
            )
        if self.scorer.kind == "external" and not self.scorer.command.strip():
            raise ConfigError("scorer.kind = external requires scorer.command")
        if self.scorer.timeout <= 0:
            raise ConfigError("scorer.timeout must be positive")
        if not self.modalities.jet_max > self.modalities.jet_min:
            raise ConfigError("modalities.jet_max must exceed modalities.jet_min")
        v = self.views
        if len(v.pitches_deg) == 0:
            raise ConfigError("views.pitches_deg must name at least one orbit")
        if v.orbit_z_offsets is not None and len(v.orbit_z_offsets) != len(v.pitches_deg):
            raise ConfigError("views.orbit_z_offsets must match views.pitches_deg in length")
        if v.center is not None and len(v.center) != 3:
            raise ConfigError("views.center must be three numbers")
        # parameter sanity that has a cheap object form is checked by
        # building the objects once
        try:
            self.intrinsics()
            self.view_filter()
            self.renderer()._resolved()
        except DataError as exc:
            raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------


def _cast_float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(s)
    return v


def _cast_int(s: str) -> int:
    return int(s)


def _cast_bool(s: str) -> bool:
    low = s.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    raise ValueError(s)


def _cast_floats(s: str) -> tuple:
    parts = [p.strip() for p in s.split(",")]
    if any(not p for p in parts):
        raise ValueError(s)
    return tuple(_cast_float(p) for p in parts)


def _fmt_float(v: float) -> str:
    return repr(float(v))


def _fmt_int(v: int) -> str:
    return str(int(v))


def _fmt_bool(v: bool) -> str:
    return "true" if v else "false"


def _fmt_floats(v: tuple) -> str:
    return ", ".join(repr(float(x)) for x in v)


def _fmt_str(v: str) -> str:
    return v


_TYPES = {
    "float": (_cast_float, _fmt_float),
    "int": (_cast_int, _fmt_int),
    "bool": (_cast_bool, _fmt_bool),
    "floats": (_cast_floats, _fmt_floats),
    "str": (str, _fmt_str),
}

# key -> (type name, nullable)
_SCHEMA = {
    "splat.sigma": ("float", False),
    "splat.trunc_radius": ("float", True),
    "splat.depth_kernel_width": ("float", False),
    "splat.proximity_weight": ("float", False),
    "splat.meanshift_tol": ("float", False),
    "splat.meanshift_max_iters": ("int", False),
    "splat.cluster_merge_tol": ("float", True),
    "splat.membership_floor": ("float", False),
    "camera.width": ("int", False),
    "camera.height": ("int", False),
    "camera.fx": ("float", True),
    "camera.fy": ("float", True),
    "camera.cx": ("float", True),
    "camera.cy": ("float", True),
    "views.angles_per_orbit": ("int", False),
    "views.pitches_deg": ("floats", False),
    "views.orbit_z_offsets": ("floats", True),
    "views.center": ("floats", True),
    "filter.near_depth": ("float", False),
    "filter.near_fraction_max": ("float", False),
    "filter.min_coverage": ("float", False),
    "modalities.depth_discontinuity": ("float", False),
    "modalities.jet_min": ("float", False),
    "modalities.jet_max": ("float", False),
    "fusion.weighted": ("bool", False),
    "fusion.fallback": ("str", False),
    "scorer.kind": ("str", False),
    "scorer.command": ("str", False),
    "scorer.timeout": ("float", False),
}


def parse_config(text: str) -> PipelineConfig:
    """Parse configuration text over the defaults; validates the result."""
    cfg = PipelineConfig()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        seen.add(key)
        type_name, nullable = _SCHEMA[key]
        if value == "":
            # empty resets nullable keys; for strings it is just ""
            if nullable:
                parsed = None
            elif type_name == "str":
                parsed = ""
            else:
                raise ConfigError(f"line {lineno}: '{key}' requires a value")
        else:
            cast = _TYPES[type_name][0]
            try:
                parsed = cast(value)
            except ValueError:
                raise ConfigError(
                    f"line {lineno}: '{value}' is not a valid {type_name} for '{key}'"
                ) from None
        section, _, attr = key.partition(".")
        setattr(getattr(cfg, section), attr, parsed)
    cfg.validate()
    return cfg


def format_config(cfg: PipelineConfig) -> str:
    """Serialize every key, including ones still at their defaults."""
    lines = []
    last_section = None
    for key, (type_name, _) in _SCHEMA.items():
        section, _, attr = key.partition(".")
        if section != last_section:
            if last_section is not None:
                lines.append("")
            last_section = section
        value = getattr(getattr(cfg, section), attr)
        text = "" if value is None else _TYPES[type_name][1](value)
        lines.append(f"{key} = {text}".rstrip())
    return "\n".join(lines) + "\n"


def read_config_file(path) -> PipelineConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def write_config_file(cfg: PipelineConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_config(cfg))
