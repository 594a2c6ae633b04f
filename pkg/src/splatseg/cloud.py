"""Point cloud container and ASCII I/O.

Clouds are stored columnar (separate coordinate / attribute arrays) so that
the per-view projection pass streams through contiguous memory.  The on-disk
conventions are plain ASCII: point files hold ``x y z intensity r g b`` per
line, label and prediction files hold one integer in [0, 8] per line.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParseError

#: Semantic class names; index 0 is the "unlabeled" marker used by ground truth.
CLASS_NAMES = (
    "unlabeled",
    "man-made terrain",
    "natural terrain",
    "high vegetation",
    "low vegetation",
    "buildings",
    "hard scape",
    "scanning artifacts",
    "cars",
)

N_CLASSES = 8  # object classes 1..8; 0 is reserved for "unlabeled"


@dataclass(frozen=True)
class PointCloud:
    """Columnar point cloud: coordinates, attributes and optional labels.

    All arrays are parallel; ``labels`` is None when no ground truth is
    attached.  Instances are immutable and safe to share across threads.
    """

    xyz: np.ndarray  # (N, 3) float64, finite
    intensity: np.ndarray  # (N,) float64
    rgb: np.ndarray  # (N, 3) float64 in [0, 255]
    labels: np.ndarray | None = field(default=None)  # (N,) int64 in [0, 8]

    def __post_init__(self):
        n = len(self.xyz)
        if len(self.intensity) != n or len(self.rgb) != n:
            raise DataError("parallel attribute arrays must match point count")
        if self.labels is not None and len(self.labels) != n:
            raise DataError(
                f"label count {len(self.labels)} does not match point count {n}"
            )

    def __len__(self):
        return len(self.xyz)

    def with_labels(self, labels: np.ndarray) -> "PointCloud":
        return PointCloud(self.xyz, self.intensity, self.rgb, labels)


def _as_text(reader) -> str:
    if isinstance(reader, (str, bytes)):
        data = reader
    else:
        data = reader.read()
    if isinstance(data, bytes):
        data = data.decode("ascii")
    return data


def _split_lines(text: str) -> list[str]:
    lines = text.split("\n")
    # a single trailing newline is tolerated
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def parse_points(reader) -> PointCloud:
    """Parse an ASCII point stream of ``x y z intensity r g b`` lines.

    Interior empty lines are errors (skipping them silently would
    desynchronize the points/labels pairing).  Raises ParseError with the
    1-based line number on any malformed content.
    """
    lines = _split_lines(_as_text(reader))
    tokens: list[str] = []
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts:
            raise ParseError("empty line in points file", line=lineno)
        if len(parts) != 7:
            raise ParseError(
                f"expected 7 fields (x y z intensity r g b), got {len(parts)}",
                line=lineno,
            )
        tokens.extend(parts)

    n = len(lines)
    if n == 0:
        return PointCloud(
            np.empty((0, 3)), np.empty(0), np.empty((0, 3))
        )

    try:
        values = np.array(tokens, dtype=np.float64).reshape(n, 7)
    except ValueError:
        # locate the offending token; each line contributed exactly 7
        for k, tok in enumerate(tokens):
            try:
                float(tok)
            except ValueError:
                raise ParseError(
                    f"not a number: {tok!r}", line=k // 7 + 1
                ) from None
        raise

    xyz = values[:, 0:3]
    bad = ~np.isfinite(xyz).all(axis=1)
    if bad.any():
        raise ParseError(
            "non-finite coordinate", line=int(np.flatnonzero(bad)[0]) + 1
        )
    rgb = values[:, 4:7]
    out_of_range = (rgb < 0.0) | (rgb > 255.0)
    if out_of_range.any():
        lineno = int(np.flatnonzero(out_of_range.any(axis=1))[0]) + 1
        raise ParseError("rgb channel outside [0, 255]", line=lineno)
    return PointCloud(xyz, values[:, 3], rgb)


def parse_label_column(reader) -> np.ndarray:
    """Parse one integer label per line; values must be integers in
    [0, 8] (no float tokens)."""
    lines = _split_lines(_as_text(reader))
    stripped = []
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if len(parts) != 1:
            raise ParseError(
                f"expected a single integer, got {line!r}", line=lineno
            )
        stripped.append(parts[0])
    try:
        labels = np.array(stripped, dtype=np.int64)
    except (ValueError, OverflowError):
        for k, tok in enumerate(stripped):
            try:
                int(tok)
            except ValueError:
                raise ParseError(f"not an integer: {tok!r}", line=k + 1) from None
        raise
    bad = (labels < 0) | (labels > 8)
    if bad.any():
        lineno = int(np.flatnonzero(bad)[0]) + 1
        raise ParseError(
            f"label {labels[lineno - 1]} outside [0, 8]", line=lineno
        )
    return labels


def parse_labels(reader, cloud: PointCloud) -> PointCloud:
    """Parse one integer label per line and attach to ``cloud``.

    The line count must equal the point count.
    """
    labels = parse_label_column(reader)
    if len(labels) != len(cloud):
        raise ParseError(
            f"label count {len(labels)} does not match point count {len(cloud)}"
        )
    return cloud.with_labels(labels)


def write_predictions(labels, writer) -> None:
    """Write one decimal label per line; round-trips through parse_labels."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        payload = b""
    else:
        payload = ("\n".join(str(int(v)) for v in labels) + "\n").encode("ascii")
    if isinstance(writer, io.TextIOBase):
        writer.write(payload.decode("ascii"))
    else:
        writer.write(payload)


def read_points_file(path) -> PointCloud:
    with open(path, "rb") as fh:
        try:
            return parse_points(fh)
        except ParseError as exc:
            raise ParseError(f"{path}: {exc}") from exc


def read_labels_file(path, cloud: PointCloud) -> PointCloud:
    with open(path, "rb") as fh:
        try:
            return parse_labels(fh, cloud)
        except ParseError as exc:
            raise ParseError(f"{path}: {exc}") from exc


def read_label_column_file(path) -> np.ndarray:
    with open(path, "rb") as fh:
        try:
            return parse_label_column(fh)
        except ParseError as exc:
            raise ParseError(f"{path}: {exc}") from exc


def write_predictions_file(path, labels) -> None:
    with open(path, "wb") as fh:
        write_predictions(labels, fh)


def bounding_box(cloud: PointCloud) -> tuple[np.ndarray, np.ndarray]:
    """Component-wise (min, max) corners over all points."""
    if len(cloud) == 0:
        raise DataError("bounding_box of an empty cloud")
    return cloud.xyz.min(axis=0), cloud.xyz.max(axis=0)
