"""Per-pixel class scoring of rendered views.

A scorer turns the three image modalities (color, depth colorization,
encoded normals) into a per-pixel score map with nine channels: channels
0..7 score the eight object classes 1..8 and channel 8 scores background.
Scores are unbounded reals where higher means more likely; they are never
normalized, so downstream fusion sums them across views as-is.

Two scorers are provided: a nearest-centroid baseline fit on labeled
rendered views, and a bridge that shells out to an external command which
reads the modality images and writes a score map file.
"""

from __future__ import annotations

import shlex
import subprocess

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator

from .errors import (
    ConfigError,
    DataError,
    DimensionMismatchError,
    ScoreMapFormatError,
    ScorerExitError,
    ScorerTimeoutError,
)
from .formats import BACKGROUND_LABEL, N_SCORE_CHANNELS, read_score_map

ABSENT_SCORE = -1e30
BACKGROUND_CHANNEL = N_SCORE_CHANNELS - 1
N_FEATURES = 9
DEFAULT_SCORER_TIMEOUT = 300.0  # seconds


def stack_features(rgb_u8: np.ndarray, jet_u8: np.ndarray, normals_u8: np.ndarray) -> np.ndarray:
    """Concatenate the three (H, W, 3) uint8 modalities into (H, W, 9)
    float features.  Empty pixels are all-zero in every modality, so the
    zero vector doubles as the background appearance."""
    parts = (rgb_u8, jet_u8, normals_u8)
    shapes = {p.shape for p in parts}
    if len(shapes) != 1 or parts[0].ndim != 3 or parts[0].shape[2] != 3:
        raise DataError("modalities must share one (H, W, 3) shape")
    return np.concatenate([p.astype(np.float64) for p in parts], axis=2)


def label_to_channel(labels: np.ndarray) -> np.ndarray:
    """Map image labels to score channels: class c in 1..8 -> c-1,
    background (255) -> 8.  Unlabeled (0) has no channel."""
    labels = np.asarray(labels)
    out = np.full(labels.shape, -1, dtype=np.int64)
    obj = (labels >= 1) & (labels <= BACKGROUND_CHANNEL)
    out[obj] = labels[obj] - 1
    out[labels == BACKGROUND_LABEL] = BACKGROUND_CHANNEL
    return out


def collect_training_pixels(features: np.ndarray, label_image: np.ndarray):
    """Pick (X, y) training pairs from one labeled view.

    Pixels labeled 1..8 train their class; background pixels (255, i.e.
    empty) train the background channel; unlabeled covered pixels (0) are
    skipped.  y holds score channels 0..8.
    """
    if features.shape[:2] != label_image.shape:
        raise DataError("features and label image disagree on (H, W)")
    chan = label_to_channel(label_image)
    keep = chan >= 0
    return features[keep].reshape(-1, N_FEATURES), chan[keep].ravel()


class NearestCentroidScorer(BaseEstimator):
    """Scores pixels by negated distance to per-class feature centroids.

    The centroid of each score channel is the mean feature vector of its
    training pixels; ``score`` returns ``-||x - centroid_c||`` per channel
    and a large negative constant for channels never seen in training.
    """

    def __init__(self, absent_score: float = ABSENT_SCORE):
        self.absent_score = absent_score

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if X.ndim != 2 or X.shape[1] != N_FEATURES:
            raise DataError(f"X must be (n, {N_FEATURES})")
        if X.shape[0] != y.shape[0]:
            raise DataError("X and y must have equal length")
        if X.shape[0] == 0:
            raise DataError("cannot fit on zero training pixels")
        if ((y < 0) | (y >= N_SCORE_CHANNELS)).any():
            raise DataError("y must hold score channels 0..8")
        centroids = np.full((N_SCORE_CHANNELS, N_FEATURES), np.nan)
        present = np.zeros(N_SCORE_CHANNELS, dtype=bool)
        for c in range(N_SCORE_CHANNELS):
            mask = y == c
            if mask.any():
                centroids[c] = X[mask].mean(axis=0)
                present[c] = True
        self.centroids_ = centroids
        self.present_ = present
        return self

    def score(self, X) -> np.ndarray:
        """Per-channel scores for feature rows; (n, 9) float64."""
        if not hasattr(self, "centroids_"):
            raise DataError("scorer is not fitted")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != N_FEATURES:
            raise DataError(f"X must be (n, {N_FEATURES})")
        out = np.full((X.shape[0], N_SCORE_CHANNELS), self.absent_score)
        if self.present_.any():
            out[:, self.present_] = -cdist(X, self.centroids_[self.present_])
        return out

    def score_image(self, rgb_u8, jet_u8, normals_u8) -> np.ndarray:
        """Score a whole view; (H, W, 9) float32."""
        feats = stack_features(rgb_u8, jet_u8, normals_u8)
        h, w = feats.shape[:2]
        return (
            self.score(feats.reshape(-1, N_FEATURES))
            .reshape(h, w, N_SCORE_CHANNELS)
            .astype(np.float32)
        )


class ExternalScorer:
    """Runs an external command per view and reads back its score map.

    The command template is tokenized once; the placeholders {rgb},
    {jet}, {normal} and {out} are substituted per view.  The command must
    write a score map file at {out}.
    """

    def __init__(self, command_template: str, timeout: float = DEFAULT_SCORER_TIMEOUT):
        if not command_template.strip():
            raise ConfigError("external scorer command is empty")
        if "{out}" not in command_template:
            raise ConfigError("external scorer command must use the {out} placeholder")
        self.command_template = command_template
        self.timeout = timeout
        self._tokens = shlex.split(command_template)

    def build_command(self, rgb_path, jet_path, normal_path, out_path) -> list[str]:
        mapping = {
            "rgb": str(rgb_path),
            "jet": str(jet_path),
            "normal": str(normal_path),
            "out": str(out_path),
        }
        try:
            return [tok.format_map(mapping) for tok in self._tokens]
        except (KeyError, IndexError) as exc:
            raise ConfigError(f"unknown placeholder in scorer command: {exc}") from exc

    def score_view(self, rgb_path, jet_path, normal_path, out_path, expected_hw) -> np.ndarray:
        """Run the command for one view; returns (H, W, 9) float32."""
        argv = self.build_command(rgb_path, jet_path, normal_path, out_path)
        try:
            proc = subprocess.run(argv, capture_output=True, timeout=self.timeout)
        except subprocess.TimeoutExpired as exc:
            raise ScorerTimeoutError(
                f"external scorer exceeded {self.timeout:g} s producing {out_path}"
            ) from exc
        except OSError as exc:
            raise ScorerExitError(f"external scorer failed to start: {exc}") from exc
        if proc.returncode != 0:
            tail = proc.stderr.decode(errors="replace").strip()[-500:]
            raise ScorerExitError(
                f"external scorer exited with status {proc.returncode}"
                + (f": {tail}" if tail else "")
            )
        try:
            scores = read_score_map(out_path)
        except FileNotFoundError as exc:
            raise ScoreMapFormatError(f"external scorer wrote no score map at {out_path}") from exc
        h, w = expected_hw
        if scores.shape[:2] != (h, w):
            raise DimensionMismatchError(
                f"{out_path}: score map is {scores.shape[1]}x{scores.shape[0]}, view is {w}x{h}"
            )
        if not np.isfinite(scores).all():
            raise ScoreMapFormatError(f"{out_path}: score map holds non-finite values")
        return scores
