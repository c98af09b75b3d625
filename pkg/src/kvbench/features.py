"""Timing-feature extraction and normalization for keystroke sessions.

Per-event rows hold five timing features in seconds plus the key code
scaled to [0, 1]. Pairwise features of the last row are zero by padding
convention; normalization writes the post-standardization mean (zero) back
into those cells so they stay neutral for downstream models.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .corpus import Corpus, Session
from .errors import ParseError, ValidationError

FEATURE_NAMES = ("ht", "ipt", "ikt", "irt", "prr", "key_norm")
#: features standardized by SequenceNormalizer (key_norm is already in [0, 1])
TIMING_FEATURES = FEATURE_NAMES[:5]
#: features undefined on the last row of a session (zero padding)
PAIRWISE_FEATURES = ("ipt", "ikt", "irt", "prr")
_PAIRWISE_COLS = tuple(FEATURE_NAMES.index(n) for n in PAIRWISE_FEATURES)


class EventFeatures(NamedTuple):
    ht: float
    ipt: float
    ikt: float
    irt: float
    prr: float
    key_norm: float


@dataclass(frozen=True)
class FeatureSequence:
    """Ordered per-event feature rows of one session, shape (n, 6)."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != len(FEATURE_NAMES):
            raise ValidationError(f"feature matrix must be (n, {len(FEATURE_NAMES)})")
        if self.values.shape[0] == 0:
            raise ValidationError("feature sequence is empty")

    @property
    def length(self) -> int:
        return int(self.values.shape[0])

    @property
    def rows(self) -> list[EventFeatures]:
        return [EventFeatures(*map(float, row)) for row in self.values]

    def defined_mask(self) -> np.ndarray:
        """Boolean (n, 6) mask of entries that are real measurements."""
        mask = np.ones_like(self.values, dtype=bool)
        mask[-1, list(_PAIRWISE_COLS)] = False
        return mask


def extract_features(session: Session) -> FeatureSequence:
    """Compute per-event timing features (seconds) from one session.

    Row i pairs event i with event i+1; the final row's pairwise entries
    are zero. Hold time is release-press of the row's own event.
    """
    n = session.n_events
    if n == 0:
        raise ValidationError(f"session {session.session_id!r} has no events")
    press = session.press_ms.astype(np.float64)
    release = session.release_ms.astype(np.float64)
    values = np.zeros((n, len(FEATURE_NAMES)), dtype=np.float64)
    values[:, 0] = (release - press) / 1000.0
    if n > 1:
        values[:-1, 1] = (press[1:] - press[:-1]) / 1000.0
        values[:-1, 2] = (press[1:] - release[:-1]) / 1000.0
        values[:-1, 3] = (release[1:] - release[:-1]) / 1000.0
        values[:-1, 4] = (release[1:] - press[:-1]) / 1000.0
    values[:, 5] = session.key_codes / 255.0
    return FeatureSequence(values)


# ---------------------------------------------------------------------------
# Session-level aggregates
# ---------------------------------------------------------------------------

STAT_COMPONENTS = (
    "ht_mean",
    "ht_std",
    "ipt_mean",
    "ipt_std",
    "ikt_mean",
    "ikt_std",
    "irt_mean",
    "irt_std",
    "rollover_count",
    "rollover_total",
    "hold_to_rollover_ratio",
    "events_per_second",
)


@dataclass(frozen=True)
class StatVector:
    """Session-level aggregate features (all times in seconds)."""

    ht_mean: float
    ht_std: float
    ipt_mean: float
    ipt_std: float
    ikt_mean: float
    ikt_std: float
    irt_mean: float
    irt_std: float
    rollover_count: float
    rollover_total: float
    hold_to_rollover_ratio: float
    events_per_second: float
    has_rollover: bool

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in STAT_COMPONENTS], dtype=np.float64)


def session_stats(seq: FeatureSequence) -> StatVector:
    """Aggregate a feature sequence; pairwise stats skip the padding row.

    Rollover duration of an adjacent pair is max(0, -ikt): the span during
    which both keys are held. With no rollover anywhere the ratio is 0 and
    has_rollover is False (a finite sentinel instead of infinity).
    """
    v = seq.values
    n = seq.length
    ht = v[:, 0]
    out = {"ht_mean": float(ht.mean()), "ht_std": float(ht.std())}
    if n > 1:
        pairs = v[:-1]
        for name, col in (("ipt", 1), ("ikt", 2), ("irt", 3)):
            out[f"{name}_mean"] = float(pairs[:, col].mean())
            out[f"{name}_std"] = float(pairs[:, col].std())
        rollover = np.maximum(0.0, -pairs[:, 2])
        rollover_count = int(np.count_nonzero(rollover > 0))
        rollover_total = float(rollover.sum())
    else:
        for name in ("ipt", "ikt", "irt"):
            out[f"{name}_mean"] = 0.0
            out[f"{name}_std"] = 0.0
        rollover_count = 0
        rollover_total = 0.0
    ht_total = float(ht.sum())
    has_rollover = rollover_total > 0.0
    ratio = ht_total / rollover_total if has_rollover else 0.0
    # press offsets from row 0 are the cumulative inter-press times
    press_offsets = np.concatenate(([0.0], np.cumsum(v[:-1, 1]))) if n > 1 else np.zeros(1)
    duration = float(np.max(press_offsets + ht))
    rate = n / duration if duration > 0 else 0.0
    return StatVector(
        rollover_count=float(rollover_count),
        rollover_total=rollover_total,
        hold_to_rollover_ratio=ratio,
        events_per_second=rate,
        has_rollover=has_rollover,
        **out,
    )


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


class SequenceNormalizer(BaseEstimator, TransformerMixin):
    """Clip-then-standardize transform for the timing features.

    Fitting computes per-feature mean/std (population convention) over the
    defined entries of the development sequences, plus clip bounds at the
    configured quantiles. key_norm passes through unchanged and padding
    entries are written as 0, the post-standardization mean.
    """

    def __init__(self, clip_quantiles: tuple[float, float] = (0.001, 0.999)):
        self.clip_quantiles = clip_quantiles

    def fit(self, sequences: Iterable[FeatureSequence], y=None) -> "SequenceNormalizer":
        lo_q, hi_q = self.clip_quantiles
        if not 0.0 <= lo_q < hi_q <= 1.0:
            raise ValidationError("clip_quantiles must satisfy 0 <= low < high <= 1")
        pooled = {name: [] for name in TIMING_FEATURES}
        for seq in sequences:
            v, mask = seq.values, seq.defined_mask()
            for col, name in enumerate(TIMING_FEATURES):
                pooled[name].append(v[mask[:, col], col])
        means, stds, lows, highs = [], [], [], []
        for name in TIMING_FEATURES:
            if not pooled[name]:
                raise ValidationError("no feature sequences to fit on")
            data = np.concatenate(pooled[name])
            std = float(data.std())
            if std <= 0.0:
                raise ValidationError(f"feature {name!r} is constant; cannot standardize")
            means.append(float(data.mean()))
            stds.append(std)
            lows.append(float(np.quantile(data, lo_q)))
            highs.append(float(np.quantile(data, hi_q)))
        self.means_ = np.array(means)
        self.stds_ = np.array(stds)
        self.clip_low_ = np.array(lows)
        self.clip_high_ = np.array(highs)
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "means_"):
            raise NotFittedError("SequenceNormalizer is not fitted")

    def transform(self, seq: FeatureSequence) -> FeatureSequence:
        self._check_fitted()
        v = seq.values.copy()
        k = len(TIMING_FEATURES)
        clipped = np.clip(v[:, :k], self.clip_low_, self.clip_high_)
        v[:, :k] = (clipped - self.means_) / self.stds_
        v[~seq.defined_mask()] = 0.0
        return FeatureSequence(v)

    def inverse_transform(self, seq: FeatureSequence) -> FeatureSequence:
        """Undo the affine map (clipping is not invertible)."""
        self._check_fitted()
        v = seq.values.copy()
        k = len(TIMING_FEATURES)
        v[:, :k] = v[:, :k] * self.stds_ + self.means_
        v[~seq.defined_mask()] = 0.0
        return FeatureSequence(v)

    def save(self, path, comments: dict[str, object] | None = None) -> None:
        self._check_fitted()
        lines = [f"# clip_quantiles={self.clip_quantiles[0]:g},{self.clip_quantiles[1]:g}"]
        if comments:
            lines.extend(f"# {k}={v}" for k, v in comments.items())
        lines.append("feature,mean,std,clip_low,clip_high")
        for i, name in enumerate(TIMING_FEATURES):
            lines.append(
                f"{name},{self.means_[i]:.17g},{self.stds_[i]:.17g},"
                f"{self.clip_low_[i]:.17g},{self.clip_high_[i]:.17g}"
            )
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "SequenceNormalizer":
        clip_q = (0.001, 0.999)
        rows: dict[str, tuple[float, float, float, float]] = {}
        with open(path, "r", encoding="utf-8") as fh:
            header_seen = False
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    if line.startswith("# clip_quantiles="):
                        lo, _, hi = line.partition("=")[2].partition(",")
                        clip_q = (float(lo), float(hi))
                    continue
                if not header_seen:
                    if line != "feature,mean,std,clip_low,clip_high":
                        raise ParseError(f"unexpected header {line!r}", lineno)
                    header_seen = True
                    continue
                parts = line.split(",")
                if len(parts) != 5:
                    raise ParseError(f"expected 5 fields, got {len(parts)}", lineno)
                try:
                    rows[parts[0]] = tuple(float(p) for p in parts[1:])  # type: ignore[assignment]
                except ValueError:
                    raise ParseError(f"non-numeric normalizer row {line!r}", lineno) from None
        missing = [n for n in TIMING_FEATURES if n not in rows]
        if missing:
            raise ValidationError(f"normalizer file missing features {missing}")
        norm = cls(clip_quantiles=clip_q)
        norm.means_ = np.array([rows[n][0] for n in TIMING_FEATURES])
        norm.stds_ = np.array([rows[n][1] for n in TIMING_FEATURES])
        norm.clip_low_ = np.array([rows[n][2] for n in TIMING_FEATURES])
        norm.clip_high_ = np.array([rows[n][3] for n in TIMING_FEATURES])
        if np.any(norm.stds_ <= 0):
            raise ValidationError("normalizer stds must be positive")
        return norm


def fit_normalizer(
    sequences: Iterable[FeatureSequence],
    clip_quantiles: tuple[float, float] = (0.001, 0.999),
) -> SequenceNormalizer:
    return SequenceNormalizer(clip_quantiles=clip_quantiles).fit(sequences)


def apply_normalizer(seq: FeatureSequence, normalizer: SequenceNormalizer) -> FeatureSequence:
    return normalizer.transform(seq)


def fix_length(seq: FeatureSequence, length: int = 70) -> tuple[np.ndarray, int]:
    """Cut or zero-pad a sequence to `length` rows.

    Returns the (length, 6) matrix and the number of real rows kept.
    """
    if length < 1:
        raise ValidationError("length must be >= 1")
    v = seq.values
    n_valid = min(seq.length, length)
    out = np.zeros((length, v.shape[1]), dtype=np.float64)
    out[:n_valid] = v[:n_valid]
    return out, n_valid
