"""Biometric verification metrics over genuine/impostor score sets.

Conventions, fixed once for the whole package: a comparison is declared a
match when score >= threshold; FMR(t) is the fraction of impostor scores
at or above t and FNMR(t) the fraction of genuine scores below t. Curves
are evaluated at every distinct score plus the two sentinel operating
points (fmr=1, fnmr=0) and (fmr=0, fnmr=1), and EER and FNMR-at-FMR values
are read off that polyline by linear interpolation, which is what makes
sub-resolution rates (e.g. per-subject EERs below 1/30) well defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Mapping, NamedTuple

import numpy as np

from .errors import ValidationError
from .protocol import ComparisonLabel, ComparisonList, ENROLL_SESSIONS, VERIFY_SESSIONS

_NORMAL = NormalDist()


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    fmr: float
    fnmr: float

    @property
    def tmr(self) -> float:
        return 1.0 - self.fnmr


@dataclass(frozen=True)
class CurveData:
    """Operating points ordered by ascending threshold (DET/ROC data)."""

    points: tuple[OperatingPoint, ...]

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        t = np.array([p.threshold for p in self.points])
        fmr = np.array([p.fmr for p in self.points])
        fnmr = np.array([p.fnmr for p in self.points])
        return t, fmr, fnmr


def _as_scores(name: str, scores) -> np.ndarray:
    arr = np.asarray(scores, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValidationError(f"{name} score list is empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} scores contain non-finite values")
    return arr


def error_rates_at_threshold(genuine, impostor, threshold: float) -> OperatingPoint:
    """Direct counting at one threshold (match iff score >= threshold)."""
    g = _as_scores("genuine", genuine)
    i = _as_scores("impostor", impostor)
    fmr = float(np.count_nonzero(i >= threshold)) / i.size
    fnmr = float(np.count_nonzero(g < threshold)) / g.size
    return OperatingPoint(threshold, fmr, fnmr)


def _staircase(genuine, impostor) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vertices at all distinct scores plus the two sentinel endpoints."""
    g = np.sort(_as_scores("genuine", genuine))
    i = np.sort(_as_scores("impostor", impostor))
    thresholds = np.unique(np.concatenate((g, i)))
    fmr = (i.size - np.searchsorted(i, thresholds, side="left")) / i.size
    fnmr = np.searchsorted(g, thresholds, side="left") / g.size
    t = np.concatenate(([-np.inf], thresholds, [np.inf]))
    fmr = np.concatenate(([1.0], fmr, [0.0]))
    fnmr = np.concatenate(([0.0], fnmr, [1.0]))
    return t, fmr, fnmr


def det_curve(genuine, impostor) -> CurveData:
    """DET curve data: one operating point per distinct score plus sentinels."""
    t, fmr, fnmr = _staircase(genuine, impostor)
    return CurveData(tuple(OperatingPoint(float(a), float(b), float(c)) for a, b, c in zip(t, fmr, fnmr)))


def compute_eer(genuine, impostor) -> float:
    """Equal error rate in percent.

    Walks the operating points in threshold order; an exact fmr == fnmr
    vertex wins, otherwise the crossing is interpolated linearly on the
    bracketing polyline segment (both rates share the segment parameter,
    so the interpolated values coincide).
    """
    _, fmr, fnmr = _staircase(genuine, impostor)
    diff = fmr - fnmr  # non-increasing from +1 to -1
    exact = np.flatnonzero(diff == 0.0)
    k = int(np.argmax(diff < 0.0))  # first vertex past the crossing
    if exact.size and exact[0] < k:
        return float(fmr[exact[0]]) * 100.0
    lam = diff[k - 1] / (diff[k - 1] - diff[k])
    return float(fmr[k - 1] + lam * (fmr[k] - fmr[k - 1])) * 100.0


class FnmrAtFmr(NamedTuple):
    value_pct: float
    extrapolated: bool


def fnmr_at_fmr(genuine, impostor, fmr_pct: float) -> FnmrAtFmr:
    """FNMR (percent) where the curve reaches the requested FMR.

    Interpolates between the bracketing operating points. When even a
    single accepted impostor overshoots the budget (smallest positive fmr
    > target), interpolation through the all-reject sentinel would be
    meaningless; the FNMR at the first zero-fmr threshold is returned
    instead and flagged as extrapolated.
    """
    if not 0.0 < fmr_pct < 100.0:
        raise ValidationError("fmr_pct must be inside (0, 100)")
    _, fmr, fnmr = _staircase(genuine, impostor)
    target = fmr_pct / 100.0
    k = int(np.argmax(fmr <= target))
    if k == 0:
        return FnmrAtFmr(float(fnmr[0]) * 100.0, False)
    if fmr[k] == 0.0 and fmr[k - 1] > target:
        positive_min = fmr[fmr > 0.0].min()
        if positive_min > target:
            return FnmrAtFmr(float(fnmr[k]) * 100.0, True)
    lam = (fmr[k - 1] - target) / (fmr[k - 1] - fmr[k])
    return FnmrAtFmr(float(fnmr[k - 1] + lam * (fnmr[k] - fnmr[k - 1])) * 100.0, False)


def compute_auc(genuine, impostor) -> float:
    """Area under the ROC curve in percent (rank statistic, ties count half)."""
    g = _as_scores("genuine", genuine)
    i = np.sort(_as_scores("impostor", impostor))
    below = np.searchsorted(i, g, side="left")
    at_or_below = np.searchsorted(i, g, side="right")
    wins = float(below.sum())
    ties = float((at_or_below - below).sum())
    return 100.0 * (wins + 0.5 * ties) / (g.size * i.size)


def mean_per_subject_eer(per_subject: Mapping[str, "SubjectScores"]) -> float:
    """Unweighted mean of per-subject EERs (percent)."""
    if not per_subject:
        raise ValidationError("no per-subject score sets")
    eers = [compute_eer(s.genuine, s.impostor) for s in per_subject.values()]
    return float(np.mean(eers))


# ---------------------------------------------------------------------------
# Score aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubjectScores:
    genuine: np.ndarray
    impostor_similar: np.ndarray
    impostor_dissimilar: np.ndarray

    @property
    def impostor(self) -> np.ndarray:
        return np.concatenate((self.impostor_similar, self.impostor_dissimilar))


@dataclass(frozen=True)
class ScoreSet:
    """Aggregated (per score group) scores, globally and per subject."""

    genuine: np.ndarray
    impostor_similar: np.ndarray
    impostor_dissimilar: np.ndarray
    per_subject: dict[str, SubjectScores]

    @property
    def impostor(self) -> np.ndarray:
        return np.concatenate((self.impostor_similar, self.impostor_dissimilar))


def aggregate(scores, comparison_list: ComparisonList) -> ScoreSet:
    """Average each 5-comparison score group into one aggregated score.

    Validates the protocol structure on the way: every group has exactly
    5 members with one label and target, and every subject ends up with
    10 genuine + 10 similar + 10 dissimilar aggregated scores.
    """
    arr = np.asarray(scores, dtype=np.float64).ravel()
    if arr.size != len(comparison_list):
        raise ValidationError(
            f"score count {arr.size} does not match comparison count {len(comparison_list)}"
        )
    if np.any(~np.isfinite(arr)) or np.any((arr < 0.0) | (arr > 1.0)):
        raise ValidationError("scores must be finite and within [0, 1]")
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    meta: dict[int, tuple[ComparisonLabel, str]] = {}
    for value, comp in zip(arr, comparison_list):
        group = comp.score_group
        sums[group] = sums.get(group, 0.0) + float(value)
        counts[group] = counts.get(group, 0) + 1
        m = (comp.label, comp.target_subject)
        if meta.setdefault(group, m) != m:
            raise ValidationError(f"score group {group} mixes labels or target subjects")
    bad = [g for g, n in counts.items() if n != ENROLL_SESSIONS]
    if bad:
        raise ValidationError(f"score groups without exactly {ENROLL_SESSIONS} members: {bad[:5]}")
    by_subject: dict[str, dict[ComparisonLabel, list[float]]] = {}
    pooled: dict[ComparisonLabel, list[float]] = {lab: [] for lab in ComparisonLabel}
    for group in sorted(sums):
        label, subject = meta[group]
        value = sums[group] / ENROLL_SESSIONS
        pooled[label].append(value)
        by_subject.setdefault(subject, {lab: [] for lab in ComparisonLabel})[label].append(value)
    per_subject: dict[str, SubjectScores] = {}
    for subject, groups in sorted(by_subject.items()):
        if any(len(groups[lab]) != VERIFY_SESSIONS for lab in ComparisonLabel):
            raise ValidationError(
                f"subject {subject!r} has "
                f"{[len(groups[lab]) for lab in ComparisonLabel]} aggregated scores; expected 10 each"
            )
        per_subject[subject] = SubjectScores(
            np.array(groups[ComparisonLabel.GENUINE]),
            np.array(groups[ComparisonLabel.IMPOSTOR_SIMILAR]),
            np.array(groups[ComparisonLabel.IMPOSTOR_DISSIMILAR]),
        )
    return ScoreSet(
        np.array(pooled[ComparisonLabel.GENUINE]),
        np.array(pooled[ComparisonLabel.IMPOSTOR_SIMILAR]),
        np.array(pooled[ComparisonLabel.IMPOSTOR_DISSIMILAR]),
        per_subject,
    )


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

REPORT_COLUMNS = (
    "Global EER (%)",
    "FNMR@1%FMR (%)",
    "FNMR@10%FMR (%)",
    "AUC (%)",
    "Mean Per-Subject EER (%)",
)


@dataclass(frozen=True)
class MetricsBlock:
    """Headline metrics of one genuine-vs-impostor partition."""

    global_eer: float
    fnmr_at_fmr1: FnmrAtFmr
    fnmr_at_fmr10: FnmrAtFmr
    auc: float

    @classmethod
    def compute(cls, genuine, impostor) -> "MetricsBlock":
        return cls(
            global_eer=compute_eer(genuine, impostor),
            fnmr_at_fmr1=fnmr_at_fmr(genuine, impostor, 1.0),
            fnmr_at_fmr10=fnmr_at_fmr(genuine, impostor, 10.0),
            auc=compute_auc(genuine, impostor),
        )


@dataclass(frozen=True)
class MetricsReport:
    pooled: MetricsBlock
    similar_only: MetricsBlock
    dissimilar_only: MetricsBlock
    mean_per_subject_eer: float
    det_global: CurveData
    det_similar: CurveData
    det_dissimilar: CurveData
    config_echo: dict[str, str] = field(default_factory=dict)

    def row_values(self, block: MetricsBlock | None = None) -> tuple[float, ...]:
        b = block or self.pooled
        return (
            b.global_eer,
            b.fnmr_at_fmr1.value_pct,
            b.fnmr_at_fmr10.value_pct,
            b.auc,
            self.mean_per_subject_eer,
        )


def build_report(score_set: ScoreSet, config_echo: Mapping[str, object] | None = None) -> MetricsReport:
    """Compute every headline metric plus the three DET curves."""
    g = score_set.genuine
    pooled_imp = score_set.impostor
    return MetricsReport(
        pooled=MetricsBlock.compute(g, pooled_imp),
        similar_only=MetricsBlock.compute(g, score_set.impostor_similar),
        dissimilar_only=MetricsBlock.compute(g, score_set.impostor_dissimilar),
        mean_per_subject_eer=mean_per_subject_eer(score_set.per_subject),
        det_global=det_curve(g, pooled_imp),
        det_similar=det_curve(g, score_set.impostor_similar),
        det_dissimilar=det_curve(g, score_set.impostor_dissimilar),
        config_echo={k: str(v) for k, v in (config_echo or {}).items()},
    )


def report_table(report: MetricsReport) -> str:
    """Human-readable table with one row per impostor partition."""
    rows = [
        ("pooled", report.row_values(report.pooled)),
        ("similar-only", report.row_values(report.similar_only)),
        ("dissimilar-only", report.row_values(report.dissimilar_only)),
    ]
    label_w = max(len("impostors"), max(len(name) for name, _ in rows))
    widths = [max(len(col), 8) for col in REPORT_COLUMNS]
    header = " | ".join(["impostors".ljust(label_w)] + [c.rjust(w) for c, w in zip(REPORT_COLUMNS, widths)])
    sep = "-+-".join(["-" * label_w] + ["-" * w for w in widths])
    lines = [header, sep]
    for name, values in rows:
        lines.append(
            " | ".join([name.ljust(label_w)] + [f"{v:.2f}".rjust(w) for v, w in zip(values, widths)])
        )
    flags = []
    for name, block in (("pooled", report.pooled), ("similar", report.similar_only), ("dissimilar", report.dissimilar_only)):
        for pct, res in ((1, block.fnmr_at_fmr1), (10, block.fnmr_at_fmr10)):
            if res.extrapolated:
                flags.append(f"note: FNMR@{pct}%FMR ({name}) extrapolated beyond the smallest achievable FMR")
    return "\n".join(lines + flags) + "\n"


def report_summary(report: MetricsReport) -> str:
    """Machine-readable key=value summary."""
    lines = []
    for key, value in report.config_echo.items():
        lines.append(f"config.{key}={value}")
    for prefix, block in (
        ("pooled", report.pooled),
        ("similar", report.similar_only),
        ("dissimilar", report.dissimilar_only),
    ):
        lines.append(f"{prefix}.global_eer_pct={block.global_eer:.6f}")
        lines.append(f"{prefix}.fnmr_at_fmr1_pct={block.fnmr_at_fmr1.value_pct:.6f}")
        lines.append(f"{prefix}.fnmr_at_fmr1_extrapolated={block.fnmr_at_fmr1.extrapolated}")
        lines.append(f"{prefix}.fnmr_at_fmr10_pct={block.fnmr_at_fmr10.value_pct:.6f}")
        lines.append(f"{prefix}.fnmr_at_fmr10_extrapolated={block.fnmr_at_fmr10.extrapolated}")
        lines.append(f"{prefix}.auc_pct={block.auc:.6f}")
    lines.append(f"mean_per_subject_eer_pct={report.mean_per_subject_eer:.6f}")
    return "\n".join(lines) + "\n"


def write_curve(
    curve: CurveData, path, normal_deviate: bool = False, comments: Mapping[str, object] | None = None
) -> None:
    """Write a curve file: threshold,fmr,fnmr (+ optional probit columns)."""

    def ppf(x: float) -> float:
        if x <= 0.0:
            return -math.inf
        if x >= 1.0:
            return math.inf
        return _NORMAL.inv_cdf(x)

    header = "threshold,fmr,fnmr"
    if normal_deviate:
        header += ",fmr_nd,fnmr_nd"
    lines = [f"# {k}={v}" for k, v in (comments or {}).items()]
    lines.append(header)
    for p in curve.points:
        row = f"{p.threshold:.17g},{p.fmr:.17g},{p.fnmr:.17g}"
        if normal_deviate:
            row += f",{ppf(p.fmr):.17g},{ppf(p.fnmr):.17g}"
        lines.append(row)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
