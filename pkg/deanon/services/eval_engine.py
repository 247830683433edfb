import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..errors import EvaluationError

logger = logging.getLogger(__name__)

# ===============================
# FIGURES OF MERIT
# ===============================
FP_LEVELS = (0.0001, 0.001, 0.01, 0.10, 0.25)

# (label, lower, upper): lower < JC <= upper; the first bucket is JC == 0
JC_BUCKETS = (
    ("=0", 0.0, 0.0),
    ("(0,0.05]", 0.0, 0.05),
    ("(0.05,0.10]", 0.05, 0.10),
    ("(0.10,0.15]", 0.10, 0.15),
    (">0.15", 0.15, float("inf")),
)

_EPS = 1e-12


@dataclass(frozen=True)
class RocCurve:
    """Points (fp_rate, tp_rate); positive class is "identical"."""

    fp: tuple[float, ...]
    tp: tuple[float, ...]
    thresholds: tuple[float, ...]

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fp, self.tp))


@dataclass
class EvalReport:
    auc: float
    tp_at_fp: dict[float, float]
    n_identical: int
    n_non_identical: int
    cases: dict[str, "EvalReport"] = field(default_factory=dict)
    jc_table: list[dict] | None = None

    def as_row(self, name: str) -> dict:
        row = {"row": name}
        for level in sorted(self.tp_at_fp):
            row[fp_column(level)] = round(100.0 * self.tp_at_fp[level], 2)
        row["AUC"] = round(self.auc, 4)
        row["identical"] = self.n_identical
        row["non_identical"] = self.n_non_identical
        return row


def fp_column(level: float) -> str:
    return f"{100.0 * level:g}%"


def _as_scores(values: Iterable[float], name: str) -> np.ndarray:
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise EvaluationError(f"{name} score set is empty")
    return arr


# ===============================
# ROC / AUC
# ===============================
def roc_and_auc(scores_identical: Iterable[float], scores_non_identical: Iterable[float]) -> tuple[RocCurve, float]:
    """
    Sweep a threshold t over the distinct scores; a pair is called
    identical when its score <= t (lower score = more likely identical).
    """
    pos = np.sort(_as_scores(scores_identical, "identical"))
    neg = np.sort(_as_scores(scores_non_identical, "non-identical"))

    thresholds = np.unique(np.concatenate([pos, neg]))
    tp = np.searchsorted(pos, thresholds, side="right") / pos.size
    fp = np.searchsorted(neg, thresholds, side="right") / neg.size

    tp = np.concatenate([[0.0], tp])
    fp = np.concatenate([[0.0], fp])
    thresholds = np.concatenate([[-np.inf], thresholds])

    auc = float(np.sum(np.diff(fp) * (tp[1:] + tp[:-1]) / 2.0))
    curve = RocCurve(fp=tuple(fp.tolist()), tp=tuple(tp.tolist()), thresholds=tuple(thresholds.tolist()))
    return curve, auc


def tp_at_fp(curve: RocCurve, fp_levels: Iterable[float] = FP_LEVELS, interpolate: bool = False) -> dict[float, float]:
    """
    TP rate at each FP budget.

    Default is the conservative step rule: the TP of the last point whose
    FP rate does not exceed the level. With interpolate=True the TP is read
    at exactly the level, linearly between adjacent points.
    """
    fp = np.asarray(curve.fp)
    tp = np.asarray(curve.tp)
    out = {}
    for level in fp_levels:
        if not 0.0 <= level <= 1.0:
            raise EvaluationError(f"fp level {level} outside [0, 1]")
        idx = int(np.searchsorted(fp, level + _EPS, side="right")) - 1
        value = float(tp[idx])
        if interpolate and idx + 1 < len(fp) and fp[idx] < level:
            span = fp[idx + 1] - fp[idx]
            value += float((tp[idx + 1] - tp[idx]) * (level - fp[idx]) / span)
        out[level] = value
    return out


def threshold_at_fp(scores_non_identical: Iterable[float], level: float) -> float:
    """Largest score threshold whose FP rate stays within `level`."""
    neg = np.sort(_as_scores(scores_non_identical, "non-identical"))
    allowed = int(np.floor(level * neg.size + _EPS))
    if allowed == 0:
        return float(np.nextafter(neg[0], -np.inf))
    if allowed >= neg.size:
        return float(neg[-1])
    # stay below the first score that would push FP over budget
    if neg[allowed] == neg[allowed - 1]:
        below = neg[neg < neg[allowed]]
        return float(below[-1]) if below.size else float(np.nextafter(neg[0], -np.inf))
    return float(neg[allowed - 1])


def evaluate(
    identical_by_case: dict[str, Sequence[float]],
    non_identical: Sequence[float],
    fp_levels: Iterable[float] = FP_LEVELS,
    interpolate: bool = False,
) -> EvalReport:
    """Overall report over every identical score plus one sub-report per case."""
    fp_levels = tuple(fp_levels)
    all_identical = [s for scores in identical_by_case.values() for s in scores]
    curve, auc = roc_and_auc(all_identical, non_identical)

    report = EvalReport(
        auc=auc,
        tp_at_fp=tp_at_fp(curve, fp_levels, interpolate),
        n_identical=len(all_identical),
        n_non_identical=len(non_identical),
    )
    for name, scores in identical_by_case.items():
        if not len(scores):
            logger.warning("case %s has no identical pairs; skipped", name)
            continue
        c_curve, c_auc = roc_and_auc(scores, non_identical)
        report.cases[name] = EvalReport(
            auc=c_auc,
            tp_at_fp=tp_at_fp(c_curve, fp_levels, interpolate),
            n_identical=len(scores),
            n_non_identical=len(non_identical),
        )
    return report


# ===============================
# NEIGHBORHOOD OVERLAP
# ===============================
def jaccard(a: Iterable, b: Iterable) -> float:
    a, b = set(a), set(b)
    union = a | b
    if not union:
        logger.warning("jaccard of two empty sets defined as 0")
        return 0.0
    return len(a & b) / len(union)


def bucket_of(jc: float, buckets=JC_BUCKETS) -> int:
    for idx, (_, lower, upper) in enumerate(buckets):
        if lower == upper:
            if jc == lower:
                return idx
        elif lower < jc <= upper:
            return idx
    raise EvaluationError(f"jaccard value {jc} falls in no bucket")


def jc_error_breakdown(
    jaccards: Sequence[float],
    labels: Sequence[int],
    scores: Sequence[float],
    threshold: float,
    buckets=JC_BUCKETS,
) -> list[dict]:
    """
    Per-bucket TP/FP rates for a fixed decision threshold (identical when
    score <= threshold), plus each bucket's share of its class.
    """
    if not (len(jaccards) == len(labels) == len(scores)):
        raise EvaluationError("jaccards, labels and scores must have equal length")

    rows = [
        {"bucket": name, "lower": lower, "upper": upper,
         "identical": 0, "non_identical": 0, "tp": 0, "fp": 0}
        for name, lower, upper in buckets
    ]
    for jc, label, score in zip(jaccards, labels, scores):
        row = rows[bucket_of(jc, buckets)]
        positive = score <= threshold
        if int(label) == 1:
            row["identical"] += 1
            row["tp"] += int(positive)
        else:
            row["non_identical"] += 1
            row["fp"] += int(positive)

    total_ident = sum(r["identical"] for r in rows)
    total_non = sum(r["non_identical"] for r in rows)
    for r in rows:
        r["tp_rate"] = r["tp"] / r["identical"] if r["identical"] else 0.0
        r["fp_rate"] = r["fp"] / r["non_identical"] if r["non_identical"] else 0.0
        r["identical_fraction"] = r["identical"] / total_ident if total_ident else 0.0
        r["non_identical_fraction"] = r["non_identical"] / total_non if total_non else 0.0
    return rows
