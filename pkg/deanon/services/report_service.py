import logging
from pathlib import Path
from typing import Iterable, Sequence

import pandas as pd

from ..errors import EvaluationError
from .eval_engine import EvalReport, RocCurve
from .pair_engine import PairSample, pairs_frame, read_pair_frame, samples_from_frame

logger = logging.getLogger(__name__)

OVERALL_ROW = "Complete"


# ===============================
# ROC POINTS
# ===============================
def roc_frame(curve: RocCurve) -> pd.DataFrame:
    return pd.DataFrame({"fp": curve.fp, "tp": curve.tp})


def write_roc_csv(curve: RocCurve, path: str | Path) -> Path:
    roc_frame(curve).to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
    return Path(path)


# ===============================
# SCORED PAIRS
# ===============================
def write_scores_tsv(samples: Sequence[PairSample], scores: Sequence[float], path: str | Path) -> Path:
    if len(samples) != len(scores):
        raise EvaluationError(f"{len(samples)} pairs but {len(scores)} scores")
    df = pairs_frame(samples)
    df["score"] = [repr(float(s)) for s in scores]
    df.to_csv(path, sep="\t", index=False, lineterminator="\n")
    return Path(path)


def read_scores_tsv(path: str | Path) -> tuple[list[PairSample], list[float]]:
    df = read_pair_frame(path)
    if "score" not in df.columns:
        raise EvaluationError(f"{path}: no score column")
    return samples_from_frame(df), [float(s) for s in df["score"]]


# ===============================
# TP@FP TABLES
# ===============================
def report_frame(report: EvalReport) -> pd.DataFrame:
    """One row per case, then the overall row; TP columns in percent."""
    rows = [sub.as_row(name) for name, sub in report.cases.items() if name != OVERALL_ROW]
    rows.append(report.as_row(OVERALL_ROW))
    return pd.DataFrame(rows)


def write_report_tsv(report: EvalReport, path: str | Path) -> Path:
    report_frame(report).to_csv(path, sep="\t", index=False, lineterminator="\n")
    return Path(path)


def read_report_tsv(path: str | Path) -> list[dict]:
    df = pd.read_csv(path, sep="\t")
    df = df.astype(object).where(df.notna(), None)
    return df.to_dict(orient="records")


def consolidate(cells: Sequence[tuple[dict, EvalReport | None]]) -> pd.DataFrame:
    """
    Sweep matrix: one row per cell, its grid values first, then the overall
    TP@FP columns and AUC. Failed cells keep their row with an error note.
    """
    rows = []
    for labels, report in cells:
        row = dict(labels)
        if report is None:
            row.setdefault("error", "failed")
        else:
            overall = report.as_row(OVERALL_ROW)
            overall.pop("row")
            row.update(overall)
            row.setdefault("error", "")
        rows.append(row)
    if not rows:
        raise EvaluationError("nothing to consolidate")
    return pd.DataFrame(rows)


def write_consolidated_tsv(frame: pd.DataFrame, path: str | Path) -> Path:
    frame.to_csv(path, sep="\t", index=False, lineterminator="\n")
    return Path(path)


# ===============================
# NEIGHBORHOOD-OVERLAP BREAKDOWN
# ===============================
JC_COLUMNS = [
    "bucket", "lower", "upper", "identical", "non_identical", "tp", "fp",
    "tp_rate", "fp_rate", "identical_fraction", "non_identical_fraction",
]


def write_jc_csv(rows: Iterable[dict], path: str | Path) -> Path:
    df = pd.DataFrame(list(rows), columns=JC_COLUMNS)
    df.to_csv(path, index=False, float_format="%.6g", lineterminator="\n")
    return Path(path)


# ===============================
# WORKBOOK
# ===============================
def write_workbook(frames: dict[str, pd.DataFrame], path: str | Path) -> Path:
    """All tables of a run or sweep in one XLSX file, one sheet each."""
    path = Path(path)
    with pd.ExcelWriter(path, engine="openpyxl") as writer:
        for sheet, frame in frames.items():
            frame.to_excel(writer, sheet_name=sheet[:31], index=False)
    logger.info("wrote workbook %s (%d sheets)", path, len(frames))
    return path
