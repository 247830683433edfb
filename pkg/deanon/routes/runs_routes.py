from functools import lru_cache
from pathlib import Path

import numpy as np
from fastapi import APIRouter, Depends, HTTPException
from pydantic import BaseModel, Field
from sqlalchemy.orm import Session

from ..crud import get_run, list_runs, run_to_dict
from ..deps import get_db
from ..errors import DeanonError
from ..services.forest_codec import read_forest
from ..services.forest_engine import predict_scores
from ..services.report_service import read_report_tsv

router = APIRouter(prefix="/runs", tags=["runs"])


# ===============================
# SCHEMA
# ===============================
class ScorePayload(BaseModel):
    vec_a: list[int] = Field(..., min_length=1, description="first node's feature vector")
    vec_b: list[int] = Field(..., min_length=1, description="second node's feature vector")


# ===============================
# HELPERS
# ===============================
def _run_or_404(db: Session, digest: str):
    run = get_run(db, digest)
    if run is None:
        raise HTTPException(status_code=404, detail=f"No run matches {digest}")
    return run


def _artifact_path(run, name: str) -> Path:
    path = {a.name: a.path for a in run.artifacts}.get(name)
    if path is None or not Path(path).exists():
        raise HTTPException(status_code=404, detail=f"Run {run.short_digest} has no {name}")
    return Path(path)


@lru_cache(maxsize=8)
def _load_forest(path: str, mtime: float):
    return read_forest(path)


# ===============================
# LIST / DETAIL
# ===============================
@router.get("/")
def read_runs(command: str | None = None, limit: int = 100, db: Session = Depends(get_db)):
    return [run_to_dict(r) for r in list_runs(db, command=command, limit=limit)]


@router.get("/{digest}")
def read_run(digest: str, db: Session = Depends(get_db)):
    return run_to_dict(_run_or_404(db, digest))


# ===============================
# REPORT TABLE
# ===============================
@router.get("/{digest}/report")
def read_run_report(digest: str, db: Session = Depends(get_db)):
    run = _run_or_404(db, digest)
    name = "sweep" if run.command == "sweep" else "report"
    path = _artifact_path(run, name)
    return {
        "digest": run.digest,
        "rows": read_report_tsv(path),
    }


# ===============================
# SCORE A PAIR WITH THE RUN'S MODEL
# ===============================
@router.post("/{digest}/score")
def score_pair(digest: str, payload: ScorePayload, db: Session = Depends(get_db)):
    run = _run_or_404(db, digest)
    path = _artifact_path(run, "model")

    try:
        forest = _load_forest(str(path), path.stat().st_mtime)
        score = predict_scores(forest, np.asarray([payload.vec_a]), np.asarray([payload.vec_b]))[0]
    except DeanonError as e:
        raise HTTPException(status_code=400, detail=str(e))

    return {
        "digest": run.digest,
        "score": float(score),
        "identical_likelihood": round(1.0 - float(score), 6),
    }
