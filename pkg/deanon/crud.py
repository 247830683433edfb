from datetime import datetime

from sqlalchemy import select
from sqlalchemy.orm import Session

from .models import Artifact, Run


def get_run(session: Session, digest: str):
    """Full digest or any unique prefix of it (run directories use 16 chars)."""
    q = select(Run).where(Run.digest.startswith(digest))
    rows = session.execute(q).scalars().all()
    return rows[0] if len(rows) == 1 else None


def list_runs(session: Session, command: str | None = None, limit: int = 100):
    q = select(Run).order_by(Run.started_at.desc(), Run.id.desc()).limit(limit)
    if command:
        q = q.where(Run.command == command)
    return session.execute(q).scalars().all()


def start_run(session: Session, **kwargs):
    run = session.execute(select(Run).where(Run.digest == kwargs["digest"])).scalar_one_or_none()
    if run:
        # re-run of an identical manifest: reuse the row
        run.status = "running"
        run.error = None
        run.auc = None
        run.started_at = datetime.utcnow()
        run.finished_at = None
        run.artifacts.clear()
    else:
        run = Run(**kwargs)
        session.add(run)
    session.commit()
    session.refresh(run)
    return run


def add_artifact(session: Session, run: Run, name: str, path: str, sha256: str | None = None):
    a = Artifact(run=run, name=name, path=path, sha256=sha256)
    session.add(a)
    session.commit()
    return a


def finish_run(session: Session, run: Run, status: str, auc: float | None = None, error: str | None = None):
    run.status = status
    run.auc = auc
    run.error = error
    run.finished_at = datetime.utcnow()
    session.commit()
    session.refresh(run)
    return run


def run_to_dict(run: Run) -> dict:
    return {
        "digest": run.digest,
        "command": run.command,
        "seed": run.seed,
        "status": run.status,
        "auc": run.auc,
        "error": run.error,
        "run_dir": run.run_dir,
        "config": run.config,
        "started_at": run.started_at.isoformat() if run.started_at else None,
        "finished_at": run.finished_at.isoformat() if run.finished_at else None,
        "artifacts": {a.name: a.path for a in run.artifacts},
    }
