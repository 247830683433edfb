import os
from functools import lru_cache
from pathlib import Path

from dotenv import load_dotenv
from sqlalchemy import create_engine, event
from sqlalchemy.orm import Session, sessionmaker

# Load .env
load_dotenv()


# =========================
# DIRECTORIES
# =========================
def cache_dir() -> Path:
    root = os.getenv("DEANON_CACHE_DIR") or "~/.cache/deanon"
    path = Path(root).expanduser()
    path.mkdir(parents=True, exist_ok=True)
    return path


def runs_dir() -> Path:
    root = os.getenv("DEANON_RUNS_DIR")
    path = Path(root).expanduser() if root else cache_dir() / "runs"
    path.mkdir(parents=True, exist_ok=True)
    return path


# =========================
# RUNTIME KNOBS
# =========================
def default_workers() -> int:
    raw = os.getenv("DEANON_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def log_level() -> str:
    return os.getenv("DEANON_LOG_LEVEL", "INFO").upper()


def snap_base() -> str:
    return os.getenv("DEANON_SNAP_BASE", "https://snap.stanford.edu/data")


# =========================
# LEDGER DATABASE
# =========================
def database_url() -> str:
    return os.getenv("DEANON_DATABASE_URL") or f"sqlite:///{cache_dir() / 'ledger.db'}"


@lru_cache(maxsize=None)
def _engine_for(url: str):
    engine = create_engine(url, future=True, pool_pre_ping=True)

    if url.startswith("sqlite"):
        # SQLite-only pragmas
        @event.listens_for(engine, "connect")
        def _pragmas(dbapi_conn, _record):
            cur = dbapi_conn.cursor()
            cur.execute("PRAGMA journal_mode=WAL;")
            cur.execute("PRAGMA foreign_keys=ON;")
            cur.close()

    from .models import Base

    Base.metadata.create_all(engine)
    return engine


def get_engine():
    return _engine_for(database_url())


def session_factory() -> sessionmaker:
    return sessionmaker(bind=get_engine(), class_=Session, expire_on_commit=False)


# =========================
# DB DEPENDENCY
# =========================
def get_db():
    with session_factory()() as session:
        yield session
