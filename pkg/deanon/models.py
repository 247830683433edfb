from datetime import datetime

from sqlalchemy import (
    JSON,
    Column,
    DateTime,
    Float,
    ForeignKey,
    Index,
    Integer,
    String,
    Text,
)
from sqlalchemy.orm import declarative_base, relationship

Base = declarative_base()


# ==================================================
# Runs (one row per pipeline / sweep execution)
# ==================================================
class Run(Base):
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True)

    digest = Column(
        String(64),
        unique=True,
        index=True,
        nullable=False
    )

    command = Column(
        String,
        index=True,
        nullable=False
    )  # run / sweep / train / ...

    seed = Column(
        Integer,
        nullable=False
    )

    config = Column(
        JSON,
        nullable=False
    )

    run_dir = Column(
        Text,
        nullable=False
    )

    status = Column(
        String,
        default="running",
        nullable=False
    )  # running / ok / failed / partial

    error = Column(
        Text,
        nullable=True
    )

    # ===============================
    # HEADLINE RESULT
    # ===============================
    auc = Column(
        Float,
        nullable=True
    )

    started_at = Column(
        DateTime,
        default=datetime.utcnow,
        index=True
    )

    finished_at = Column(
        DateTime,
        nullable=True
    )

    artifacts = relationship(
        "Artifact",
        back_populates="run",
        cascade="all, delete-orphan",
        order_by="Artifact.name",
    )

    @property
    def short_digest(self):
        return self.digest[:16]

    def __repr__(self):
        return (
            f"<Run {self.short_digest} "
            f"{self.command} seed={self.seed} "
            f"status={self.status} auc={self.auc}>"
        )


# ==================================================
# Artifacts written by a run
# ==================================================
class Artifact(Base):
    __tablename__ = "artifacts"

    id = Column(Integer, primary_key=True)

    run_id = Column(
        Integer,
        ForeignKey("runs.id", ondelete="CASCADE"),
        nullable=False
    )

    name = Column(
        String,
        nullable=False
    )  # model / report / roc / ...

    path = Column(
        Text,
        nullable=False
    )

    sha256 = Column(
        String(64),
        nullable=True
    )

    run = relationship("Run", back_populates="artifacts")


Index(
    "idx_artifact_run_name",
    Artifact.run_id,
    Artifact.name,
    unique=True
)
