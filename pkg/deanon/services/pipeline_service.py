import hashlib
import itertools
import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from functools import partial
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Literal, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from sqlalchemy.exc import SQLAlchemyError

from .. import crud, deps
from ..errors import ConfigError, DeanonError, StageError
from .dataset_service import file_digest, load_graph_cached
from .egonet_engine import Case, Scheme, extract_egonets, select_egos, write_releases
from .eval_engine import FP_LEVELS, EvalReport, evaluate, jc_error_breakdown, roc_and_auc, threshold_at_fp
from .feature_engine import TWO_HOP_WITHIN
from .forest_codec import write_forest
from .forest_engine import Forest, ForestParams, score_samples, train_forest
from .graph_engine import Graph, synth_powerlaw
from .pair_engine import (
    DEGREE_FROM_EGONET,
    DEGREE_FROM_ORIGINAL,
    Label,
    PairPools,
    PairSample,
    annotate_jaccard,
    generate_pair_samples,
    write_pools,
)
from .perturb_engine import (
    OverlapConfig,
    annotate_overlap_jaccard,
    generate_overlap_pairs,
    measure_edge_overlap,
    sample_overlapping_graphs,
    write_overlap,
)
from .report_service import (
    consolidate,
    report_frame,
    roc_frame,
    write_consolidated_tsv,
    write_jc_csv,
    write_report_tsv,
    write_roc_csv,
    write_scores_tsv,
    write_workbook,
)

logger = logging.getLogger(__name__)

CASE_ROWS = {Case.ONE: "1-hop", Case.TWO: "1,2-hop", Case.THREE: "2-hop"}

# config keys that never change outputs
NON_SEMANTIC_KEYS = {"workers"}


# ===============================
# EXPERIMENT CONFIG
# ===============================
class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: int = Field(..., ge=0, description="master seed; mandatory")
    task: Literal["egonet", "overlap"] = "egonet"

    # input graph: an edge-list path, or a synthetic power-law graph
    dataset: str | None = None
    synth_nodes: int | None = Field(default=None, gt=1)
    synth_attach: int = Field(default=4, ge=1)
    synth_triad: float = Field(default=0.0, ge=0, le=1)
    eval_dataset: str | None = None

    # egonet task
    scheme: int = Field(default=1, ge=1, le=2)
    case: Literal["1", "12", "2", "all"] = "all"
    count: int = Field(default=100, ge=2)
    eval_count: int | None = Field(default=None, ge=2)
    min_size: int = Field(default=400, ge=0)
    min_degree: int = Field(default=5, ge=0)
    degree_source: Literal["egonet", "original"] = DEGREE_FROM_EGONET
    non_identical_ratio: float = Field(default=1.0, gt=0)
    min_non_identical: int = Field(default=100, ge=0)
    test_fraction: float = Field(default=0.5, gt=0, lt=1)
    test_cap: int = Field(default=10_000, ge=1)
    jc_level: float | None = Field(default=0.01, gt=0, le=1)

    # overlap task
    alpha_v: float = Field(default=0.25, ge=0, le=1)
    alpha_e: float = Field(default=0.25, gt=0, le=1)
    seeds: int | None = Field(default=None, ge=1)
    non_identical: int = Field(default=5000, ge=1)
    two_hop_mode: Literal["within", "exact"] = TWO_HOP_WITHIN

    # features + forest
    bins: int = Field(default=70, ge=1)
    bin_size: int = Field(default=15, ge=1)
    trees: int = Field(default=400, ge=1)
    tau_step: float = Field(default=0.05, gt=0, le=1)
    feature_fraction: float = Field(default=0.05, gt=0, le=1)
    bag_per_class: int = Field(default=600, ge=1)
    min_node_fraction: float = Field(default=0.10, ge=0, lt=1)

    # evaluation + output
    fp_levels: tuple[float, ...] = FP_LEVELS
    interpolate: bool = False
    xlsx: bool = False
    workers: int = Field(default=1, ge=1)

    @field_validator("fp_levels", mode="before")
    @classmethod
    def _split_levels(cls, v):
        if isinstance(v, str):
            return tuple(float(x) for x in v.split(",") if x.strip())
        return v

    @field_validator("fp_levels")
    @classmethod
    def _levels_in_range(cls, v):
        if not v or any(not 0.0 <= x <= 1.0 for x in v):
            raise ValueError("fp levels must be a nonempty list within [0, 1]")
        return tuple(sorted(v))

    def forest_params(self, dual: bool = False) -> ForestParams:
        return ForestParams(
            n=self.bins,
            b=self.bin_size,
            dual=dual,
            trees=self.trees,
            tau_step=self.tau_step,
            feature_fraction=self.feature_fraction,
            bag_per_class=self.bag_per_class,
            min_node_fraction=self.min_node_fraction,
        )

    def semantic_dict(self) -> dict:
        return {k: v for k, v in self.model_dump(mode="json").items() if k not in NON_SEMANTIC_KEYS}


def build_config(values: dict) -> ExperimentConfig:
    try:
        cfg = ExperimentConfig.model_validate(values)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in e['loc']) or 'config'}: {e['msg']}" for e in exc.errors()
        )
        raise ConfigError(f"invalid config: {problems}") from None
    if cfg.dataset is None and cfg.synth_nodes is None:
        raise ConfigError("config needs either dataset or synth_nodes")
    if cfg.eval_dataset is not None and cfg.task != "egonet":
        raise ConfigError("eval_dataset is only supported for the egonet task")
    return cfg


def load_config_file(path: str | Path) -> dict[str, str]:
    """Flat key=value file; '#' starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        values[key.replace("-", "_")] = value
    return values


# ===============================
# RUN MANIFEST
# ===============================
class RunManifest(BaseModel):
    command: str
    config: dict
    seed: int
    inputs: dict[str, str] = Field(default_factory=dict)
    artifacts: dict[str, str] = Field(default_factory=dict)
    extras: dict = Field(default_factory=dict)
    started_at: str | None = None
    finished_at: str | None = None
    status: str = "running"
    digest: str = ""


def manifest_digest(command: str, config: dict, seed: int, inputs: dict[str, str]) -> str:
    config = {k: v for k, v in config.items() if k not in NON_SEMANTIC_KEYS}
    doc = {"command": command, "config": config, "seed": seed, "inputs": inputs}
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class RunContext:
    """
    A run directory named by its manifest digest. Artifacts are registered
    as they are written; manifest.json and the ledger row are written on exit.
    """

    def __init__(
        self,
        command: str,
        config: dict,
        seed: int,
        inputs: dict[str, str] | None = None,
        runs_root: str | Path | None = None,
        record: bool = True,
    ):
        inputs = dict(inputs or {})
        digest = manifest_digest(command, config, seed, inputs)
        self.manifest = RunManifest(
            command=command,
            config={k: v for k, v in config.items() if k not in NON_SEMANTIC_KEYS},
            seed=seed,
            inputs=inputs,
            digest=digest,
        )
        self.run_dir = Path(runs_root or deps.runs_dir()) / digest[:16]
        self.record = record
        self.auc: float | None = None
        self._run = None
        self._session = None

    @property
    def digest(self) -> str:
        return self.manifest.digest

    def path(self, name: str) -> Path:
        return self.run_dir / name

    def artifact(self, name: str, path: str | Path) -> Path:
        path = Path(path)
        self.manifest.artifacts[name] = str(path.relative_to(self.run_dir)) if path.is_relative_to(self.run_dir) else str(path)
        if self._run is not None:
            self._ledger(
                crud.add_artifact, self._session, self._run, name, str(path),
                file_digest(path) if path.is_file() else None,
            )
        logger.info("artifact %s -> %s", name, path)
        return path

    # -------------------------
    # LEDGER
    # -------------------------
    def _ledger(self, fn, *args, **kwargs):
        # ledger trouble is reported, never fatal
        try:
            return fn(*args, **kwargs)
        except SQLAlchemyError as exc:
            logger.warning("run ledger unavailable: %s", exc)
            if self._session is not None:
                self._session.rollback()
            return None

    def __enter__(self) -> "RunContext":
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.manifest.started_at = _now()
        if self.record:
            try:
                self._session = deps.session_factory()()
            except SQLAlchemyError as exc:
                logger.warning("run ledger unavailable: %s", exc)
            if self._session is not None:
                self._run = self._ledger(
                    crud.start_run, self._session,
                    digest=self.digest,
                    command=self.manifest.command,
                    seed=self.manifest.seed,
                    config=self.manifest.config,
                    run_dir=str(self.run_dir),
                )
        logger.info("run %s (%s) in %s", self.digest[:16], self.manifest.command, self.run_dir)
        return self

    def finish(self, status: str) -> None:
        self.manifest.status = status
        self.manifest.finished_at = _now()
        self.path("manifest.json").write_text(
            json.dumps(self.manifest.model_dump(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def __exit__(self, exc_type, exc, tb):
        status = self.manifest.status if self.manifest.status != "running" else "ok"
        if exc is not None:
            status = "failed"
            self.manifest.extras["error"] = str(exc)
        self.finish(status)
        if self._run is not None:
            self._ledger(crud.finish_run, self._session, self._run, status, auc=self.auc, error=str(exc) if exc else None)
        if self._session is not None:
            self._session.close()
        return False


@contextmanager
def stage(name: str):
    logger.info("stage %s: start", name)
    try:
        yield
    except StageError:
        raise
    except DeanonError as exc:
        logger.error("stage %s failed: %s", name, exc)
        raise StageError(name, exc) from exc
    except (OSError, ValueError) as exc:
        logger.error("stage %s failed: %s", name, exc)
        raise StageError(name, exc) from exc
    logger.info("stage %s: done", name)


# ===============================
# SHARED STEPS
# ===============================
def stage_seeds(master_seed: int, k: int = 8) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(master_seed).spawn(k)]


def load_input(cfg: ExperimentConfig, dataset: str | None) -> tuple[Graph, str]:
    if dataset is not None:
        return load_graph_cached(dataset)
    g = synth_powerlaw(cfg.synth_nodes, cfg.synth_attach, cfg.seed, cfg.synth_triad)
    label = f"synth:{cfg.synth_nodes}:{cfg.synth_attach}:{cfg.synth_triad}:{cfg.seed}"
    return g, hashlib.sha256(label.encode()).hexdigest()


def case_row(case: Case | None) -> str:
    return CASE_ROWS.get(case, "Complete")


def split_scored(samples: Sequence[PairSample], scores: Sequence[float]) -> tuple[dict[str, list[float]], list[float]]:
    identical: dict[str, list[float]] = {}
    non: list[float] = []
    for s, score in zip(samples, scores):
        if s.label is Label.IDENTICAL:
            identical.setdefault(case_row(s.case), []).append(float(score))
        else:
            non.append(float(score))
    ordered = {name: identical[name] for name in [*CASE_ROWS.values(), "Complete"] if name in identical}
    return ordered, non


def evaluate_scored(samples, scores, cfg: ExperimentConfig) -> EvalReport:
    identical, non = split_scored(samples, scores)
    return evaluate(identical, non, cfg.fp_levels, cfg.interpolate)


def write_evaluation(ctx: RunContext, report: EvalReport, samples, scores, cfg: ExperimentConfig) -> None:
    identical, non = split_scored(samples, scores)
    curve, _ = roc_and_auc([s for v in identical.values() for s in v], non)
    ctx.artifact("roc", write_roc_csv(curve, ctx.path("roc.csv")))
    ctx.artifact("report", write_report_tsv(report, ctx.path("report.tsv")))
    frames = {"report": report_frame(report), "roc": roc_frame(curve)}

    if report.jc_table is not None:
        ctx.artifact("jc", write_jc_csv(report.jc_table, ctx.path("jc.csv")))
        frames["jc"] = report_jc_frame(report)
    if cfg.xlsx:
        ctx.artifact("workbook", write_workbook(frames, ctx.path("report.xlsx")))


def report_jc_frame(report: EvalReport) -> pd.DataFrame:
    return pd.DataFrame(report.jc_table)


# ===============================
# PIPELINE
# ===============================
@dataclass
class PipelineResult:
    digest: str
    run_dir: Path
    manifest: RunManifest
    report: EvalReport
    forest: Forest = field(repr=False)


def run_pipeline(
    cfg: ExperimentConfig,
    command: str = "run",
    runs_root: str | Path | None = None,
    record: bool = True,
) -> PipelineResult:
    """ingest -> egonets|perturb -> pairs -> train -> score -> eval, in one run directory."""
    inputs = {}
    with stage("ingest"):
        g, inputs["dataset"] = load_input(cfg, cfg.dataset)
        g_eval = None
        if cfg.eval_dataset is not None:
            g_eval, inputs["eval_dataset"] = load_graph_cached(cfg.eval_dataset)

    with RunContext(command, cfg.semantic_dict(), cfg.seed, inputs, runs_root, record) as ctx:
        if cfg.task == "overlap":
            pools, annotate = _overlap_pairs(ctx, cfg, g)
        else:
            pools, annotate = _egonet_pairs(ctx, cfg, g, g_eval)

        with stage("train"):
            dual = cfg.task == "overlap"
            ident, non = pools.train.select(cfg.case if cfg.task == "egonet" else "all")
            forest = train_forest(ident, non, cfg.forest_params(dual), stage_seeds(cfg.seed)[3], cfg.workers)
            ctx.artifact("model", write_forest(forest, ctx.path("model.json")))

        with stage("score"):
            t_ident, t_non = pools.test.select(cfg.case if cfg.task == "egonet" else "all")
            test = t_ident + t_non
            scores = score_samples(forest, test)
            ctx.artifact("scores", write_scores_tsv(test, scores, ctx.path("scores.tsv")))

        with stage("eval"):
            report = evaluate_scored(test, scores, cfg)
            if cfg.jc_level is not None:
                annotated = annotate(test)
                threshold = threshold_at_fp([s for s, x in zip(scores, test) if x.label is Label.NON_IDENTICAL], cfg.jc_level)
                report.jc_table = jc_error_breakdown(
                    [s.jaccard for s in annotated], [int(s.label) for s in annotated], scores, threshold
                )
            write_evaluation(ctx, report, test, scores, cfg)
            ctx.auc = report.auc
            ctx.manifest.extras["auc"] = report.auc

    logger.info("run %s finished: AUC %.4f", ctx.digest[:16], report.auc)
    return PipelineResult(ctx.digest, ctx.run_dir, ctx.manifest, report, forest)


Annotator = Callable[[Sequence[PairSample]], list[PairSample]]


def _egonet_pairs(
    ctx: RunContext, cfg: ExperimentConfig, g: Graph, g_eval: Graph | None
) -> tuple[PairPools, Annotator]:
    seeds = stage_seeds(cfg.seed)
    scheme = Scheme(cfg.scheme)

    with stage("egonets"):
        egos = select_egos(g, cfg.count, cfg.min_size, seeds[0])
        egonets, truth = extract_egonets(g, egos, scheme, seeds[1])
        write_releases(egonets, truth, ctx.path("egonets"), ctx.path("truth.txt"))
        ctx.artifact("egonets", ctx.path("egonets"))
        ctx.artifact("truth", ctx.path("truth.txt"))

        if g_eval is not None:
            eval_egos = select_egos(g_eval, cfg.eval_count or cfg.count, cfg.min_size, seeds[5])
            eval_egonets, eval_truth = extract_egonets(g_eval, eval_egos, scheme, seeds[6])
            write_releases(eval_egonets, eval_truth, ctx.path("eval_egonets"), ctx.path("eval_truth.txt"))
            ctx.artifact("eval_egonets", ctx.path("eval_egonets"))
            ctx.artifact("eval_truth", ctx.path("eval_truth.txt"))

    with stage("pairs"):
        common = dict(
            min_degree=cfg.min_degree,
            n=cfg.bins,
            b=cfg.bin_size,
            non_identical_ratio=cfg.non_identical_ratio,
            min_non_identical=cfg.min_non_identical,
            test_cap=cfg.test_cap,
            degree_source=cfg.degree_source,
        )
        if g_eval is None:
            pools = generate_pair_samples(
                egonets, truth, seed=seeds[2], test_fraction=cfg.test_fraction,
                source_graph=g if cfg.degree_source == DEGREE_FROM_ORIGINAL else None, **common,
            )
            annotate = partial(annotate_jaccard, egonets=egonets, truth=truth)
        else:
            # cross-distribution: train on one graph, test on the other
            train = generate_pair_samples(
                egonets, truth, seed=seeds[2], test_fraction=0.0,
                source_graph=g if cfg.degree_source == DEGREE_FROM_ORIGINAL else None, **common,
            ).train
            test = generate_pair_samples(
                eval_egonets, eval_truth, seed=seeds[7], test_fraction=1.0,
                source_graph=g_eval if cfg.degree_source == DEGREE_FROM_ORIGINAL else None, **common,
            ).test
            pools = PairPools(train=train, test=test)
            annotate = partial(annotate_jaccard, egonets=eval_egonets, truth=eval_truth)
        write_pools(pools, ctx.path("pairs"))
        ctx.artifact("pairs", ctx.path("pairs"))

    return pools, annotate


def _overlap_pairs(ctx: RunContext, cfg: ExperimentConfig, g: Graph) -> tuple[PairPools, Annotator]:
    seeds = stage_seeds(cfg.seed)

    with stage("perturb"):
        sample = sample_overlapping_graphs(g, OverlapConfig(cfg.alpha_v, cfg.alpha_e, seeds[4]))
        for name, path in write_overlap(sample, ctx.path("overlap")).items():
            ctx.artifact(name, path)
        if sample.shared:
            try:
                ctx.manifest.extras["measured_edge_overlap"] = measure_edge_overlap(sample.g1, sample.g2, sample.shared)
            except ConfigError:
                logger.warning("no shared edges to measure overlap on")

    with stage("pairs"):
        pools = generate_overlap_pairs(
            sample.g1, sample.g2, sample.correspondence,
            seeds=cfg.seeds,
            non_identical=cfg.non_identical,
            test_cap=cfg.test_cap,
            test_fraction=cfg.test_fraction,
            min_degree=cfg.min_degree,
            n=cfg.bins,
            b=cfg.bin_size,
            two_hop_mode=cfg.two_hop_mode,
            seed=seeds[2],
        )
        write_pools(pools, ctx.path("pairs"))
        ctx.artifact("pairs", ctx.path("pairs"))
    return pools, partial(annotate_overlap_jaccard, g1=sample.g1, g2=sample.g2)


# ===============================
# SWEEPS
# ===============================
GRID_KEYS = {"binning", "seeds", "alpha_e", "scheme", "case", "seed"}


def parse_grid(spec: dict[str, str]) -> dict[str, list]:
    """
    {"binning": "21x50,35x30", "seeds": "10,50"} ->
    {"binning": [(21, 50), (35, 30)], "seeds": [10, 50]}
    """
    grid = {}
    for key, raw in spec.items():
        if key not in GRID_KEYS:
            raise ConfigError(f"cannot sweep over {key!r}; choose from {sorted(GRID_KEYS)}")
        items = [x.strip() for x in str(raw).split(",") if x.strip()]
        if not items:
            raise ConfigError(f"empty grid for {key!r}")
        try:
            if key == "binning":
                grid[key] = [tuple(int(p) for p in x.lower().split("x")) for x in items]
                if any(len(t) != 2 for t in grid[key]):
                    raise ValueError("expected NxB")
            elif key in ("seeds", "scheme", "seed"):
                grid[key] = [int(x) for x in items]
            elif key == "alpha_e":
                grid[key] = [float(x) for x in items]
            else:
                grid[key] = items
        except ValueError as exc:
            raise ConfigError(f"bad grid value for {key!r}: {exc}") from None
    return grid


def _cell_update(key: str, value) -> dict:
    if key == "binning":
        return {"bins": value[0], "bin_size": value[1]}
    return {key: value}


def _cell_label(key: str, value) -> dict:
    if key == "binning":
        return {"n": value[0], "b": value[1]}
    return {key: value}


@dataclass
class SweepResult:
    digest: str
    run_dir: Path
    cells: list[tuple[dict, EvalReport | None]]
    failures: list[tuple[dict, str]]

    @property
    def ok(self) -> bool:
        return not self.failures


def sweep(
    cfg: ExperimentConfig,
    grid: dict[str, list],
    runs_root: str | Path | None = None,
    record: bool = True,
) -> SweepResult:
    """One pipeline run per grid cell; a failing cell is recorded and the rest still run."""
    if not grid:
        raise ConfigError("sweep needs at least one grid axis")

    keys = sorted(grid)
    sweep_config = dict(cfg.semantic_dict(), grid={k: [list(v) if isinstance(v, tuple) else v for v in grid[k]] for k in keys})
    cells: list[tuple[dict, EvalReport | None]] = []
    failures: list[tuple[dict, str]] = []

    with RunContext("sweep", sweep_config, cfg.seed, {}, runs_root, record) as ctx:
        for combo in itertools.product(*(grid[k] for k in keys)):
            labels, update = {}, {}
            for k, v in zip(keys, combo):
                labels.update(_cell_label(k, v))
                update.update(_cell_update(k, v))
            try:
                cell_cfg = build_config({**cfg.model_dump(), **update})
                result = run_pipeline(cell_cfg, command="run", runs_root=runs_root, record=record)
                labels["run"] = result.digest[:16]
                cells.append((labels, result.report))
            except DeanonError as exc:
                logger.error("sweep cell %s failed: %s", labels, exc)
                failures.append((labels, str(exc)))
                cells.append((dict(labels, error=str(exc)), None))

        frame = consolidate(cells)
        ctx.artifact("sweep", write_consolidated_tsv(frame, ctx.path("sweep.tsv")))
        if cfg.xlsx:
            ctx.artifact("workbook", write_workbook({"sweep": frame}, ctx.path("sweep.xlsx")))
        ctx.manifest.status = "partial" if failures else "ok"
        ctx.manifest.extras["failed_cells"] = len(failures)

    return SweepResult(ctx.digest, ctx.run_dir, cells, failures)
