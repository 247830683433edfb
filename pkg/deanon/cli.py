import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import pandas as pd

from . import deps
from .errors import ConfigError, DeanonError
from .services import pipeline_service as pipeline
from .services.dataset_service import fetch_dataset, file_digest, load_graph_cached
from .services.egonet_engine import extract_egonets, read_releases, read_truth, select_egos, write_releases
from .services.eval_engine import FP_LEVELS, evaluate, jc_error_breakdown, roc_and_auc, threshold_at_fp
from .services.feature_engine import DEFAULT_BIN_SIZE, DEFAULT_BINS
from .services.forest_codec import read_forest, write_forest
from .services.forest_engine import ForestParams, score_samples, train_forest
from .services.graph_engine import graph_stats
from .services.pair_engine import (
    CASE_FILTERS,
    DEGREE_FROM_EGONET,
    DEGREE_FROM_ORIGINAL,
    annotate_jaccard,
    generate_pair_samples,
    read_pairs,
    read_pools,
    write_pools,
)
from .services.perturb_engine import (
    OverlapConfig,
    annotate_overlap_jaccard,
    measure_edge_overlap,
    read_overlap,
    sample_overlapping_graphs,
    write_overlap,
)
from .services.report_service import (
    read_report_tsv,
    read_scores_tsv,
    write_consolidated_tsv,
    write_jc_csv,
    write_report_tsv,
    write_roc_csv,
    write_scores_tsv,
    write_workbook,
)
from .services.signature_engine import DEFAULT_MIN_SIGNATURE_LEN, adhoc_evaluate, adhoc_link_all, write_match_report

logger = logging.getLogger("deanon")


# ===============================
# HELPERS
# ===============================
def _path_digest(path: str | Path) -> str:
    """sha256 of a file, or of the sorted (name, sha256) list of a directory."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"input {path} does not exist")
    if path.is_file():
        return file_digest(path)
    h = hashlib.sha256()
    for child in sorted(p for p in path.rglob("*") if p.is_file()):
        h.update(f"{child.relative_to(path)}:{file_digest(child)}\n".encode())
    return h.hexdigest()


def _context(args, command: str, config: dict, inputs: dict[str, str]) -> pipeline.RunContext:
    digests = {role: _path_digest(p) for role, p in inputs.items() if p is not None}
    return pipeline.RunContext(command, config, args.seed, digests, runs_root=args.runs_dir, record=not args.no_ledger)


def _levels(raw: str | None) -> tuple[float, ...]:
    if not raw:
        return FP_LEVELS
    try:
        return tuple(sorted(float(x) for x in raw.split(",") if x.strip()))
    except ValueError:
        raise ConfigError(f"bad fp level list {raw!r}") from None


def _overlap_seed(overlap_dir: str | Path) -> int:
    found = sorted(Path(overlap_dir).glob("g1_seed*.txt"))
    if len(found) != 1:
        raise ConfigError(f"expected one g1_seed*.txt in {overlap_dir}, found {len(found)}")
    return int(found[0].stem.removeprefix("g1_seed"))


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=str))


# ===============================
# SUBCOMMANDS
# ===============================
def cmd_ingest(args) -> int:
    g, digest = load_graph_cached(args.graph, use_cache=not args.no_cache)
    _print({"path": args.graph, "sha256": digest, **graph_stats(g)})
    return 0


def cmd_egonets(args) -> int:
    config = {"scheme": args.scheme, "count": args.count, "min_size": args.min_size}
    with _context(args, "egonets", config, {"graph": args.graph}) as ctx:
        g, _ = load_graph_cached(args.graph)
        seeds = pipeline.stage_seeds(args.seed)
        egos = select_egos(g, args.count, args.min_size, seeds[0])
        egonets, truth = extract_egonets(g, egos, args.scheme, seeds[1])
        write_releases(egonets, truth, ctx.path("egonets"), ctx.path("truth.txt"))
        ctx.artifact("egonets", ctx.path("egonets"))
        ctx.artifact("truth", ctx.path("truth.txt"))
    print(ctx.run_dir)
    return 0


def cmd_pairs(args) -> int:
    config = {
        "min_degree": args.min_degree, "bins": args.bins, "bin_size": args.bin_size,
        "non_identical_ratio": args.non_identical_ratio, "min_non_identical": args.min_non_identical,
        "test_fraction": args.test_fraction, "test_cap": args.test_cap, "degree_source": args.degree_source,
    }
    inputs = {"egonets": args.egonets, "truth": args.truth, "source_graph": args.source_graph}
    with _context(args, "pairs", config, inputs) as ctx:
        source = load_graph_cached(args.source_graph)[0] if args.source_graph else None
        pools = generate_pair_samples(
            read_releases(args.egonets),
            read_truth(args.truth),
            min_degree=args.min_degree,
            seed=pipeline.stage_seeds(args.seed)[2],
            n=args.bins,
            b=args.bin_size,
            non_identical_ratio=args.non_identical_ratio,
            min_non_identical=args.min_non_identical,
            test_fraction=args.test_fraction,
            test_cap=args.test_cap,
            degree_source=args.degree_source,
            source_graph=source,
        )
        write_pools(pools, ctx.path("pairs"))
        ctx.artifact("pairs", ctx.path("pairs"))
        ctx.manifest.extras["train"] = pools.train.sizes()
        ctx.manifest.extras["test"] = pools.test.sizes()
    print(ctx.run_dir)
    return 0


def _forest_params(args, n: int, b: int, dual: bool) -> ForestParams:
    return ForestParams(
        n=n,
        b=b,
        dual=dual,
        trees=args.trees,
        tau_step=args.tau_step,
        feature_fraction=args.feature_fraction,
        bag_per_class=args.bag_per_class,
        min_node_fraction=args.min_node_fraction,
    )


def cmd_train(args) -> int:
    pools = read_pools(args.pairs)
    ident, non = pools.train.select(args.case)
    first = (ident or non or [None])[0]
    # binning comes from the pairs file unless overridden
    n = args.bins or (first.vec_a.n if first else DEFAULT_BINS)
    b = args.bin_size or (first.vec_a.b if first else DEFAULT_BIN_SIZE)
    dual = bool(first and first.vec_a.dual)
    params = _forest_params(args, n, b, dual)
    config = {"case": args.case, **asdict(params)}
    with _context(args, "train", config, {"pairs": args.pairs}) as ctx:
        forest = train_forest(ident, non, params, pipeline.stage_seeds(args.seed)[3], args.workers)
        ctx.artifact("model", write_forest(forest, ctx.path("model.json")))
    print(ctx.path("model.json"))
    return 0


def cmd_score(args) -> int:
    pairs = Path(args.pairs)
    if pairs.is_dir():
        pairs = pairs / "test.tsv"
    with _context(args, "score", {}, {"model": args.model, "pairs": pairs}) as ctx:
        forest = read_forest(args.model)
        samples = read_pairs(pairs)
        scores = score_samples(forest, samples)
        ctx.artifact("scores", write_scores_tsv(samples, scores, ctx.path("scores.tsv")))
    print(ctx.path("scores.tsv"))
    return 0


def cmd_eval(args) -> int:
    levels = _levels(args.fp_levels)
    config = {"fp_levels": list(levels), "interpolate": args.interpolate, "jc_level": args.jc_level}
    inputs = {"scores": args.scores, "egonets": args.egonets, "truth": args.truth, "overlap": args.overlap}
    with _context(args, "eval", config, inputs) as ctx:
        samples, scores = read_scores_tsv(args.scores)
        identical, non = pipeline.split_scored(samples, scores)
        report = evaluate(identical, non, levels, args.interpolate)

        if args.jc_level is not None:
            if args.overlap:
                g1, g2, _ = read_overlap(args.overlap, _overlap_seed(args.overlap))
                annotated = annotate_overlap_jaccard(samples, g1, g2)
            elif args.egonets and args.truth:
                annotated = annotate_jaccard(samples, read_releases(args.egonets), read_truth(args.truth))
            else:
                raise ConfigError("--jc-level needs --egonets and --truth, or --overlap")
            threshold = threshold_at_fp(non, args.jc_level)
            report.jc_table = jc_error_breakdown(
                [s.jaccard for s in annotated], [int(s.label) for s in annotated], scores, threshold
            )
            ctx.artifact("jc", write_jc_csv(report.jc_table, ctx.path("jc.csv")))

        curve, _ = roc_and_auc([s for v in identical.values() for s in v], non)
        ctx.artifact("roc", write_roc_csv(curve, ctx.path("roc.csv")))
        ctx.artifact("report", write_report_tsv(report, ctx.path("report.tsv")))
        ctx.auc = report.auc
    print(ctx.path("report.tsv").read_text(), end="")
    return 0


def cmd_adhoc(args) -> int:
    config = {"min_signature_len": args.min_signature_len, "non_identical": args.non_identical}
    with _context(args, "adhoc", config, {"egonets": args.egonets, "truth": args.truth}) as ctx:
        egonets = read_releases(args.egonets)
        matches = adhoc_link_all(egonets, args.min_signature_len)
        ctx.artifact("matches", write_match_report(matches, ctx.path("matches.tsv")))
        result = None
        if args.truth:
            result = adhoc_evaluate(
                egonets, read_truth(args.truth), args.min_signature_len, args.non_identical, args.seed
            )
            ctx.manifest.extras["adhoc"] = result.as_row()
    _print({"matches": len(matches), "run_dir": str(ctx.run_dir), **(result.as_row() if result else {})})
    return 0


def cmd_perturb(args) -> int:
    config = {"alpha_v": args.alpha_v, "alpha_e": args.alpha_e}
    with _context(args, "perturb", config, {"graph": args.graph}) as ctx:
        g, _ = load_graph_cached(args.graph)
        sample = sample_overlapping_graphs(g, OverlapConfig(args.alpha_v, args.alpha_e, args.seed))
        for name, path in write_overlap(sample, ctx.path("overlap")).items():
            ctx.artifact(name, path)
        if sample.shared:
            ctx.manifest.extras["measured_edge_overlap"] = measure_edge_overlap(sample.g1, sample.g2, sample.shared)
    print(ctx.path("overlap"))
    return 0


def _experiment_config(args) -> pipeline.ExperimentConfig:
    values = pipeline.load_config_file(args.config) if args.config else {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    if args.seed is not None:
        values["seed"] = args.seed
    if args.dataset is not None:
        values["dataset"] = args.dataset
    values["workers"] = args.workers
    if "seed" not in values:
        raise ConfigError("a master seed is required (--seed or seed= in the config file)")
    return pipeline.build_config(values)


def cmd_run(args) -> int:
    cfg = _experiment_config(args)
    result = pipeline.run_pipeline(cfg, runs_root=args.runs_dir, record=not args.no_ledger)
    print(result.run_dir)
    return 0


def cmd_sweep(args) -> int:
    cfg = _experiment_config(args)
    spec = {}
    if args.binning:
        spec["binning"] = args.binning
    if args.seed_counts:
        spec["seeds"] = args.seed_counts
    if args.alpha_e_grid:
        spec["alpha_e"] = args.alpha_e_grid
    for item in args.grid or []:
        key, _, value = item.partition("=")
        spec[key.strip()] = value
    result = pipeline.sweep(cfg, pipeline.parse_grid(spec), runs_root=args.runs_dir, record=not args.no_ledger)
    print(result.run_dir)
    for labels, message in result.failures:
        print(f"failed cell {labels}: {message}", file=sys.stderr)
    return 0 if result.ok else 1


def cmd_report(args) -> int:
    cells = []
    for run_dir in args.runs:
        path = Path(run_dir) / "report.tsv"
        if not path.exists():
            raise ConfigError(f"{run_dir} has no report.tsv")
        rows = read_report_tsv(path)
        overall = next((r for r in rows if r["row"] == "Complete"), rows[-1])
        cells.append(dict({"run": Path(run_dir).name}, **overall))

    frame = pd.DataFrame(cells)
    out = Path(args.out)
    write_consolidated_tsv(frame, out)
    if args.xlsx:
        write_workbook({"report": frame}, out.with_suffix(".xlsx"))
    print(out.read_text(), end="")
    return 0


def cmd_fetch(args) -> int:
    print(fetch_dataset(args.name, args.dest))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("deanon.main:app", host=args.host, port=args.port, log_level=deps.log_level().lower())
    return 0


# ===============================
# PARSER
# ===============================
def _add_run_options(p: argparse.ArgumentParser, seed_required: bool = True) -> None:
    p.add_argument("--seed", type=int, required=seed_required, help="master seed")
    p.add_argument("--runs-dir", default=None, help="root of run directories (default: DEANON_RUNS_DIR)")
    p.add_argument("--no-ledger", action="store_true", help="do not record the run in the ledger database")


def _add_forest_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--trees", type=int, default=400)
    p.add_argument("--tau-step", type=float, default=0.05)
    p.add_argument("--feature-fraction", type=float, default=0.05)
    p.add_argument("--bag-per-class", type=int, default=600)
    p.add_argument("--min-node-fraction", type=float, default=0.10)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deanon", description="Attack and evaluate egonet anonymization schemes.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse an edge list and print its stats")
    p.add_argument("graph")
    p.add_argument("--no-cache", action="store_true")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("egonets", help="extract anonymized egonets plus the secret truth file")
    p.add_argument("graph")
    p.add_argument("--scheme", type=int, choices=(1, 2), default=1)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--min-size", type=int, default=400)
    _add_run_options(p)
    p.set_defaults(func=cmd_egonets)

    p = sub.add_parser("pairs", help="labeled train/test node pairs from released egonets")
    p.add_argument("egonets")
    p.add_argument("--truth", required=True)
    p.add_argument("--min-degree", type=int, default=5)
    p.add_argument("--bins", type=int, default=DEFAULT_BINS)
    p.add_argument("--bin-size", type=int, default=DEFAULT_BIN_SIZE)
    p.add_argument("--non-identical-ratio", type=float, default=1.0)
    p.add_argument("--min-non-identical", type=int, default=100)
    p.add_argument("--test-fraction", type=float, default=0.5)
    p.add_argument("--test-cap", type=int, default=10_000)
    p.add_argument("--degree-source", choices=(DEGREE_FROM_EGONET, DEGREE_FROM_ORIGINAL), default=DEGREE_FROM_EGONET)
    p.add_argument("--source-graph", default=None, help="original graph, for --degree-source original")
    _add_run_options(p)
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("train", help="train a forest on a pairs directory")
    p.add_argument("pairs")
    p.add_argument("--bins", type=int, default=None, help="default: the pairs file's bin count")
    p.add_argument("--bin-size", type=int, default=None, help="default: the pairs file's bin width")
    p.add_argument("--case", choices=sorted(CASE_FILTERS), default="all")
    p.add_argument("--workers", type=int, default=deps.default_workers())
    _add_forest_options(p)
    _add_run_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score a pair file with a model")
    p.add_argument("model")
    p.add_argument("pairs", help="pair TSV, or a pairs directory (uses test.tsv)")
    _add_run_options(p, seed_required=False)
    p.set_defaults(func=cmd_score, seed=0)

    p = sub.add_parser("eval", help="ROC, AUC and TP@FP tables for a scores file")
    p.add_argument("scores")
    p.add_argument("--fp-levels", default=None, help="comma-separated FP rates")
    p.add_argument("--interpolate", action="store_true")
    p.add_argument("--jc-level", type=float, default=None, help="FP rate for the neighborhood-overlap breakdown")
    p.add_argument("--egonets", default=None)
    p.add_argument("--truth", default=None)
    p.add_argument("--overlap", default=None, help="overlap directory written by perturb")
    _add_run_options(p, seed_required=False)
    p.set_defaults(func=cmd_eval, seed=0)

    p = sub.add_parser("adhoc", help="exact-signature matching across scheme-1 egonets")
    p.add_argument("egonets")
    p.add_argument("--truth", default=None, help="evaluate recall/accuracy against the truth file")
    p.add_argument("--min-signature-len", type=int, default=DEFAULT_MIN_SIGNATURE_LEN)
    p.add_argument("--non-identical", type=int, default=1000)
    _add_run_options(p)
    p.set_defaults(func=cmd_adhoc)

    p = sub.add_parser("perturb", help="two overlapping edge-perturbed copies of a graph")
    p.add_argument("graph")
    p.add_argument("--alpha-v", type=float, required=True)
    p.add_argument("--alpha-e", type=float, required=True)
    _add_run_options(p)
    p.set_defaults(func=cmd_perturb)

    for name, func, help_text in (
        ("run", cmd_run, "full pipeline from a key=value config file"),
        ("sweep", cmd_sweep, "one pipeline run per grid cell, consolidated"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None)
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--dataset", default=None)
        p.add_argument("--workers", type=int, default=deps.default_workers())
        _add_run_options(p, seed_required=False)
        if name == "sweep":
            p.add_argument("--binning", default=None, help="e.g. 21x50,35x30,70x15,105x10")
            p.add_argument("--seed-counts", default=None, help="e.g. 10,50,250,1250")
            p.add_argument("--alpha-e-grid", default=None, help="e.g. 0.25,0.5,0.75,1.0")
            p.add_argument("--grid", action="append", metavar="KEY=V1,V2", help="any other grid axis")
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="consolidate report.tsv files of several runs")
    p.add_argument("runs", nargs="+")
    p.add_argument("--out", default="report.tsv")
    p.add_argument("--xlsx", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("fetch", help="download a SNAP dataset into the cache")
    p.add_argument("name")
    p.add_argument("--dest", default=None)
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("serve", help="serve run results over HTTP")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else deps.log_level(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except DeanonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
