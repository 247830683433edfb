import json

import pytest

from deanon import crud, deps
from deanon.errors import ConfigError, EgoExhaustionError, StageError
from deanon.services.graph_engine import synth_powerlaw, write_edge_list
from deanon.services.pipeline_service import (
    ExperimentConfig,
    build_config,
    load_config_file,
    manifest_digest,
    parse_grid,
    run_pipeline,
    stage,
    stage_seeds,
    sweep,
)
from tests.helpers import SMALL_RUN


def small_config(**overrides) -> ExperimentConfig:
    return build_config({**SMALL_RUN, **overrides})


# ===============================
# CONFIG
# ===============================
def test_config_needs_an_input_graph():
    with pytest.raises(ConfigError):
        build_config({"seed": 1})


def test_config_rejects_unknown_keys_and_bad_values():
    with pytest.raises(ConfigError):
        small_config(colour="blue")
    with pytest.raises(ConfigError):
        small_config(scheme=3)
    with pytest.raises(ConfigError):
        small_config(fp_levels="0.1,2")
    with pytest.raises(ConfigError):
        small_config(task="overlap", eval_dataset="other.txt")


def test_config_parses_strings():
    cfg = build_config({"seed": "4", "synth_nodes": "100", "fp_levels": "0.1, 0.01", "interpolate": "true"})
    assert cfg.seed == 4
    assert cfg.fp_levels == (0.01, 0.1)
    assert cfg.interpolate is True
    assert cfg.forest_params(dual=True).vector_length == 140


def test_config_file(tmp_path):
    path = tmp_path / "exp.conf"
    path.write_text("# egonet study\nseed = 7\nsynth-nodes=500  # small\n\ntrees=10\n")
    assert load_config_file(path) == {"seed": "7", "synth_nodes": "500", "trees": "10"}
    path.write_text("seed 7\n")
    with pytest.raises(ConfigError):
        load_config_file(path)


def test_workers_do_not_change_the_digest():
    a = small_config(workers=1)
    b = small_config(workers=4)
    assert a.semantic_dict() == b.semantic_dict()
    assert manifest_digest("run", a.model_dump(mode="json"), 3, {}) == manifest_digest(
        "run", b.model_dump(mode="json"), 3, {}
    )
    assert manifest_digest("run", a.semantic_dict(), 3, {}) != manifest_digest("run", a.semantic_dict(), 4, {})


def test_stage_seeds_are_stable_and_distinct():
    assert stage_seeds(5) == stage_seeds(5)
    assert len(set(stage_seeds(5))) == 8
    assert stage_seeds(5) != stage_seeds(6)


def test_stage_wraps_errors():
    with pytest.raises(StageError) as exc:
        with stage("egonets"):
            raise EgoExhaustionError(10, 3, 400)
    assert exc.value.stage == "egonets"
    assert isinstance(exc.value.cause, EgoExhaustionError)


# ===============================
# PIPELINE RUNS
# ===============================
@pytest.fixture(scope="module")
def egonet_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    return run_pipeline(small_config(), runs_root=root, record=False)


def test_egonet_run_writes_its_artifacts(egonet_run):
    run_dir = egonet_run.run_dir
    assert run_dir.name == egonet_run.digest[:16]
    for name in ("manifest.json", "model.json", "scores.tsv", "report.tsv", "roc.csv", "jc.csv", "truth.txt"):
        assert (run_dir / name).is_file(), name
    assert (run_dir / "pairs" / "train.tsv").is_file()
    assert any((run_dir / "egonets").iterdir())

    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["digest"] == egonet_run.digest
    assert "workers" not in manifest["config"]
    assert manifest["artifacts"]["model"] == "model.json"


def test_egonet_run_reports_cases(egonet_run):
    report = egonet_run.report
    assert 0.0 <= report.auc <= 1.0
    assert set(report.cases) <= {"1-hop", "1,2-hop", "2-hop"}
    assert report.jc_table is not None and len(report.jc_table) == 5


def test_runs_are_reproducible_across_worker_counts(tmp_path, egonet_run):
    again = run_pipeline(small_config(workers=2), runs_root=tmp_path, record=False)
    assert again.digest == egonet_run.digest
    for name in ("model.json", "scores.tsv", "report.tsv"):
        assert (again.run_dir / name).read_bytes() == (egonet_run.run_dir / name).read_bytes()


def test_run_is_recorded_in_the_ledger(tmp_path):
    result = run_pipeline(small_config(trees=2), runs_root=tmp_path)
    with deps.session_factory()() as session:
        run = crud.get_run(session, result.digest[:16])
        assert run is not None
        assert run.status == "ok"
        assert run.auc == pytest.approx(result.report.auc)
        names = {a.name for a in run.artifacts}
    assert {"model", "report", "scores", "pairs"} <= names


def test_failed_run_is_marked(tmp_path):
    with pytest.raises(StageError):
        run_pipeline(small_config(count=500, min_size=590), runs_root=tmp_path)
    with deps.session_factory()() as session:
        (run,) = crud.list_runs(session)
        assert run.status == "failed"
        assert "stage 'egonets'" in run.error


def test_overlap_run(tmp_path):
    cfg = small_config(task="overlap", alpha_v=0.5, alpha_e=0.75, seeds=20, non_identical=100, test_cap=200)
    result = run_pipeline(cfg, runs_root=tmp_path, record=False)
    assert result.forest.params.dual
    assert result.report.n_non_identical == 200
    assert list(result.report.cases) == ["Complete"]
    manifest = json.loads((result.run_dir / "manifest.json").read_text())
    assert manifest["extras"]["measured_edge_overlap"] > 0.5
    assert (result.run_dir / "overlap" / f"g1_seed{stage_seeds(3)[4]}.txt").is_file()
    assert result.report.jc_table is not None and len(result.report.jc_table) == 5
    assert sum(row["identical"] for row in result.report.jc_table) == result.report.n_identical
    assert (result.run_dir / "jc.csv").is_file()


# ===============================
# SWEEPS
# ===============================
def test_parse_grid():
    grid = parse_grid({"binning": "21x50, 70x15", "seeds": "10,50", "alpha_e": "0.25"})
    assert grid == {"binning": [(21, 50), (70, 15)], "seeds": [10, 50], "alpha_e": [0.25]}
    with pytest.raises(ConfigError):
        parse_grid({"trees": "1,2"})
    with pytest.raises(ConfigError):
        parse_grid({"binning": "70"})


def test_sweep_keeps_going_past_a_failing_cell(tmp_path):
    result = sweep(small_config(trees=2), {"scheme": [1, 3]}, runs_root=tmp_path, record=False)
    assert not result.ok
    assert len(result.cells) == 2
    assert result.cells[0][1] is not None and result.cells[1][1] is None

    rows = (result.run_dir / "sweep.tsv").read_text().splitlines()
    assert len(rows) == 3
    manifest = json.loads((result.run_dir / "manifest.json").read_text())
    assert manifest["status"] == "partial"
    assert manifest["extras"]["failed_cells"] == 1


# ===============================
# HELD-OUT ACCURACY
# ===============================
# 60 egonets of 400+ nodes on a 3000-node graph share most of their hubs
DESK_RUN = dict(synth_nodes=3000, count=60, min_size=400, trees=50, bins=21, bin_size=5)


def test_case_one_pairs_are_separable(tmp_path):
    result = run_pipeline(small_config(**DESK_RUN, case="1"), runs_root=tmp_path, record=False)
    assert result.report.n_identical >= 50
    assert result.report.auc >= 0.90


def test_scheme_two_mixed_cases(tmp_path):
    result = run_pipeline(small_config(**DESK_RUN, scheme=2), runs_root=tmp_path, record=False)
    assert result.report.n_identical >= 50
    assert result.report.auc >= 0.80


def test_forest_transfers_to_another_graph(tmp_path):
    other = tmp_path / "other.txt"
    other.write_bytes(write_edge_list(synth_powerlaw(3000, 4, seed=29, triad_prob=0.3)))
    cfg = small_config(**DESK_RUN, case="1", eval_dataset=str(other))
    result = run_pipeline(cfg, runs_root=tmp_path / "runs", record=False)
    assert (result.run_dir / "eval_egonets").is_dir()
    assert result.report.n_identical > 0
    assert result.report.auc >= 0.70
