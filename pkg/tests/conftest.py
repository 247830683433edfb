import pytest

from deanon.services.graph_engine import Graph, synth_powerlaw

# ego 1; hop-1 = {2, 3, 4}; hop-2 = {5, 6, 7, 8}
TOY_EDGES = [
    (1, 2), (1, 3), (1, 4), (2, 4), (2, 5), (2, 6), (3, 6),
    (3, 7), (4, 7), (4, 8), (5, 6), (5, 8), (6, 7),
]


@pytest.fixture
def toy_graph() -> Graph:
    return Graph.from_edges(TOY_EDGES)


@pytest.fixture(scope="session")
def powerlaw_graph() -> Graph:
    return synth_powerlaw(2000, 4, seed=11, triad_prob=0.7)


@pytest.fixture(autouse=True)
def isolated_env(tmp_path, monkeypatch):
    monkeypatch.setenv("DEANON_CACHE_DIR", str(tmp_path / "cache"))
    monkeypatch.setenv("DEANON_RUNS_DIR", str(tmp_path / "runs"))
    monkeypatch.setenv("DEANON_DATABASE_URL", f"sqlite:///{tmp_path / 'ledger.db'}")
    monkeypatch.setenv("DEANON_WORKERS", "1")
    return tmp_path
