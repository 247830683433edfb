import pytest

from deanon.errors import ConfigError, EgoExhaustionError, GraphParseError
from deanon.services.egonet_engine import (
    AMBIGUOUS,
    Case,
    GroundTruth,
    Scheme,
    classify_pair_case,
    detect_ego,
    extract_egonet,
    extract_egonets,
    parse_release,
    read_releases,
    read_truth,
    select_egos,
    write_release,
    write_releases,
)
from deanon.services.graph_engine import Graph, khop_neighborhood
from deanon.services.signature_engine import node_signature


def _in_original(e, truth):
    """Edge set of a release mapped back to original ids."""
    return {tuple(sorted((truth[u], truth[v]))) for u, v in e.graph.edges()}


# ===============================
# SCHEMES ON THE TOY GRAPH
# ===============================
def test_scheme_one_keeps_the_full_two_hop_subgraph(toy_graph):
    e, truth = extract_egonet(toy_graph, 1, Scheme.ONE, seed=3)
    assert len(e.graph) == 8
    assert e.graph.edge_count == 13
    assert truth[e.ego_pseudonym] == 1
    assert sorted(truth.values()) == list(range(1, 9))


def test_scheme_two_drops_only_hop2_hop2_edges(toy_graph):
    e, truth = extract_egonet(toy_graph, 1, Scheme.TWO, seed=3)
    assert e.graph.edge_count == 10
    removed = set(toy_graph.edges()) - _in_original(e, truth)
    assert removed == {(5, 6), (5, 8), (6, 7)}


def test_hops_are_carried_through_pseudonyms(toy_graph):
    e, truth = extract_egonet(toy_graph, 1, Scheme.ONE, seed=9)
    expected = khop_neighborhood(toy_graph, 1, 2).distances
    assert {truth[p]: h for p, h in e.hop_of.items()} == expected


def test_relabeling_depends_on_seed(toy_graph):
    a, ta = extract_egonet(toy_graph, 1, Scheme.ONE, seed=1)
    b, tb = extract_egonet(toy_graph, 1, Scheme.ONE, seed=1)
    c, tc = extract_egonet(toy_graph, 1, Scheme.ONE, seed=2)
    assert ta == tb and a.graph == b.graph
    assert ta != tc
    assert sorted(ta) == list(range(8))


def test_scheme_invariants_on_random_egos(powerlaw_graph):
    egos = select_egos(powerlaw_graph, 50, 20, seed=4)
    for ego in egos:
        e1, t1 = extract_egonet(powerlaw_graph, ego, Scheme.ONE, seed=ego)
        e2, t2 = extract_egonet(powerlaw_graph, ego, Scheme.TWO, seed=ego)
        assert set(t1.values()) == set(t2.values())

        edges1, edges2 = _in_original(e1, t1), _in_original(e2, t2)
        assert edges2 <= edges1
        hops = khop_neighborhood(powerlaw_graph, ego, 2).distances
        assert all(hops[u] == 2 and hops[v] == 2 for u, v in edges1 - edges2)

        pseudo = {orig: p for p, orig in t1.items()}
        for p, h in e1.hop_of.items():
            if h <= 1:
                sig = node_signature(e1.graph, p)
                assert sig == node_signature(powerlaw_graph, t1[p])
        assert pseudo[ego] == e1.ego_pseudonym


# ===============================
# EGO SELECTION
# ===============================
def test_select_egos_is_seeded_and_filtered(powerlaw_graph):
    a = select_egos(powerlaw_graph, 10, 100, seed=5)
    assert a == select_egos(powerlaw_graph, 10, 100, seed=5)
    assert len(set(a)) == 10
    for u in a:
        assert len(khop_neighborhood(powerlaw_graph, u, 2).distances) > 100


def test_select_egos_exhaustion(toy_graph):
    # nodes 3 and 8 miss one node within two hops
    with pytest.raises(EgoExhaustionError) as exc:
        select_egos(toy_graph, 7, 7, seed=0)
    assert exc.value.achievable == 6


def test_extract_egonets_builds_ground_truth(powerlaw_graph):
    egos = select_egos(powerlaw_graph, 5, 50, seed=1)
    egonets, truth = extract_egonets(powerlaw_graph, egos, Scheme.TWO, seed=8)
    assert [e.egonet_id for e in egonets] == list(range(5))
    for e, ego in zip(egonets, egos):
        assert truth.original(e.egonet_id, e.ego_pseudonym) == ego
        assert e.scheme is Scheme.TWO


def test_ground_truth_rejects_non_bijective_maps():
    truth = GroundTruth()
    with pytest.raises(ConfigError):
        truth.add(0, {0: 5, 1: 5})
    truth.add(0, {0: 5, 1: 6})
    with pytest.raises(ConfigError):
        truth.add(0, {0: 7})


# ===============================
# ATTACKER VIEW
# ===============================
def test_detect_ego_on_toy_graph_is_ambiguous(toy_graph):
    # six nodes reach everything within two hops, none within one
    e, _ = extract_egonet(toy_graph, 1, Scheme.ONE, seed=0)
    assert detect_ego(e) is AMBIGUOUS


def test_detect_ego_resolves_a_star():
    star = Graph.from_edges([(0, k) for k in range(1, 6)])
    assert detect_ego(star) == 0


def test_detect_ego_unique_center():
    # path 0-1-2-3-4: only node 2 is within two hops of everyone
    path = Graph.from_edges([(0, 1), (1, 2), (2, 3), (3, 4)])
    assert detect_ego(path) == 2


def test_detect_ego_on_released_scheme_two_egonet(powerlaw_graph):
    egos = select_egos(powerlaw_graph, 5, 50, seed=2)
    egonets, _ = extract_egonets(powerlaw_graph, egos, Scheme.TWO, seed=3)
    for e in egonets:
        assert len(khop_neighborhood(e.graph, e.ego_pseudonym, 2).distances) == len(e.graph)
        found = detect_ego(e)
        if found is not AMBIGUOUS:
            assert len(khop_neighborhood(e.graph, found, 2).distances) == len(e.graph)


@pytest.mark.parametrize(
    "hops, case",
    [((0, 1), Case.ONE), ((1, 1), Case.ONE), ((1, 2), Case.TWO), ((2, 0), Case.TWO), ((2, 2), Case.THREE)],
)
def test_classify_pair_case(hops, case):
    assert classify_pair_case(*hops) is case


# ===============================
# RELEASE FILES
# ===============================
def test_release_roundtrip(tmp_path, toy_graph):
    e, _ = extract_egonet(toy_graph, 1, Scheme.TWO, seed=4, egonet_id=12)
    path = tmp_path / "e.txt"
    write_release(e, path)
    header = path.read_text().splitlines()[0]
    assert header == f"scheme=2 ego={e.ego_pseudonym} nodes=8 edges=10"

    back = parse_release(path.read_text(), egonet_id=12)
    assert back.graph == e.graph
    assert back.hop_of == e.hop_of
    assert back.scheme is Scheme.TWO


def test_release_header_counts_are_optional(toy_graph):
    e, _ = extract_egonet(toy_graph, 1, Scheme.TWO, seed=4)
    lines = [f"scheme=2 ego={e.ego_pseudonym}"]
    lines += [f"{p} {e.hop_of[p]}" for p in sorted(e.hop_of)]
    lines += [f"{u} {v}" for u, v in e.graph.edges()]

    back = parse_release("\n".join(lines) + "\n")
    assert back.graph == e.graph
    assert back.hop_of == e.hop_of
    assert back.ego_pseudonym == e.ego_pseudonym


def test_release_without_counts_rejects_unknown_endpoints():
    with pytest.raises(GraphParseError):
        parse_release("scheme=1 ego=0\n0 0\n1 1\n0 1\n0 7\n")


def test_release_directory_roundtrip(tmp_path, powerlaw_graph):
    egos = select_egos(powerlaw_graph, 4, 50, seed=6)
    egonets, truth = extract_egonets(powerlaw_graph, egos, Scheme.ONE, seed=6)
    (tmp_path / "secret").mkdir()
    write_releases(egonets, truth, tmp_path / "out", tmp_path / "secret" / "truth.txt")

    back = read_releases(tmp_path / "out")
    assert [e.egonet_id for e in back] == [0, 1, 2, 3]
    assert all(a.graph == b.graph for a, b in zip(egonets, back))
    assert read_truth(tmp_path / "secret" / "truth.txt").entries == truth.entries


@pytest.mark.parametrize(
    "text",
    [
        "",
        "scheme=3 ego=0 nodes=1 edges=0\n0 0\n",
        "scheme=1 ego=0 nodes=2 edges=1\n0 0\n1 1\n",
        "scheme=1 ego=0 nodes=2 edges=1\n0 0\n1 one\n0 1\n",
    ],
)
def test_bad_release_files(text):
    with pytest.raises(GraphParseError):
        parse_release(text)
