import pytest

from deanon.errors import ConfigError, FeatureMismatchError, GraphParseError, MissingNodeError
from deanon.services.egonet_engine import Scheme, extract_egonet, select_egos
from deanon.services.feature_engine import (
    ALTERNATIVE_BINNINGS,
    TWO_HOP_EXACT,
    FeatureVector,
    degree_histogram_vector,
    dual_hop_vector,
    histogram_from_degrees,
    read_feature_dump,
    stack_vectors,
    write_feature_dump,
)
from deanon.services.graph_engine import Graph, khop_neighborhood


# ===============================
# BINNING
# ===============================
def test_reference_degree_multiset():
    degrees = [1, 1, 3, 3, 5, 6, 7, 13, 16, 20, 21, 30, 65, 69, 72, 1030, 1100]
    bins = histogram_from_degrees(degrees, 70, 15)
    assert len(bins) == 70
    assert bins[:5] == (8, 4, 0, 0, 3)
    assert sum(bins) == len(degrees)
    # 1030 sits in (1020, 1035]; 1100 overflows into the last bin. Reading
    # "overflow" as "anything past bin 67" would instead give
    # (8, 4, 0, 0, 3, 0, ..., 0, 2); the boundary rule wins here.
    assert bins[68] == 1 and bins[69] == 1
    assert sum(bins[5:68]) == 0


def test_boundary_degree_lands_in_lower_bin():
    assert histogram_from_degrees([15], 70, 15)[0] == 1
    assert histogram_from_degrees([16], 70, 15)[1] == 1


def test_single_neighbor_of_degree_one():
    bins = histogram_from_degrees([1], 70, 15)
    assert bins[0] == 1 and sum(bins) == 1


@pytest.mark.parametrize("n, b", ALTERNATIVE_BINNINGS)
def test_alternative_binnings_overflow_into_last_bin(n, b):
    bins = histogram_from_degrees([n * b, n * b + 1, 10 * n * b], n, b)
    assert bins[n - 1] == 3


def test_binning_rejects_bad_input():
    with pytest.raises(ConfigError):
        histogram_from_degrees([1], 0, 15)
    with pytest.raises(ConfigError):
        histogram_from_degrees([0], 70, 15)


# ===============================
# NODE VECTORS
# ===============================
def test_vector_mass_equals_degree(powerlaw_graph):
    for node in (0, 1, 17, 500, 1999):
        v = degree_histogram_vector(powerlaw_graph, node)
        assert sum(v.bins) == powerlaw_graph.degree(node)
        assert v.length == 70


def test_missing_node():
    g = Graph.from_edges([(0, 1)])
    with pytest.raises(MissingNodeError):
        degree_histogram_vector(g, 5)
    with pytest.raises(MissingNodeError):
        dual_hop_vector(g, 5)


def test_relabeling_leaves_vectors_unchanged(toy_graph):
    mapping = {u: 100 - u for u in toy_graph.node_ids}
    relabeled = Graph.from_edges([(mapping[u], mapping[v]) for u, v in toy_graph.edges()])
    for u in toy_graph.node_ids:
        assert degree_histogram_vector(toy_graph, u, 10, 1) == degree_histogram_vector(relabeled, mapping[u], 10, 1)


def test_ego_vector_survives_scheme_one_extraction(powerlaw_graph):
    # every neighbor of a 1-hop node is kept, so degrees seen from the ego are exact
    for ego in select_egos(powerlaw_graph, 3, 50, seed=7):
        e, _ = extract_egonet(powerlaw_graph, ego, Scheme.ONE, seed=1)
        assert degree_histogram_vector(e.graph, e.ego_pseudonym) == degree_histogram_vector(powerlaw_graph, ego)


# ===============================
# DUAL VECTORS
# ===============================
def test_dual_vector_on_star():
    star = Graph.from_edges([(0, k) for k in range(1, 6)])
    v = dual_hop_vector(star, 0, 10, 1)
    assert v.dual and v.length == 20
    assert v.bins[0] == 5 and v.bins[10] == 5
    assert v.bins[:10] == v.bins[10:]


def test_dual_vector_on_path_end():
    path = Graph.from_edges([(0, 1), (1, 2)])
    v = dual_hop_vector(path, 0, 5, 1)
    assert v.bins[:5] == (0, 1, 0, 0, 0)
    assert v.bins[5:] == (1, 1, 0, 0, 0)


def test_dual_vector_against_enumerated_neighborhood(toy_graph):
    v = dual_hop_vector(toy_graph, 1, 10, 1)
    hops = khop_neighborhood(toy_graph, 1, 2).distances
    second = [0] * 10
    for u, d in hops.items():
        if d >= 1:
            second[toy_graph.degree(u) - 1] += 1
    assert v.bins[10:] == tuple(second)
    assert sum(v.bins[10:]) == 7


def test_exact_two_hop_mode_excludes_direct_neighbors(toy_graph):
    within = dual_hop_vector(toy_graph, 1, 10, 1)
    exact = dual_hop_vector(toy_graph, 1, 10, 1, two_hop_mode=TWO_HOP_EXACT)
    assert within.bins[:10] == exact.bins[:10]
    assert sum(exact.bins[10:]) == 4
    with pytest.raises(ConfigError):
        dual_hop_vector(toy_graph, 1, two_hop_mode="nearby")


# ===============================
# FEATURE DUMP
# ===============================
def test_feature_dump_roundtrip(tmp_path, toy_graph):
    rows = [(0, u, degree_histogram_vector(toy_graph, u, 6, 1)) for u in sorted(toy_graph.node_ids)]
    path = tmp_path / "features.txt"
    write_feature_dump(rows, path)
    assert path.read_text().splitlines()[0] == "0 1 0,0,1,2,0,0"

    back = read_feature_dump(path, 6, 1)
    assert back == {(0, u): v for _, u, v in rows}
    assert stack_vectors(back.values()).shape == (8, 6)


def test_feature_dump_rejects_malformed_lines(tmp_path):
    path = tmp_path / "features.txt"
    path.write_text("0 1 1,2,3\n0 2 x,1,1\n")
    with pytest.raises(GraphParseError) as exc:
        read_feature_dump(path, 3, 1)
    assert exc.value.line_number == 2

    path.write_text("0 1 1,2\n")
    with pytest.raises(FeatureMismatchError):
        read_feature_dump(path, 3, 1)


def test_vector_length_is_checked():
    with pytest.raises(FeatureMismatchError):
        FeatureVector(bins=(1, 2, 3), n=2, b=1, dual=True)
