import logging
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable

import networkx as nx
import numpy as np

from ..errors import ConfigError, EgoExhaustionError, GraphParseError, MissingNodeError
from .graph_engine import Graph, induced_subgraph, khop_neighborhood

logger = logging.getLogger(__name__)


class Scheme(IntEnum):
    ONE = 1  # full 2-hop induced subgraph
    TWO = 2  # same, minus every edge between two hop-2 nodes


class Case(IntEnum):
    ONE = 1  # both nodes at hop <= 1
    TWO = 2  # exactly one node at hop 2
    THREE = 3  # both nodes at hop 2


AMBIGUOUS = None


# ===============================
# RELEASE TYPES
# ===============================
@dataclass(frozen=True)
class Egonet:
    egonet_id: int
    scheme: Scheme
    graph: Graph
    ego_pseudonym: int
    hop_of: dict[int, int]

    def __repr__(self):
        return (
            f"<Egonet {self.egonet_id} scheme={int(self.scheme)} "
            f"nodes={len(self.graph)} edges={self.graph.edge_count}>"
        )


@dataclass
class GroundTruth:
    """Secret pseudonym -> original id maps, one per egonet."""

    entries: dict[int, dict[int, int]] = field(default_factory=dict)

    def add(self, egonet_id: int, mapping: dict[int, int]) -> None:
        if egonet_id in self.entries:
            raise ConfigError(f"egonet {egonet_id} already has ground truth")
        if len(set(mapping.values())) != len(mapping):
            raise ConfigError(f"ground truth for egonet {egonet_id} is not bijective")
        self.entries[egonet_id] = dict(mapping)

    def original(self, egonet_id: int, pseudonym: int) -> int:
        return self.entries[egonet_id][pseudonym]

    def __contains__(self, egonet_id) -> bool:
        return egonet_id in self.entries


# ===============================
# EGO SELECTION
# ===============================
def two_hop_size(g: Graph, u: int) -> int:
    return len(khop_neighborhood(g, u, 2).distances)


def select_egos(g: Graph, count: int, min_egonet_nodes: int, seed: int) -> list[int]:
    """
    Seeded uniform sample, without replacement, of nodes whose 2-hop
    neighborhood holds more than min_egonet_nodes nodes.
    """
    if count < 1:
        raise ConfigError("count must be >= 1")
    if len(g) == 0:
        raise ConfigError("cannot select egos from an empty graph")

    order = np.random.default_rng(seed).permutation(sorted(g.node_ids))

    egos: list[int] = []
    for u in order.tolist():
        if two_hop_size(g, u) > min_egonet_nodes:
            egos.append(u)
            if len(egos) == count:
                logger.info("selected %d egos (min size %d)", count, min_egonet_nodes)
                return egos

    raise EgoExhaustionError(count, len(egos), min_egonet_nodes)


# ===============================
# EXTRACTION
# ===============================
def extract_egonet(
    g: Graph,
    ego: int,
    scheme: Scheme | int,
    seed: int,
    egonet_id: int = 0,
) -> tuple[Egonet, dict[int, int]]:
    """
    Cut the 2-hop egonet of `ego` under the given scheme and relabel it with
    a seeded random bijection onto 0..N-1.

    Returns the release and its secret pseudonym -> original map.
    """
    scheme = Scheme(int(scheme))
    if ego not in g:
        raise MissingNodeError(ego)

    hops = khop_neighborhood(g, ego, 2).distances
    sub = induced_subgraph(g, hops).nx.copy()

    if scheme is Scheme.TWO:
        sub.remove_edges_from([(u, v) for u, v in sub.edges() if hops[u] == 2 and hops[v] == 2])

    originals = sorted(hops)
    perm = np.random.default_rng(seed).permutation(len(originals)).tolist()
    pseudo_of = {orig: perm[i] for i, orig in enumerate(originals)}

    graph = Graph(nx.relabel_nodes(sub, pseudo_of))
    egonet = Egonet(
        egonet_id=egonet_id,
        scheme=scheme,
        graph=graph,
        ego_pseudonym=pseudo_of[ego],
        hop_of={pseudo_of[u]: d for u, d in hops.items()},
    )
    truth = {p: orig for orig, p in pseudo_of.items()}
    return egonet, truth


def extract_egonets(
    g: Graph,
    egos: Iterable[int],
    scheme: Scheme | int,
    seed: int,
) -> tuple[list[Egonet], GroundTruth]:
    """Extract one egonet per ego; per-egonet seeds derive from `seed`."""
    egos = list(egos)
    streams = np.random.SeedSequence(seed).spawn(len(egos))

    egonets = []
    truth = GroundTruth()
    for idx, (ego, stream) in enumerate(zip(egos, streams)):
        ego_seed = int(stream.generate_state(1)[0])
        e, mapping = extract_egonet(g, ego, scheme, ego_seed, egonet_id=idx)
        egonets.append(e)
        truth.add(idx, mapping)

    logger.info("extracted %d scheme-%d egonets", len(egonets), int(Scheme(int(scheme))))
    return egonets, truth


# ===============================
# ATTACKER-SIDE VIEW
# ===============================
def _eccentricity_at_most_two(g: Graph, u: int) -> int | None:
    total = len(g)
    # necessary condition before running the search
    if 1 + sum(d for _, d in g.nx.degree(g.nx[u])) < total:
        return None

    dist = nx.single_source_shortest_path_length(g.nx, u, cutoff=2)
    if len(dist) < total:
        return None
    return max(dist.values())


def detect_ego(e: Egonet | Graph) -> int | None:
    """
    The node from which every other node is at most 2 hops away.

    Among nodes with eccentricity <= 2, the one with the strictly smallest
    eccentricity wins; a tie (or no such node) is AMBIGUOUS.
    """
    g = e.graph if isinstance(e, Egonet) else e
    if len(g) == 0:
        raise ConfigError("cannot detect the ego of an empty egonet")

    best_ecc = None
    best: list[int] = []
    for u in sorted(g.node_ids):
        ecc = _eccentricity_at_most_two(g, u)
        if ecc is None:
            continue
        if best_ecc is None or ecc < best_ecc:
            best_ecc, best = ecc, [u]
        elif ecc == best_ecc:
            best.append(u)

    if len(best) == 1:
        return best[0]
    return AMBIGUOUS


def classify_pair_case(hop_a: int, hop_b: int) -> Case:
    far = (hop_a == 2) + (hop_b == 2)
    return (Case.ONE, Case.TWO, Case.THREE)[far]


# ===============================
# RELEASE FILES
# ===============================
def write_release(e: Egonet, path: str | Path) -> None:
    edges = e.graph.edges()
    lines = [
        f"scheme={int(e.scheme)} ego={e.ego_pseudonym} "
        f"nodes={len(e.graph)} edges={len(edges)}"
    ]
    lines += [f"{p} {e.hop_of[p]}" for p in sorted(e.hop_of)]
    lines += [f"{u} {v}" for u, v in edges]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def _release_pairs(chunk: list[str], offset: int) -> list[tuple[int, int]]:
    out = []
    for i, line in enumerate(chunk):
        tokens = line.split()
        if len(tokens) != 2 or not all(t.isascii() and t.isdigit() for t in tokens):
            raise GraphParseError(offset + i, f"malformed line {line!r}")
        out.append((int(tokens[0]), int(tokens[1])))
    return out


def _hop_block_length(body: list[str]) -> int:
    # hop lines name each node once; the first edge line repeats a node
    seen: set[str] = set()
    for i, line in enumerate(body):
        tokens = line.split()
        if len(tokens) != 2 or tokens[0] in seen or tokens[1] not in ("0", "1", "2"):
            return i
        seen.add(tokens[0])
    return len(body)


def parse_release(text: str, egonet_id: int = 0) -> Egonet:
    """
    Parse a released egonet. The header needs `scheme=` and `ego=`; the
    optional `nodes=` / `edges=` counts are checked when present and
    derived from the body otherwise.
    """
    lines = text.splitlines()
    if not lines:
        raise GraphParseError(1, "empty egonet file")

    try:
        header = dict(tok.split("=", 1) for tok in lines[0].split())
        scheme = Scheme(int(header["scheme"]))
        ego = int(header["ego"])
        n_nodes = int(header["nodes"]) if "nodes" in header else None
        n_edges = int(header["edges"]) if "edges" in header else None
    except (KeyError, ValueError) as exc:
        raise GraphParseError(1, f"bad egonet header: {exc}") from None

    body = [line for line in lines[1:] if line.strip()]
    if n_nodes is None:
        n_nodes = _hop_block_length(body)
    if n_edges is None:
        n_edges = len(body) - n_nodes
    if len(body) < n_nodes + n_edges:
        raise GraphParseError(len(lines), "egonet file is truncated")

    hop_of = dict(_release_pairs(body[:n_nodes], 2))
    edges = _release_pairs(body[n_nodes:n_nodes + n_edges], 2 + n_nodes)
    if ego not in hop_of:
        raise GraphParseError(1, f"ego {ego} has no hop line")
    stray = {u for edge in edges for u in edge} - hop_of.keys()
    if stray:
        raise GraphParseError(2 + n_nodes, f"edge endpoint {min(stray)} has no hop line")
    graph = Graph.from_edges(edges, nodes=hop_of)

    return Egonet(egonet_id=egonet_id, scheme=scheme, graph=graph, ego_pseudonym=ego, hop_of=hop_of)


def read_release(path: str | Path, egonet_id: int = 0) -> Egonet:
    return parse_release(Path(path).read_text(encoding="ascii"), egonet_id=egonet_id)


def release_filename(egonet_id: int) -> str:
    return f"egonet_{egonet_id:05d}.txt"


def write_releases(egonets: list[Egonet], truth: GroundTruth, out_dir: str | Path, truth_path: str | Path) -> list[Path]:
    """Write released files into out_dir and the secret truth file elsewhere."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    paths = []
    for e in egonets:
        path = out_dir / release_filename(e.egonet_id)
        write_release(e, path)
        paths.append(path)

    write_truth(truth, truth_path)
    return paths


def read_releases(in_dir: str | Path) -> list[Egonet]:
    egonets = []
    for path in sorted(Path(in_dir).glob("egonet_*.txt")):
        egonet_id = int(path.stem.split("_")[1])
        egonets.append(read_release(path, egonet_id=egonet_id))
    return egonets


def write_truth(truth: GroundTruth, path: str | Path) -> None:
    lines = [
        f"{eid} {p} {orig}"
        for eid in sorted(truth.entries)
        for p, orig in sorted(truth.entries[eid].items())
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="ascii")


def read_truth(path: str | Path) -> GroundTruth:
    maps: dict[int, dict[int, int]] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="ascii").splitlines(), start=1):
        if not line.strip():
            continue
        tokens = line.split()
        if len(tokens) != 3 or not all(t.isdigit() for t in tokens):
            raise GraphParseError(lineno, f"malformed truth line {line!r}")
        eid, p, orig = map(int, tokens)
        maps.setdefault(eid, {})[p] = orig

    truth = GroundTruth()
    for eid, mapping in maps.items():
        truth.add(eid, mapping)
    return truth
