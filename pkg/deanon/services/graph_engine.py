import gzip
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Mapping

import networkx as nx
import numpy as np
import pandas as pd

from ..errors import ConfigError, GraphParseError, MissingNodeError

logger = logging.getLogger(__name__)

MAX_NODE_ID = np.iinfo(np.int64).max


# ===============================
# GRAPH
# ===============================
class Graph:
    """
    Undirected simple graph over non-negative integer node ids.

    Wraps a private `networkx.Graph` copy; treat it as read-only. Self-loops
    are dropped on construction.
    """

    __slots__ = ("nx", "_adj")

    def __init__(self, data: nx.Graph | Mapping[int, Iterable[int]] | None = None):
        if isinstance(data, nx.Graph):
            g = nx.Graph(data)
        else:
            g = nx.Graph()
            for u, nbrs in (data or {}).items():
                g.add_node(int(u))
                g.add_edges_from((int(u), int(v)) for v in nbrs)
        g.remove_edges_from(list(nx.selfloop_edges(g)))

        self.nx = g
        self._adj = None

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[int, int]], nodes: Iterable[int] = ()) -> "Graph":
        g = nx.Graph()
        g.add_nodes_from(int(u) for u in nodes)
        g.add_edges_from((int(u), int(v)) for u, v in edges)
        return cls(g)

    # -------------------------
    # READ ACCESS
    # -------------------------
    @property
    def node_ids(self) -> frozenset[int]:
        return frozenset(self.nx)

    @property
    def adjacency(self) -> Mapping[int, frozenset[int]]:
        """Node -> frozenset of neighbors, built once on first use."""
        if self._adj is None:
            self._adj = {u: frozenset(nbrs) for u, nbrs in self.nx.adjacency()}
        return self._adj

    @property
    def edge_count(self) -> int:
        return self.nx.number_of_edges()

    def neighbors(self, u: int) -> frozenset[int]:
        try:
            return self.adjacency[u]
        except KeyError:
            raise MissingNodeError(u) from None

    def degree(self, u: int) -> int:
        if u not in self.nx:
            raise MissingNodeError(u)
        return self.nx.degree(u)

    def edges(self) -> list[tuple[int, int]]:
        """Edges as (u, v) with u < v, sorted."""
        return sorted((u, v) if u < v else (v, u) for u, v in self.nx.edges())

    def __contains__(self, u) -> bool:
        return u in self.nx

    def __len__(self) -> int:
        return self.nx.number_of_nodes()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return self.adjacency == other.adjacency

    def __hash__(self):
        return hash((self.node_ids, frozenset(self.edges())))

    def __repr__(self):
        return f"<Graph nodes={len(self)} edges={self.edge_count}>"


@dataclass(frozen=True)
class HopMap:
    center: int
    distances: dict[int, int] = field(default_factory=dict)

    def at(self, hop: int) -> set[int]:
        return {u for u, d in self.distances.items() if d == hop}


# ===============================
# EDGE-LIST INGESTION
# ===============================
def _bad_token(tok: str) -> bool:
    return not (tok.isascii() and tok.isdigit()) or int(tok) > MAX_NODE_ID


def _scan_for_bad_line(data: bytes) -> None:
    for lineno, raw in enumerate(data.splitlines(), start=1):
        line = raw.decode("utf-8", errors="replace").strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) != 2:
            raise GraphParseError(lineno, f"expected 2 tokens, got {len(tokens)}")
        for tok in tokens:
            if _bad_token(tok):
                raise GraphParseError(lineno, f"malformed node id {tok!r}")


def parse_edge_list(stream: bytes | str | BinaryIO) -> Graph:
    """
    Parse a SNAP whitespace edge list into a simple undirected Graph.

    Directed duplicates collapse to one edge, self-loops are dropped and
    '#' lines are comments. Empty input gives an empty graph. Node ids are
    ASCII digit runs that fit in int64.
    """
    if isinstance(stream, str):
        data = stream.encode("utf-8")
    elif isinstance(stream, (bytes, bytearray)):
        data = bytes(stream)
    else:
        data = stream.read()

    if not data.strip():
        return Graph()

    try:
        df = pd.read_csv(
            io.BytesIO(data),
            sep=r"\s+",
            comment="#",
            header=None,
            dtype=str,
            skip_blank_lines=True,
        )
    except pd.errors.EmptyDataError:
        return Graph()
    except pd.errors.ParserError:
        _scan_for_bad_line(data)
        raise GraphParseError(0, "unreadable edge list")

    if df.empty:
        return Graph()
    if df.shape[1] != 2 or df.isna().any().any():
        _scan_for_bad_line(data)
        raise GraphParseError(0, "unreadable edge list")

    ascii_ids = df[0].str.fullmatch(r"[0-9]+").all() and df[1].str.fullmatch(r"[0-9]+").all()
    try:
        if not ascii_ids:
            raise ValueError("non-digit node id")
        pairs = df.astype(np.int64).to_numpy()
    except (OverflowError, ValueError):
        _scan_for_bad_line(data)
        raise GraphParseError(0, "unreadable edge list") from None

    nodes = np.unique(pairs)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]

    g = Graph.from_edges(map(tuple, pairs.tolist()), nodes=nodes.tolist())
    logger.debug("parsed edge list: %s", g)
    return g


def write_edge_list(g: Graph) -> bytes:
    """Canonical writer: 'u v' with u < v, sorted, newline-terminated."""
    return "".join(f"{u} {v}\n" for u, v in g.edges()).encode("ascii")


def read_graph(path: str | Path) -> Graph:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return parse_edge_list(fh)


# ===============================
# TRAVERSAL
# ===============================
def khop_neighborhood(g: Graph, center: int, k: int) -> HopMap:
    if center not in g:
        raise MissingNodeError(center)
    if k < 0:
        raise ConfigError("k must be >= 0")

    distances = nx.single_source_shortest_path_length(g.nx, center, cutoff=k)
    return HopMap(center=center, distances=dict(distances))


def induced_subgraph(g: Graph, nodes: Iterable[int]) -> Graph:
    keep = set(nodes)
    missing = keep - g.node_ids
    if missing:
        raise MissingNodeError(min(missing))
    return Graph(g.nx.subgraph(keep))


# ===============================
# SYNTHETIC POWER-LAW GRAPHS
# ===============================
def synth_powerlaw(node_count: int, attach_degree: int, seed: int, triad_prob: float = 0.0) -> Graph:
    """
    Holme-Kim preferential-attachment graph, deterministic for a fixed seed.

    Every node after the first attach_degree adds exactly m edges, each
    after the first closing a triangle with probability triad_prob, so
    edge_count is always m*(N-m).
    """
    m = attach_degree
    if not (node_count > attach_degree >= 1):
        raise ConfigError(
            f"synth_powerlaw needs node_count > attach_degree >= 1 "
            f"(got {node_count}, {attach_degree})"
        )
    if not 0.0 <= triad_prob <= 1.0:
        raise ConfigError("triad_prob must lie in [0, 1]")

    g = Graph(nx.powerlaw_cluster_graph(node_count, m, triad_prob, seed=int(seed)))
    logger.debug("synthesized power-law graph %s (m=%d, triad=%.2f)", g, m, triad_prob)
    return g


def graph_stats(g: Graph) -> dict:
    degrees = np.array([d for _, d in g.nx.degree()], dtype=np.int64)
    return {
        "nodes": len(g),
        "edges": g.edge_count,
        "max_degree": int(degrees.max()) if len(degrees) else 0,
        "mean_degree": float(round(degrees.mean(), 3)) if len(degrees) else 0.0,
        "isolated": int((degrees == 0).sum()),
    }
