import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from ..errors import ConfigError, GraphParseError
from .eval_engine import jaccard
from .feature_engine import DEFAULT_BIN_SIZE, DEFAULT_BINS, TWO_HOP_WITHIN, FeatureVector, dual_hop_vector
from .graph_engine import Graph, khop_neighborhood, read_graph, write_edge_list
from .pair_engine import Label, PairPool, PairPools, PairSample

logger = logging.getLogger(__name__)

# graph ids used in PairSample.source for the two copies
G1_ID = 1
G2_ID = 2


# ===============================
# OVERLAP MATH
# ===============================
def beta_from_edge_overlap(alpha_e: float) -> float:
    """Per-copy deletion fraction giving an expected edge overlap of alpha_e."""
    if not 0.0 < alpha_e <= 1.0:
        raise ConfigError(f"alpha_e must lie in (0, 1] (got {alpha_e})")
    return (1.0 - alpha_e) / (1.0 + alpha_e)


def edge_overlap_from_beta(beta: float) -> float:
    if not 0.0 <= beta < 1.0:
        raise ConfigError(f"beta must lie in [0, 1) (got {beta})")
    return (1.0 - beta) / (1.0 + beta)


def partition_sizes(node_count: int, alpha_v: float) -> tuple[int, int, int]:
    """(|V_A|, |V_B|, |V_C|): V_B rounds half up, V_A takes the odd node left over."""
    if node_count < 4:
        raise ConfigError(f"overlap sampling needs at least 4 nodes (got {node_count})")
    if not 0.0 <= alpha_v <= 1.0:
        raise ConfigError(f"alpha_v must lie in [0, 1] (got {alpha_v})")

    vb = int(math.floor(alpha_v * node_count + 0.5))
    rest = node_count - vb
    va, vc = rest - rest // 2, rest // 2

    if alpha_v > 0 and vb == 0:
        raise ConfigError(f"alpha_v={alpha_v} leaves no shared nodes among {node_count}")
    if alpha_v < 1 and vc == 0:
        raise ConfigError(f"alpha_v={alpha_v} leaves a copy with no private nodes among {node_count}")
    return va, vb, vc


@dataclass(frozen=True)
class OverlapConfig:
    alpha_v: float
    alpha_e: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.alpha_v <= 1.0:
            raise ConfigError(f"alpha_v must lie in [0, 1] (got {self.alpha_v})")
        beta_from_edge_overlap(self.alpha_e)

    @property
    def beta(self) -> float:
        return beta_from_edge_overlap(self.alpha_e)


@dataclass
class OverlapSample:
    g1: Graph
    g2: Graph
    correspondence: dict[int, int]
    partition: tuple[frozenset, frozenset, frozenset]
    config: OverlapConfig

    @property
    def shared(self) -> frozenset:
        return self.partition[1]


# ===============================
# SAMPLING
# ===============================
def sample_overlapping_graphs(g: Graph, cfg: OverlapConfig) -> OverlapSample:
    """
    Split V into V_A, V_B, V_C; G1 lives on V_A+V_B, G2 on V_B+V_C. Each copy
    drops exactly floor(beta*|E|) edges chosen independently of the other.
    """
    va, vb, vc = partition_sizes(len(g), cfg.alpha_v)
    part_rng, del1_rng, del2_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(3)
    )

    order = part_rng.permutation(sorted(g.node_ids)).tolist()
    v_b = frozenset(order[:vb])
    v_a = frozenset(order[vb:vb + va])
    v_c = frozenset(order[vb + va:])

    edges = g.edges()
    n_delete = int(math.floor(cfg.beta * len(edges) + 1e-9))

    def _copy(rng: np.random.Generator, keep_nodes: frozenset) -> Graph:
        dropped = set(rng.choice(len(edges), size=n_delete, replace=False).tolist()) if n_delete else set()
        kept = [
            (u, v) for k, (u, v) in enumerate(edges)
            if k not in dropped and u in keep_nodes and v in keep_nodes
        ]
        return Graph.from_edges(kept, nodes=keep_nodes)

    g1 = _copy(del1_rng, v_a | v_b)
    g2 = _copy(del2_rng, v_b | v_c)

    logger.info(
        "overlap sample: |V_A|=%d |V_B|=%d |V_C|=%d, %d of %d edges dropped per copy",
        va, vb, vc, n_delete, len(edges),
    )
    return OverlapSample(
        g1=g1,
        g2=g2,
        correspondence={v: v for v in sorted(v_b)},
        partition=(v_a, v_b, v_c),
        config=cfg,
    )


def measure_edge_overlap(g1: Graph, g2: Graph, nodes: Iterable[int]) -> float:
    """|E1 & E2| / |E1 | E2| over edges with both endpoints in `nodes`."""
    keep = set(nodes)
    e1 = {e for e in g1.edges() if e[0] in keep and e[1] in keep}
    e2 = {e for e in g2.edges() if e[0] in keep and e[1] in keep}
    union = e1 | e2
    if not union:
        raise ConfigError("no edges inside the node set")
    return len(e1 & e2) / len(union)


# ===============================
# TRADITIONAL-TASK PAIRS
# ===============================
def generate_overlap_pairs(
    g1: Graph,
    g2: Graph,
    correspondence: dict[int, int],
    seeds: int | None = None,
    non_identical: int = 5000,
    test_cap: int = 10_000,
    test_fraction: float = 0.5,
    min_degree: int = 5,
    n: int = DEFAULT_BINS,
    b: int = DEFAULT_BIN_SIZE,
    two_hop_mode: str = TWO_HOP_WITHIN,
    seed: int = 0,
) -> PairPools:
    """
    Dual-vector pair pools for matching G1 against G2.

    Nodes are split into train/test by original id. Training takes `seeds`
    identical pairs (all when None) and `non_identical` cross pairs from the
    train side; the test side is capped at test_cap pairs per class.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError("test_fraction must lie in (0, 1)")
    if seeds is not None and seeds < 1:
        raise ConfigError("seeds must be >= 1")

    split_rng, seed_rng, non_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)
    )

    originals = sorted(g1.node_ids | g2.node_ids)
    order = split_rng.permutation(len(originals)).tolist()
    n_test = int(round(test_fraction * len(originals)))
    test_side = {originals[i] for i in order[:n_test]}

    vectors: dict[tuple[int, int], FeatureVector] = {}

    def vec(gid: int, u: int) -> FeatureVector:
        key = (gid, u)
        if key not in vectors:
            g = g1 if gid == G1_ID else g2
            vectors[key] = dual_hop_vector(g, u, n, b, two_hop_mode)
        return vectors[key]

    def make(u: int, w: int, label: Label) -> PairSample:
        return PairSample(
            vec_a=vec(G1_ID, u),
            vec_b=vec(G2_ID, w),
            label=label,
            case=None,
            source=((G1_ID, u), (G2_ID, w)),
            originals=(u, w),
        )

    left = [u for u in sorted(g1.node_ids) if g1.degree(u) > min_degree]
    right = [w for w in sorted(g2.node_ids) if g2.degree(w) > min_degree]
    right_set = set(right)

    pools = {}
    for split in ("train", "test"):
        on_side = (lambda x: x in test_side) if split == "test" else (lambda x: x not in test_side)
        a_side = [u for u in left if on_side(u)]
        b_side = [w for w in right if on_side(w)]

        ident_nodes = [u for u in a_side if u in correspondence and correspondence[u] in right_set]
        cap = seeds if split == "train" else test_cap
        if cap is not None and len(ident_nodes) > cap:
            pick = np.sort(seed_rng.choice(len(ident_nodes), size=cap, replace=False))
            ident_nodes = [ident_nodes[i] for i in pick.tolist()]
        identical = [make(u, correspondence[u], Label.IDENTICAL) for u in ident_nodes]

        target = non_identical if split == "train" else test_cap
        non = _sample_cross_pairs(non_rng, a_side, b_side, correspondence, target, make)

        pools[split] = PairPool(identical={None: identical}, non_identical=non)
        logger.info("overlap %s pairs: %s", split, pools[split].sizes())

    return PairPools(train=pools["train"], test=pools["test"])


def _sample_cross_pairs(rng, a_side, b_side, correspondence, target, make) -> list[PairSample]:
    if not a_side or not b_side or target <= 0:
        return []
    seen = set()
    out = []
    attempts = 0
    max_attempts = 50 * target + 1000
    while len(out) < target and attempts < max_attempts:
        attempts += 1
        u = a_side[int(rng.integers(len(a_side)))]
        w = b_side[int(rng.integers(len(b_side)))]
        if correspondence.get(u) == w or (u, w) in seen:
            continue
        seen.add((u, w))
        out.append(make(u, w, Label.NON_IDENTICAL))
    if len(out) < target:
        logger.warning("sampled %d of %d requested non-identical cross pairs", len(out), target)
    return out


# ===============================
# NEIGHBORHOOD OVERLAP
# ===============================
def annotate_overlap_jaccard(samples: Iterable[PairSample], g1: Graph, g2: Graph) -> list[PairSample]:
    """
    JC of the G1 node's and the G2 node's 2-hop node sets, per pair. Both
    copies keep original ids, so the sets compare directly.
    """
    graphs = {G1_ID: g1, G2_ID: g2}
    cache: dict[tuple[int, int], set[int]] = {}

    def two_hop(gid: int, u: int) -> set[int]:
        key = (gid, u)
        if key not in cache:
            dist = khop_neighborhood(graphs[gid], u, 2).distances
            cache[key] = {v for v, d in dist.items() if d > 0}
        return cache[key]

    return [
        replace(s, jaccard=jaccard(two_hop(*s.source[0]), two_hop(*s.source[1])))
        for s in samples
    ]


# ===============================
# OUTPUT FILES
# ===============================
def overlap_filenames(seed: int) -> dict[str, str]:
    return {
        "g1": f"g1_seed{seed}.txt",
        "g2": f"g2_seed{seed}.txt",
        "correspondence": f"correspondence_seed{seed}.txt",
    }


def write_overlap(sample: OverlapSample, out_dir: str | Path) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = overlap_filenames(sample.config.seed)
    paths = {key: out_dir / name for key, name in names.items()}

    paths["g1"].write_bytes(write_edge_list(sample.g1))
    paths["g2"].write_bytes(write_edge_list(sample.g2))
    lines = "".join(f"{a} {c}\n" for a, c in sorted(sample.correspondence.items()))
    paths["correspondence"].write_text(lines, encoding="ascii")
    return paths


def read_correspondence(path: str | Path) -> dict[int, int]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="ascii").splitlines(), start=1):
        if not line.strip():
            continue
        tokens = line.split()
        if len(tokens) != 2 or not all(t.isdigit() for t in tokens):
            raise GraphParseError(lineno, f"malformed correspondence line {line!r}")
        out[int(tokens[0])] = int(tokens[1])
    return out


def read_overlap(in_dir: str | Path, seed: int) -> tuple[Graph, Graph, dict[int, int]]:
    in_dir = Path(in_dir)
    names = overlap_filenames(seed)
    return (
        read_graph(in_dir / names["g1"]),
        read_graph(in_dir / names["g2"]),
        read_correspondence(in_dir / names["correspondence"]),
    )
