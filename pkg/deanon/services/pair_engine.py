import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import IntEnum
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from ..errors import ConfigError
from .egonet_engine import Case, Egonet, GroundTruth, classify_pair_case
from .eval_engine import jaccard
from .feature_engine import DEFAULT_BIN_SIZE, DEFAULT_BINS, FeatureVector, degree_histogram_vector
from .graph_engine import Graph, khop_neighborhood

logger = logging.getLogger(__name__)


class Label(IntEnum):
    NON_IDENTICAL = 0
    IDENTICAL = 1


# "1-hop / 1,2-hop / 2-hop / Complete" table rows
CASE_FILTERS = {
    "1": (Case.ONE,),
    "12": (Case.TWO,),
    "2": (Case.THREE,),
    "all": (Case.ONE, Case.TWO, Case.THREE),
}
CASE_ROW_NAMES = {"1": "1-hop", "12": "1,2-hop", "2": "2-hop", "all": "Complete"}

DEGREE_FROM_EGONET = "egonet"
DEGREE_FROM_ORIGINAL = "original"


@dataclass(frozen=True)
class PairSample:
    vec_a: FeatureVector
    vec_b: FeatureVector
    label: Label
    case: Case | None
    source: tuple[tuple[int, int], tuple[int, int]]
    originals: tuple[int, int]
    jaccard: float | None = None


@dataclass
class PairPool:
    identical: dict[Case | None, list[PairSample]] = field(default_factory=dict)
    non_identical: list[PairSample] = field(default_factory=list)

    def select(self, case_filter: str = "all") -> tuple[list[PairSample], list[PairSample]]:
        if case_filter not in CASE_FILTERS:
            raise ConfigError(f"unknown case filter {case_filter!r}; use one of {sorted(CASE_FILTERS)}")
        if case_filter == "all":
            wanted = [s for samples in self.identical.values() for s in samples]
        else:
            wanted = [s for c in CASE_FILTERS[case_filter] for s in self.identical.get(c, [])]
        return wanted, list(self.non_identical)

    def sizes(self) -> dict:
        out = {
            ("identical" if c is None else f"case{int(c)}"): len(v)
            for c, v in sorted(self.identical.items(), key=lambda kv: -1 if kv[0] is None else int(kv[0]))
        }
        out["non_identical"] = len(self.non_identical)
        return out

    def all_samples(self) -> list[PairSample]:
        ident, non = self.select("all")
        return ident + non


@dataclass
class PairPools:
    train: PairPool
    test: PairPool


def _subsample(rng: np.random.Generator, items: list, cap: int | None) -> list:
    if cap is None or len(items) <= cap:
        return items
    keep = np.sort(rng.choice(len(items), size=cap, replace=False))
    return [items[i] for i in keep.tolist()]


# ===============================
# EGONET PAIR GENERATION
# ===============================
def generate_pair_samples(
    egonets: Sequence[Egonet],
    truth: GroundTruth,
    min_degree: int = 5,
    seed: int = 0,
    n: int = DEFAULT_BINS,
    b: int = DEFAULT_BIN_SIZE,
    non_identical_ratio: float = 1.0,
    min_non_identical: int = 100,
    test_fraction: float = 0.5,
    test_cap: int | None = 10_000,
    degree_source: str = DEGREE_FROM_EGONET,
    source_graph: Graph | None = None,
) -> PairPools:
    """
    Labeled cross-egonet node pairs, split into train/test by original id.

    Identical pairs are every pair of pseudonyms in distinct egonets that
    map to the same original, bucketed by case. Non-identical pairs are a
    seeded uniform sample of cross-egonet pairs with distinct originals,
    kept as one pool. Both members must pass the degree filter.
    """
    if len(egonets) < 2:
        raise ConfigError("pair generation needs at least 2 egonets")
    if not 0.0 <= test_fraction <= 1.0:
        raise ConfigError("test_fraction must lie in [0, 1]")
    if degree_source not in (DEGREE_FROM_EGONET, DEGREE_FROM_ORIGINAL):
        raise ConfigError(f"unknown degree_source {degree_source!r}")
    if degree_source == DEGREE_FROM_ORIGINAL and source_graph is None:
        raise ConfigError("degree_source=original needs the source graph")

    egonets = sorted(egonets, key=lambda e: e.egonet_id)
    split_rng, ident_rng, non_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)
    )

    # -------------------------
    # ELIGIBLE NODES
    # -------------------------
    eligible: list[tuple[int, int, int]] = []  # (egonet position, pseudonym, original)
    for pos, e in enumerate(egonets):
        mapping = truth.entries[e.egonet_id]
        for p in sorted(e.graph.node_ids):
            orig = mapping[p]
            deg = e.graph.degree(p) if degree_source == DEGREE_FROM_EGONET else source_graph.degree(orig)
            if deg > min_degree:
                eligible.append((pos, p, orig))

    originals = sorted({orig for _, _, orig in eligible})
    order = split_rng.permutation(len(originals)).tolist()
    n_test = int(round(test_fraction * len(originals)))
    test_originals = {originals[i] for i in order[:n_test]}

    vectors: dict[tuple[int, int], FeatureVector] = {}

    def vec(pos: int, p: int) -> FeatureVector:
        key = (pos, p)
        if key not in vectors:
            vectors[key] = degree_histogram_vector(egonets[pos].graph, p, n, b)
        return vectors[key]

    def make(a, c, label: Label) -> PairSample:
        pos_a, p_a, orig_a = a
        pos_b, p_b, orig_b = c
        ea, eb = egonets[pos_a], egonets[pos_b]
        return PairSample(
            vec_a=vec(pos_a, p_a),
            vec_b=vec(pos_b, p_b),
            label=label,
            case=classify_pair_case(ea.hop_of[p_a], eb.hop_of[p_b]),
            source=((ea.egonet_id, p_a), (eb.egonet_id, p_b)),
            originals=(orig_a, orig_b),
        )

    # -------------------------
    # IDENTICAL PAIRS
    # -------------------------
    occurrences: dict[int, list] = defaultdict(list)
    for item in eligible:
        occurrences[item[2]].append(item)

    identical = {"train": defaultdict(list), "test": defaultdict(list)}
    for orig in originals:
        split = "test" if orig in test_originals else "train"
        for a, c in combinations(occurrences[orig], 2):
            s = make(a, c, Label.IDENTICAL)
            identical[split][s.case].append(s)

    for case in list(identical["test"]):
        identical["test"][case] = _subsample(ident_rng, identical["test"][case], test_cap)

    # -------------------------
    # NON-IDENTICAL PAIRS
    # -------------------------
    pools = {}
    for split in ("train", "test"):
        members = [item for item in eligible if (item[2] in test_originals) == (split == "test")]
        n_ident = sum(len(v) for v in identical[split].values())
        target = max(int(round(non_identical_ratio * n_ident)), min_non_identical)
        if split == "test" and test_cap is not None:
            target = min(target, test_cap)

        non = _sample_non_identical(non_rng, members, target, make)
        pools[split] = PairPool(
            identical={c: identical[split][c] for c in sorted(identical[split])},
            non_identical=non,
        )

        if n_ident == 0:
            logger.warning("no identical pairs in the %s split (egonets do not overlap)", split)
        logger.info("%s pairs: %s", split, pools[split].sizes())

    return PairPools(train=pools["train"], test=pools["test"])


def _sample_non_identical(rng: np.random.Generator, members: list, target: int, make) -> list[PairSample]:
    if target <= 0 or len(members) < 2:
        return []

    seen = set()
    out = []
    attempts = 0
    max_attempts = 50 * target + 1000
    while len(out) < target and attempts < max_attempts:
        attempts += 1
        i, j = rng.integers(len(members), size=2).tolist()
        a, c = members[i], members[j]
        if a[0] == c[0] or a[2] == c[2]:
            continue
        if a[0] > c[0]:
            a, c = c, a
        key = (a[0], a[1], c[0], c[1])
        if key in seen:
            continue
        seen.add(key)
        out.append(make(a, c, Label.NON_IDENTICAL))

    if len(out) < target:
        logger.warning("sampled %d of %d requested non-identical pairs", len(out), target)
    return out


# ===============================
# NEIGHBORHOOD OVERLAP
# ===============================
def annotate_jaccard(
    samples: Iterable[PairSample],
    egonets: Sequence[Egonet],
    truth: GroundTruth,
) -> list[PairSample]:
    """JC of the two nodes' 2-hop node sets, in original ids, per pair."""
    by_id = {e.egonet_id: e for e in egonets}
    cache: dict[tuple[int, int], set[int]] = {}

    def two_hop(eid: int, p: int) -> set[int]:
        key = (eid, p)
        if key not in cache:
            mapping = truth.entries[eid]
            dist = khop_neighborhood(by_id[eid].graph, p, 2).distances
            cache[key] = {mapping[v] for v, d in dist.items() if d > 0}
        return cache[key]

    return [
        replace(s, jaccard=jaccard(two_hop(*s.source[0]), two_hop(*s.source[1])))
        for s in samples
    ]


# ===============================
# PAIR FILES
# ===============================
PAIR_COLUMNS = [
    "label", "case", "egonet_a", "pseudo_a", "egonet_b", "pseudo_b",
    "orig_a", "orig_b", "jaccard", "n", "b", "dual", "vec_a", "vec_b",
]


def pairs_frame(samples: Iterable[PairSample]) -> pd.DataFrame:
    rows = []
    for s in samples:
        (ea, pa), (eb, pb) = s.source
        rows.append({
            "label": int(s.label),
            "case": "" if s.case is None else int(s.case),
            "egonet_a": ea,
            "pseudo_a": pa,
            "egonet_b": eb,
            "pseudo_b": pb,
            "orig_a": s.originals[0],
            "orig_b": s.originals[1],
            "jaccard": "" if s.jaccard is None else repr(float(s.jaccard)),
            "n": s.vec_a.n,
            "b": s.vec_a.b,
            "dual": int(s.vec_a.dual),
            "vec_a": ",".join(map(str, s.vec_a.bins)),
            "vec_b": ",".join(map(str, s.vec_b.bins)),
        })
    return pd.DataFrame(rows, columns=PAIR_COLUMNS)


def write_pairs(samples: Iterable[PairSample], path: str | Path) -> None:
    pairs_frame(samples).to_csv(path, sep="\t", index=False, lineterminator="\n")


def read_pair_frame(path: str | Path) -> pd.DataFrame:
    df = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False)
    missing = set(PAIR_COLUMNS) - set(df.columns)
    if missing:
        raise ConfigError(f"{path}: pair file lacks columns {sorted(missing)}")
    return df


def read_pairs(path: str | Path) -> list[PairSample]:
    return samples_from_frame(read_pair_frame(path))


def samples_from_frame(df: pd.DataFrame) -> list[PairSample]:
    out = []
    for row in df.itertuples(index=False):
        n, b, dual = int(row.n), int(row.b), bool(int(row.dual))
        out.append(PairSample(
            vec_a=FeatureVector(tuple(int(x) for x in row.vec_a.split(",")), n, b, dual),
            vec_b=FeatureVector(tuple(int(x) for x in row.vec_b.split(",")), n, b, dual),
            label=Label(int(row.label)),
            case=None if row.case == "" else Case(int(row.case)),
            source=((int(row.egonet_a), int(row.pseudo_a)), (int(row.egonet_b), int(row.pseudo_b))),
            originals=(int(row.orig_a), int(row.orig_b)),
            jaccard=None if row.jaccard == "" else float(row.jaccard),
        ))
    return out


def pool_from_samples(samples: Iterable[PairSample]) -> PairPool:
    pool = PairPool()
    grouped: dict[Case | None, list[PairSample]] = defaultdict(list)
    for s in samples:
        if s.label is Label.IDENTICAL:
            grouped[s.case].append(s)
        else:
            pool.non_identical.append(s)
    pool.identical = dict(grouped)
    return pool


def write_pools(pools: PairPools, out_dir: str | Path) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for split in ("train", "test"):
        path = out_dir / f"{split}.tsv"
        write_pairs(getattr(pools, split).all_samples(), path)
        paths[split] = path
    return paths


def read_pools(in_dir: str | Path) -> PairPools:
    in_dir = Path(in_dir)
    return PairPools(
        train=pool_from_samples(read_pairs(in_dir / "train.tsv")),
        test=pool_from_samples(read_pairs(in_dir / "test.tsv")),
    )
