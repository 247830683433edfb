import logging
from collections import defaultdict
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from ..errors import ConfigError, UnsupportedSchemeError
from .egonet_engine import Egonet, GroundTruth, Scheme
from .graph_engine import Graph

logger = logging.getLogger(__name__)

DEFAULT_MIN_SIGNATURE_LEN = 7

Signature = tuple[int, ...]


# ===============================
# SIGNATURES
# ===============================
def node_signature(view: Graph | Egonet, node: int) -> Signature:
    """Sorted degrees of node and its neighbors, counted inside that 1-hop network."""
    g = view.graph if isinstance(view, Egonet) else view
    closed = g.neighbors(node) | {node}
    return tuple(sorted(d for _, d in g.nx.subgraph(closed).degree()))


def _require_scheme_one(e: Egonet) -> None:
    if e.scheme is not Scheme.ONE:
        raise UnsupportedSchemeError(
            f"egonet {e.egonet_id} is scheme {int(e.scheme)}; signature matching needs scheme 1"
        )


def inner_signatures(e: Egonet, min_signature_len: int = DEFAULT_MIN_SIGNATURE_LEN) -> dict[int, Signature]:
    """Signatures of the ego and its 1-hop nodes that are long enough to match on."""
    _require_scheme_one(e)
    out = {}
    for p in sorted(e.hop_of):
        if e.hop_of[p] > 1:
            continue
        sig = node_signature(e.graph, p)
        if len(sig) >= min_signature_len:
            out[p] = sig
    return out


# ===============================
# MATCHING
# ===============================
def adhoc_link(e1: Egonet, e2: Egonet, min_signature_len: int = DEFAULT_MIN_SIGNATURE_LEN) -> list[tuple[int, int]]:
    """Pseudonym pairs (p1 in e1, p2 in e2) whose signatures are exactly equal."""
    if min_signature_len < 1:
        raise ConfigError("min_signature_len must be >= 1")
    left = inner_signatures(e1, min_signature_len)
    right = inner_signatures(e2, min_signature_len)

    by_sig: dict[Signature, list[int]] = defaultdict(list)
    for p, sig in right.items():
        by_sig[sig].append(p)

    return sorted((p1, p2) for p1, sig in left.items() for p2 in by_sig.get(sig, ()))


def adhoc_link_all(
    egonets: Sequence[Egonet],
    min_signature_len: int = DEFAULT_MIN_SIGNATURE_LEN,
) -> list[tuple[int, int, int, int]]:
    """Matches across every pair of distinct egonets, as (egonet1, p1, egonet2, p2)."""
    by_sig: dict[Signature, list[tuple[int, int]]] = defaultdict(list)
    for e in sorted(egonets, key=lambda e: e.egonet_id):
        for p, sig in inner_signatures(e, min_signature_len).items():
            by_sig[sig].append((e.egonet_id, p))

    matches = []
    for members in by_sig.values():
        for (ea, pa), (eb, pb) in combinations(members, 2):
            if ea != eb:
                matches.append((ea, pa, eb, pb))

    logger.info("signature matching: %d matches over %d egonets", len(matches), len(egonets))
    return sorted(matches)


# ===============================
# EVALUATION
# ===============================
@dataclass
class AdhocReport:
    identical_pairs: int
    identical_matched: int
    non_identical_pairs: int
    non_identical_rejected: int
    min_signature_len: int

    @property
    def recall(self) -> float:
        return self.identical_matched / self.identical_pairs if self.identical_pairs else 0.0

    @property
    def accuracy(self) -> float:
        return self.non_identical_rejected / self.non_identical_pairs if self.non_identical_pairs else 0.0

    def as_row(self) -> dict:
        return {
            "min_signature_len": self.min_signature_len,
            "identical_pairs": self.identical_pairs,
            "recall_pct": round(100.0 * self.recall, 2),
            "non_identical_pairs": self.non_identical_pairs,
            "accuracy_pct": round(100.0 * self.accuracy, 2),
        }


def adhoc_evaluate(
    egonets: Sequence[Egonet],
    truth: GroundTruth,
    min_signature_len: int = DEFAULT_MIN_SIGNATURE_LEN,
    non_identical: int = 1000,
    seed: int = 0,
) -> AdhocReport:
    """
    Recall over every identical Case-1 pair with matchable signatures, and
    accuracy (share left unmatched) over a seeded uniform sample of
    non-identical Case-1 pairs.
    """
    egonets = sorted(egonets, key=lambda e: e.egonet_id)
    nodes = []  # (egonet_id, pseudonym, original, signature)
    for e in egonets:
        mapping = truth.entries[e.egonet_id]
        for p, sig in inner_signatures(e, min_signature_len).items():
            nodes.append((e.egonet_id, p, mapping[p], sig))

    occurrences = defaultdict(list)
    for item in nodes:
        occurrences[item[2]].append(item)

    ident_total = ident_hit = 0
    for items in occurrences.values():
        for a, c in combinations(items, 2):
            if a[0] == c[0]:
                continue
            ident_total += 1
            ident_hit += int(a[3] == c[3])

    rng = np.random.default_rng(seed)
    seen = set()
    non_total = non_rejected = 0
    attempts = 0
    max_attempts = 50 * non_identical + 1000
    while non_total < non_identical and attempts < max_attempts and len(nodes) > 1:
        attempts += 1
        i, j = sorted(rng.integers(len(nodes), size=2).tolist())
        a, c = nodes[i], nodes[j]
        if a[0] == c[0] or a[2] == c[2] or (i, j) in seen:
            continue
        seen.add((i, j))
        non_total += 1
        non_rejected += int(a[3] != c[3])

    if non_total < non_identical:
        logger.warning("sampled %d of %d requested non-identical case-1 pairs", non_total, non_identical)

    report = AdhocReport(ident_total, ident_hit, non_total, non_rejected, min_signature_len)
    logger.info("signature attack: %s", report.as_row())
    return report


# ===============================
# MATCH REPORT
# ===============================
MATCH_COLUMNS = ["egonet1", "pseudo1", "egonet2", "pseudo2"]


def write_match_report(matches: Sequence[tuple[int, int, int, int]], path: str | Path) -> Path:
    df = pd.DataFrame(list(matches), columns=MATCH_COLUMNS)
    df.to_csv(path, sep="\t", index=False, lineterminator="\n")
    return Path(path)


def read_match_report(path: str | Path) -> list[tuple[int, int, int, int]]:
    df = pd.read_csv(path, sep="\t", dtype=int)
    return [tuple(row) for row in df[MATCH_COLUMNS].itertuples(index=False, name=None)]
