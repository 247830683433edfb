import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from ..errors import ConfigError, FeatureMismatchError, GraphParseError, MissingNodeError
from .graph_engine import Graph, khop_neighborhood

logger = logging.getLogger(__name__)

# ===============================
# DEFAULT BINNING
# ===============================
DEFAULT_BINS = 70
DEFAULT_BIN_SIZE = 15
ALTERNATIVE_BINNINGS = ((21, 50), (35, 30), (70, 15), (105, 10))

TWO_HOP_WITHIN = "within"
TWO_HOP_EXACT = "exact"


@dataclass(frozen=True)
class FeatureVector:
    """Binned neighbor-degree histogram; length 2n when dual."""

    bins: tuple[int, ...]
    n: int
    b: int
    dual: bool = False

    def __post_init__(self):
        expected = 2 * self.n if self.dual else self.n
        if len(self.bins) != expected:
            raise FeatureMismatchError(f"vector has {len(self.bins)} bins, expected {expected}")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.bins, dtype=np.int64)

    @property
    def length(self) -> int:
        return len(self.bins)


def _check_binning(n: int, b: int) -> None:
    if n < 1 or b < 1:
        raise ConfigError(f"bin count and bin width must be >= 1 (got n={n}, b={b})")


def histogram_from_degrees(degrees: Iterable[int], n: int, b: int) -> tuple[int, ...]:
    """
    Bin i counts degrees d with i*b < d <= (i+1)*b; anything above n*b
    lands in the last bin.

    With n=70, b=15 a degree of 1030 falls in bin 68, not the last bin:
    only degrees above 1035 reach the last bin.
    """
    _check_binning(n, b)
    counts = [0] * n
    for d in degrees:
        if d < 1:
            raise ConfigError(f"neighbor degree must be >= 1 (got {d})")
        counts[min((d - 1) // b, n - 1)] += 1
    return tuple(counts)


def degree_histogram_vector(g: Graph, node: int, n: int = DEFAULT_BINS, b: int = DEFAULT_BIN_SIZE) -> FeatureVector:
    """Histogram of the degrees of `node`'s neighbors, measured in g."""
    nbrs = g.neighbors(node)
    bins = histogram_from_degrees((d for _, d in g.nx.degree(nbrs)), n, b)
    return FeatureVector(bins=bins, n=n, b=b)


def dual_hop_vector(
    g: Graph,
    node: int,
    n: int = DEFAULT_BINS,
    b: int = DEFAULT_BIN_SIZE,
    two_hop_mode: str = TWO_HOP_WITHIN,
) -> FeatureVector:
    """
    1-hop histogram followed by the histogram over the node's 2-hop
    neighborhood (distance 1 or 2 by default, exactly 2 with
    two_hop_mode="exact"). The node itself is never counted.
    """
    if node not in g:
        raise MissingNodeError(node)
    if two_hop_mode not in (TWO_HOP_WITHIN, TWO_HOP_EXACT):
        raise ConfigError(f"unknown two_hop_mode {two_hop_mode!r}")

    first = histogram_from_degrees((d for _, d in g.nx.degree(g.nx[node])), n, b)

    dist = khop_neighborhood(g, node, 2).distances
    min_hop = 1 if two_hop_mode == TWO_HOP_WITHIN else 2
    ring = [v for v, d in dist.items() if d >= min_hop]
    second = histogram_from_degrees((d for _, d in g.nx.degree(ring)), n, b)
    return FeatureVector(bins=first + second, n=n, b=b, dual=True)


# ===============================
# FEATURE DUMP
# ===============================
def write_feature_dump(rows: Iterable[tuple[int, int, FeatureVector]], path: str | Path) -> None:
    lines = [f"{eid} {p} {','.join(map(str, v.bins))}" for eid, p, v in rows]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="ascii")


def read_feature_dump(path: str | Path, n: int, b: int, dual: bool = False) -> dict[tuple[int, int], FeatureVector]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="ascii").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            eid, p, raw = line.split()
            bins = tuple(int(x) for x in raw.split(","))
        except ValueError:
            raise GraphParseError(lineno, f"malformed feature line {line!r}") from None
        out[(int(eid), int(p))] = FeatureVector(bins=bins, n=n, b=b, dual=dual)
    return out


def stack_vectors(vectors: Iterable[FeatureVector]) -> np.ndarray:
    rows = [v.bins for v in vectors]
    if not rows:
        return np.zeros((0, 0), dtype=np.int64)
    return np.asarray(rows, dtype=np.int64)
