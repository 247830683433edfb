import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterator, Sequence

import numpy as np

from ..errors import ConfigError, FeatureMismatchError, TrainingError
from .feature_engine import DEFAULT_BIN_SIZE, DEFAULT_BINS, FeatureVector, stack_vectors

logger = logging.getLogger(__name__)

_GAIN_EPS = 1e-12


# ===============================
# PARAMETERS
# ===============================
@dataclass(frozen=True)
class ForestParams:
    n: int = DEFAULT_BINS
    b: int = DEFAULT_BIN_SIZE
    dual: bool = False
    trees: int = 400
    tau_step: float = 0.05
    feature_fraction: float = 0.05
    bag_per_class: int = 600
    min_node_fraction: float = 0.10

    def __post_init__(self):
        if self.n < 1 or self.b < 1:
            raise ConfigError("n and b must be >= 1")
        if self.trees < 1:
            raise ConfigError("a forest needs at least one tree")
        if not 0.0 < self.feature_fraction <= 1.0:
            raise ConfigError("feature_fraction must lie in (0, 1]")
        if self.bag_per_class < 1:
            raise ConfigError("bag_per_class must be >= 1")
        if not 0.0 <= self.min_node_fraction < 1.0:
            raise ConfigError("min_node_fraction must lie in [0, 1)")
        steps = 1.0 / self.tau_step if self.tau_step > 0 else 0
        if not (0.0 < self.tau_step <= 1.0) or abs(steps - round(steps)) > 1e-9:
            raise ConfigError("tau_step must divide 1 evenly")

    @property
    def vector_length(self) -> int:
        return 2 * self.n if self.dual else self.n

    @property
    def candidate_space(self) -> int:
        return 2 * self.n * self.n if self.dual else self.n * self.n

    @property
    def candidates_per_node(self) -> int:
        return max(1, math.ceil(round(self.feature_fraction * self.candidate_space, 9)))

    def taus(self) -> np.ndarray:
        steps = int(round(1.0 / self.tau_step))
        # k / steps keeps grid values bit-identical to delta's own divisions
        return np.arange(steps + 1, dtype=np.float64) / steps


# ===============================
# TREE TYPES
# ===============================
@dataclass(frozen=True)
class WeakLearner:
    i: int
    j: int
    tau: float


@dataclass(frozen=True)
class Leaf:
    non_identical: int
    identical: int

    @property
    def posterior(self) -> tuple[float, float]:
        total = self.non_identical + self.identical
        return self.non_identical / total, self.identical / total


@dataclass
class Split:
    """left is the False branch of delta(v_a[i], v_b[j]) <= tau."""

    learner: WeakLearner
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None


TreeNode = Split | Leaf


@dataclass
class Forest:
    trees: list[TreeNode]
    params: ForestParams
    seed: int
    digest: str = ""
    metadata: dict = field(default_factory=dict)


def iter_nodes(tree: TreeNode) -> Iterator[TreeNode]:
    """Preorder walk."""
    stack = [tree]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, Split):
            stack.append(node.right)
            stack.append(node.left)


def node_counts(tree: TreeNode) -> tuple[int, int]:
    """(non_identical, identical) training samples that reached `tree`."""
    neg = pos = 0
    for node in iter_nodes(tree):
        if isinstance(node, Leaf):
            neg += node.non_identical
            pos += node.identical
    return neg, pos


# ===============================
# WEAK LEARNER & SPLIT CRITERIA
# ===============================
def delta(x: int, y: int) -> float:
    if x == 0 and y == 0:
        return 0.0
    return abs(x - y) / max(x, y)


def delta_array(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    hi = np.maximum(x, y)
    safe = np.where(hi == 0, 1.0, hi)
    return np.where(hi == 0, 0.0, np.abs(x - y) / safe)


def entropy(counts: Sequence[int]) -> float:
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts):
        raise TrainingError("class counts must be >= 0")
    total = sum(counts)
    if total == 0:
        raise TrainingError("entropy is undefined for an empty set")
    h = 0.0
    for c in counts:
        if c:
            p = c / total
            h -= p * math.log2(p)
    return h


def information_gain(parent: Sequence[int], left: Sequence[int], right: Sequence[int]) -> float:
    if len(parent) != len(left) or len(parent) != len(right):
        raise TrainingError("parent and children must count the same classes")
    if any(p != l + r for p, l, r in zip(parent, left, right)):
        raise TrainingError("children counts do not add up to the parent")

    total = sum(parent)
    gain = entropy(parent)
    for child in (left, right):
        size = sum(child)
        if size:
            gain -= size / total * entropy(child)
    return max(gain, 0.0)


def _entropy2(neg: np.ndarray, pos: np.ndarray) -> np.ndarray:
    total = neg + pos
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.zeros(np.shape(total), dtype=np.float64)
        for c in (neg, pos):
            p = np.where(total > 0, c / np.where(total > 0, total, 1), 0.0)
            h -= np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return h


# ===============================
# RANDOMIZED NODE OPTIMIZATION
# ===============================
def draw_candidates(rng: np.random.Generator, params: ForestParams) -> tuple[np.ndarray, np.ndarray]:
    """
    (i, j) feature pairs for one split node, drawn without replacement.
    Dual vectors only pair components from the same half.
    """
    n = params.n
    picks = rng.choice(params.candidate_space, size=params.candidates_per_node, replace=False)
    if params.dual:
        half, rest = np.divmod(picks, n * n)
        i = half * n + rest // n
        j = half * n + rest % n
    else:
        i, j = np.divmod(picks, n)
    return i.astype(np.int64), j.astype(np.int64)


def best_split(
    A: np.ndarray,
    B: np.ndarray,
    y: np.ndarray,
    cand_i: np.ndarray,
    cand_j: np.ndarray,
    taus: np.ndarray,
) -> tuple[int, int, float]:
    """
    Scan every candidate over the tau grid; returns (candidate index, tau
    index, gain). Ties go to the first candidate in draw order, then the
    smallest tau. Splits sending everything one way count as gain 0.
    """
    m = len(y)
    pos_total = int(y.sum())
    neg_total = m - pos_total

    D = delta_array(A[:, cand_i], B[:, cand_j])  # (m, k)
    right = D[:, :, None] <= taus[None, None, :]  # (m, k, T)
    right_all = right.sum(axis=0)
    right_pos = right[y == 1].sum(axis=0)
    right_neg = right_all - right_pos
    left_pos = pos_total - right_pos
    left_neg = neg_total - right_neg
    left_all = m - right_all

    parent_h = _entropy2(np.asarray(neg_total), np.asarray(pos_total))
    gain = parent_h - (right_all / m) * _entropy2(right_neg, right_pos) - (left_all / m) * _entropy2(left_neg, left_pos)
    gain = np.where((right_all == 0) | (left_all == 0), 0.0, gain)

    flat = int(np.argmax(gain))
    k, t = divmod(flat, len(taus))
    return k, t, float(gain[k, t])


def train_tree(A: np.ndarray, B: np.ndarray, y: np.ndarray, params: ForestParams, rng: np.random.Generator) -> TreeNode:
    """
    Grow one tree over a bag of pair vectors (A[r], B[r]) with labels y
    (1 = identical). Nodes are built in preorder; each split node draws
    its candidates from `rng` in that order.
    """
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0 or y.min() == y.max():
        raise TrainingError("the root bag must contain both classes")
    if A.shape != B.shape or A.shape[0] != len(y) or A.shape[1] != params.vector_length:
        raise FeatureMismatchError(
            f"bag arrays {A.shape}/{B.shape} do not match {len(y)} labels of length {params.vector_length}"
        )

    taus = params.taus()
    min_count = params.min_node_fraction * len(y)

    root: list[TreeNode] = []
    stack: list[tuple[np.ndarray, Split | None, str]] = [(np.arange(len(y)), None, "")]

    while stack:
        idx, parent, side = stack.pop()
        labels = y[idx]
        pos = int(labels.sum())
        neg = len(idx) - pos

        node: TreeNode
        if len(idx) < min_count or pos == 0 or neg == 0:
            node = Leaf(non_identical=neg, identical=pos)
        else:
            cand_i, cand_j = draw_candidates(rng, params)
            k, t, gain = best_split(A[idx], B[idx], labels, cand_i, cand_j, taus)
            if gain <= _GAIN_EPS:
                node = Leaf(non_identical=neg, identical=pos)
            else:
                learner = WeakLearner(i=int(cand_i[k]), j=int(cand_j[k]), tau=float(taus[t]))
                goes_right = delta_array(A[idx, learner.i], B[idx, learner.j]) <= learner.tau
                node = Split(learner=learner)
                stack.append((idx[goes_right], node, "right"))
                stack.append((idx[~goes_right], node, "left"))

        if parent is None:
            root.append(node)
        else:
            setattr(parent, side, node)

    return root[0]


# ===============================
# FOREST TRAINING
# ===============================
def pair_arrays(samples: Sequence) -> tuple[np.ndarray, np.ndarray]:
    return stack_vectors(s.vec_a for s in samples), stack_vectors(s.vec_b for s in samples)


def _bag(rng: np.random.Generator, size: int, per_class: int) -> np.ndarray:
    # smaller pools go in whole
    if size <= per_class:
        return np.arange(size)
    return rng.integers(size, size=per_class)


def _grow(
    seq: np.random.SeedSequence,
    ident: tuple[np.ndarray, np.ndarray],
    non: tuple[np.ndarray, np.ndarray],
    params: ForestParams,
) -> TreeNode:
    rng = np.random.default_rng(seq)
    pi = _bag(rng, len(ident[0]), params.bag_per_class)
    ni = _bag(rng, len(non[0]), params.bag_per_class)
    A = np.concatenate([ident[0][pi], non[0][ni]])
    B = np.concatenate([ident[1][pi], non[1][ni]])
    y = np.concatenate([np.ones(len(pi), dtype=np.int64), np.zeros(len(ni), dtype=np.int64)])
    return train_tree(A, B, y, params, rng)


_WORKER_STATE: dict = {}


def _init_worker(ident, non, params) -> None:
    _WORKER_STATE.update(ident=ident, non=non, params=params)


def _grow_in_worker(seq: np.random.SeedSequence) -> TreeNode:
    return _grow(seq, _WORKER_STATE["ident"], _WORKER_STATE["non"], _WORKER_STATE["params"])


def training_digest(ident, non, params: ForestParams) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(asdict(params), sort_keys=True).encode())
    for arr in (*ident, *non):
        h.update(np.ascontiguousarray(arr, dtype=np.int64).tobytes())
        h.update(str(arr.shape).encode())
    return h.hexdigest()


def train_forest(
    identical: Sequence,
    non_identical: Sequence,
    params: ForestParams,
    master_seed: int,
    workers: int = 1,
) -> Forest:
    """
    Train params.trees trees independently. Tree t draws its bag and its
    node candidates from the t-th child of SeedSequence(master_seed), so
    the forest does not depend on the worker count.
    """
    if not len(identical) or not len(non_identical):
        raise TrainingError(
            f"both pools must be nonempty (identical={len(identical)}, non_identical={len(non_identical)})"
        )

    ident = pair_arrays(identical)
    non = pair_arrays(non_identical)
    for arr in (*ident, *non):
        if arr.shape[1] != params.vector_length:
            raise FeatureMismatchError(
                f"pair vectors have length {arr.shape[1]}, params expect {params.vector_length}"
            )

    seqs = np.random.SeedSequence(master_seed).spawn(params.trees)
    logger.info(
        "training %d trees (identical=%d, non_identical=%d, workers=%d)",
        params.trees, len(identical), len(non_identical), workers,
    )

    if workers <= 1:
        trees = [_grow(seq, ident, non, params) for seq in seqs]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(ident, non, params)) as pool:
            trees = list(pool.map(_grow_in_worker, seqs, chunksize=max(1, params.trees // (4 * workers))))

    return Forest(
        trees=trees,
        params=params,
        seed=master_seed,
        digest=training_digest(ident, non, params),
        metadata={"identical": len(identical), "non_identical": len(non_identical)},
    )


# ===============================
# PREDICTION
# ===============================
def predict_scores(f: Forest, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Mean leaf posterior of "non-identical" over all trees, per row."""
    A = np.atleast_2d(np.asarray(A, dtype=np.int64))
    B = np.atleast_2d(np.asarray(B, dtype=np.int64))
    if A.shape != B.shape or A.shape[1] != f.params.vector_length:
        raise FeatureMismatchError(
            f"vectors {A.shape}/{B.shape} do not match forest length {f.params.vector_length}"
        )

    total = np.zeros(A.shape[0], dtype=np.float64)
    for tree in f.trees:
        stack = [(tree, np.arange(A.shape[0]))]
        while stack:
            node, idx = stack.pop()
            if not len(idx):
                continue
            if isinstance(node, Leaf):
                total[idx] += node.posterior[0]
                continue
            lr = node.learner
            goes_right = delta_array(A[idx, lr.i], B[idx, lr.j]) <= lr.tau
            stack.append((node.right, idx[goes_right]))
            stack.append((node.left, idx[~goes_right]))
    return total / len(f.trees)


def predict_forest(f: Forest, pair: tuple[FeatureVector, FeatureVector]) -> float:
    va, vb = pair
    for v in (va, vb):
        if v.dual != f.params.dual or v.length != f.params.vector_length:
            raise FeatureMismatchError(
                f"vector (length {v.length}, dual={v.dual}) does not match the forest "
                f"(length {f.params.vector_length}, dual={f.params.dual})"
            )
    return float(predict_scores(f, va.as_array()[None, :], vb.as_array()[None, :])[0])


def score_samples(f: Forest, samples: Sequence) -> np.ndarray:
    if not len(samples):
        return np.zeros(0, dtype=np.float64)
    A, B = pair_arrays(samples)
    return predict_scores(f, A, B)
