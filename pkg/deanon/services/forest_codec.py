"""
Model document for trained forests.

    {"version": 1, "params": {...}, "seed": 7, "digest": "...", "metadata": {...},
     "trees": [[{"split": {"i": 3, "j": 5, "tau": 0.25}, "l": 1, "r": 2},
                {"leaf": [40, 2]}, {"leaf": [1, 37]}], ...]}

Each tree is its node list in preorder; "l"/"r" index into that list.
Keys are sorted and separators fixed, so equal forests give equal bytes.
"""
import json
from dataclasses import asdict
from pathlib import Path

from pydantic import BaseModel, Field, ValidationError, model_validator

from ..errors import ConfigError, ModelFormatError, ModelVersionError
from .forest_engine import Forest, ForestParams, Leaf, Split, TreeNode, WeakLearner, iter_nodes

MODEL_VERSION = 1


# ===============================
# SCHEMA
# ===============================
class LearnerDoc(BaseModel):
    i: int = Field(..., ge=0)
    j: int = Field(..., ge=0)
    tau: float = Field(..., ge=0.0, le=1.0)


class NodeDoc(BaseModel):
    split: LearnerDoc | None = None
    l: int | None = None
    r: int | None = None
    leaf: list[int] | None = Field(default=None, min_length=2, max_length=2)

    @model_validator(mode="after")
    def _one_kind(self):
        if (self.split is None) == (self.leaf is None):
            raise ValueError("node must be exactly one of split/leaf")
        if self.split is not None and (self.l is None or self.r is None):
            raise ValueError("split node needs l and r")
        if self.leaf is not None:
            if min(self.leaf) < 0 or sum(self.leaf) == 0:
                raise ValueError("leaf counts must be >= 0 and not both zero")
        return self


class ParamsDoc(BaseModel):
    n: int = Field(..., ge=1)
    b: int = Field(..., ge=1)
    dual: bool
    trees: int = Field(..., ge=1)
    tau_step: float = Field(..., gt=0, le=1)
    feature_fraction: float = Field(..., gt=0, le=1)
    bag_per_class: int = Field(..., ge=1)
    min_node_fraction: float = Field(..., ge=0, lt=1)


class ForestDoc(BaseModel):
    version: int
    params: ParamsDoc
    seed: int
    digest: str = ""
    metadata: dict = Field(default_factory=dict)
    trees: list[list[NodeDoc]] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _tree_count(self):
        if len(self.trees) != self.params.trees:
            raise ValueError(f"params say {self.params.trees} trees, document has {len(self.trees)}")
        if any(not nodes for nodes in self.trees):
            raise ValueError("empty tree")
        return self


# ===============================
# ENCODE
# ===============================
def _encode_tree(tree: TreeNode) -> list[dict]:
    order = list(iter_nodes(tree))
    index = {id(node): k for k, node in enumerate(order)}
    out = []
    for node in order:
        if isinstance(node, Leaf):
            out.append({"leaf": [node.non_identical, node.identical]})
        else:
            lr = node.learner
            out.append({
                "split": {"i": lr.i, "j": lr.j, "tau": lr.tau},
                "l": index[id(node.left)],
                "r": index[id(node.right)],
            })
    return out


def forest_to_dict(f: Forest) -> dict:
    return {
        "version": MODEL_VERSION,
        "params": asdict(f.params),
        "seed": f.seed,
        "digest": f.digest,
        "metadata": f.metadata,
        "trees": [_encode_tree(t) for t in f.trees],
    }


def dumps(f: Forest) -> str:
    return json.dumps(forest_to_dict(f), sort_keys=True, separators=(",", ":")) + "\n"


def write_forest(f: Forest, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(dumps(f), encoding="utf-8")
    return path


# ===============================
# DECODE
# ===============================
def _check_learner(lr: LearnerDoc, params: ForestParams, where: str) -> None:
    length = params.vector_length
    if lr.i >= length or lr.j >= length:
        raise ModelFormatError(f"{where}: feature index out of range for length {length}")
    if params.dual and (lr.i >= params.n) != (lr.j >= params.n):
        raise ModelFormatError(f"{where}: dual split mixes the 1-hop and 2-hop halves")
    steps = round(1.0 / params.tau_step)
    if abs(lr.tau * steps - round(lr.tau * steps)) > 1e-9:
        raise ModelFormatError(f"{where}: tau {lr.tau} is off the threshold grid")


def _decode_tree(nodes: list[NodeDoc], params: ForestParams, t: int) -> TreeNode:
    built: list[TreeNode | None] = [None] * len(nodes)
    referenced = [0] * len(nodes)

    # children always follow their parent in preorder
    for k in range(len(nodes) - 1, -1, -1):
        doc = nodes[k]
        if doc.leaf is not None:
            built[k] = Leaf(non_identical=doc.leaf[0], identical=doc.leaf[1])
            continue
        where = f"tree {t} node {k}"
        for child in (doc.l, doc.r):
            if not k < child < len(nodes):
                raise ModelFormatError(f"{where}: child index {child} out of range")
            referenced[child] += 1
        _check_learner(doc.split, params, where)
        built[k] = Split(
            learner=WeakLearner(i=doc.split.i, j=doc.split.j, tau=doc.split.tau),
            left=built[doc.l],
            right=built[doc.r],
        )

    if referenced[0] or any(c != 1 for c in referenced[1:]):
        raise ModelFormatError(f"tree {t}: nodes are not a single binary tree")
    return built[0]


def forest_from_dict(doc: dict) -> Forest:
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    version = doc.get("version")
    if version != MODEL_VERSION:
        raise ModelVersionError(f"unsupported model version {version!r} (expected {MODEL_VERSION})")

    try:
        parsed = ForestDoc.model_validate(doc)
    except ValidationError as exc:
        raise ModelFormatError(f"invalid model document: {exc.error_count()} error(s); {exc.errors()[0]['msg']}") from None

    try:
        params = ForestParams(**parsed.params.model_dump())
    except ConfigError as exc:
        raise ModelFormatError(f"invalid forest params: {exc}") from None
    trees = [_decode_tree(nodes, params, t) for t, nodes in enumerate(parsed.trees)]
    return Forest(trees=trees, params=params, seed=parsed.seed, digest=parsed.digest, metadata=parsed.metadata)


def loads(text: str) -> Forest:
    if not text.strip():
        raise ModelFormatError("empty model document")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"truncated or malformed model document: {exc}") from None
    return forest_from_dict(doc)


def read_forest(path: str | Path) -> Forest:
    return loads(Path(path).read_text(encoding="utf-8"))
