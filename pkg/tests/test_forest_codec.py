import json

import numpy as np
import pytest

from deanon.errors import ModelFormatError, ModelVersionError
from deanon.services.forest_codec import dumps, forest_to_dict, loads, read_forest, write_forest
from deanon.services.forest_engine import Forest, ForestParams, Leaf, Split, WeakLearner, predict_scores, train_forest
from tests.helpers import separable_pools


@pytest.fixture(scope="module")
def forest():
    ident, non = separable_pools(np.random.default_rng(3), count=80)
    return train_forest(ident, non, ForestParams(n=4, trees=5, feature_fraction=0.5), master_seed=2)


def _tiny_doc():
    f = Forest(
        trees=[Split(WeakLearner(0, 1, 0.25), left=Leaf(5, 1), right=Leaf(1, 5))],
        params=ForestParams(n=2, trees=1),
        seed=0,
    )
    return forest_to_dict(f)


def test_roundtrip_preserves_predictions(tmp_path, forest):
    path = write_forest(forest, tmp_path / "model.json")
    back = read_forest(path)
    assert back.trees == forest.trees
    assert back.params == forest.params
    assert back.digest == forest.digest

    rng = np.random.default_rng(0)
    A = rng.integers(0, 40, size=(50, 4))
    B = rng.integers(0, 40, size=(50, 4))
    assert np.array_equal(predict_scores(back, A, B), predict_scores(forest, A, B))


def test_serialization_is_byte_stable(forest):
    text = dumps(forest)
    assert dumps(loads(text)) == text


def test_tree_nodes_are_listed_in_preorder():
    doc = _tiny_doc()
    nodes = doc["trees"][0]
    assert nodes[0] == {"split": {"i": 0, "j": 1, "tau": 0.25}, "l": 1, "r": 2}
    assert nodes[1] == {"leaf": [5, 1]}


def test_unknown_version_is_rejected():
    doc = _tiny_doc()
    doc["version"] = 99
    with pytest.raises(ModelVersionError):
        loads(json.dumps(doc))


@pytest.mark.parametrize("text", ["", "   \n", '{"version": 1, "params"'])
def test_empty_or_truncated_input(text):
    with pytest.raises(ModelFormatError):
        loads(text)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(trees=[]),
        lambda d: d["trees"].append([]),
        lambda d: d["trees"][0][0].update(l=0),
        lambda d: d["trees"][0][0].update(r=7),
        lambda d: d["trees"][0][0]["split"].update(i=9),
        lambda d: d["trees"][0][0]["split"].update(tau=0.33),
        lambda d: d["trees"][0][1].update(leaf=[0, 0]),
        lambda d: d["trees"][0][1].update(split={"i": 0, "j": 0, "tau": 0.0}),
        lambda d: d["params"].update(tau_step=0.3),
    ],
)
def test_malformed_documents(mutate):
    doc = _tiny_doc()
    mutate(doc)
    with pytest.raises(ModelFormatError):
        loads(json.dumps(doc))


def test_dual_split_must_stay_in_one_half():
    f = Forest(
        trees=[Split(WeakLearner(0, 3, 0.5), left=Leaf(1, 0), right=Leaf(0, 1))],
        params=ForestParams(n=2, dual=True, trees=1),
        seed=0,
    )
    with pytest.raises(ModelFormatError):
        loads(dumps(f))
