import numpy as np

from deanon.services.feature_engine import FeatureVector
from deanon.services.pair_engine import Label, PairSample


def pair_sample(a, b, label: Label, case=None) -> PairSample:
    n = len(a)
    return PairSample(
        vec_a=FeatureVector(tuple(int(x) for x in a), n, 1),
        vec_b=FeatureVector(tuple(int(x) for x in b), n, 1),
        label=label,
        case=case,
        source=((0, 0), (1, 0)),
        originals=(0, 0) if label is Label.IDENTICAL else (0, 1),
    )


def separable_pools(rng: np.random.Generator, count: int = 120, n: int = 4):
    """Identical pairs repeat their vector; non-identical ones differ tenfold in bin 0."""
    ident, non = [], []
    for _ in range(count):
        v = rng.integers(1, 20, size=n)
        ident.append(pair_sample(v, v, Label.IDENTICAL))
        w = v.copy()
        w[0] = v[0] * 10
        non.append(pair_sample(v, w, Label.NON_IDENTICAL))
    return ident, non


# synthetic egonet run small enough for unit tests
SMALL_RUN = dict(
    seed=3,
    synth_nodes=600,
    synth_attach=4,
    synth_triad=0.5,
    count=12,
    min_size=30,
    bins=10,
    bin_size=5,
    trees=5,
    feature_fraction=0.2,
    bag_per_class=200,
    min_non_identical=50,
    test_cap=500,
)
