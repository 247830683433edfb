import numpy as np
import pytest
from sklearn.metrics import roc_auc_score

from deanon.errors import EvaluationError
from deanon.services.eval_engine import (
    FP_LEVELS,
    JC_BUCKETS,
    bucket_of,
    evaluate,
    fp_column,
    jaccard,
    jc_error_breakdown,
    roc_and_auc,
    threshold_at_fp,
    tp_at_fp,
)


def _brute_auc(pos, neg):
    wins = sum((p < n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


# ===============================
# ROC / AUC
# ===============================
def test_auc_small_example():
    _, auc = roc_and_auc([0.1, 0.4], [0.3, 0.9])
    assert auc == pytest.approx(0.75)


def test_auc_matches_pair_counting_and_sklearn():
    rng = np.random.default_rng(0)
    for _ in range(100):
        pos = np.round(rng.random(rng.integers(1, 30)), 2)
        neg = np.round(rng.random(rng.integers(1, 30)), 2)
        _, auc = roc_and_auc(pos, neg)
        assert auc == pytest.approx(_brute_auc(pos, neg), abs=1e-9)
        y = np.r_[np.ones(len(pos)), np.zeros(len(neg))]
        # lower score means identical
        assert auc == pytest.approx(roc_auc_score(y, -np.r_[pos, neg]), abs=1e-9)


def test_roc_is_monotone_and_anchored():
    rng = np.random.default_rng(1)
    curve, _ = roc_and_auc(rng.random(200), rng.random(300) + 0.2)
    fp, tp = np.array(curve.fp), np.array(curve.tp)
    assert (np.diff(fp) >= 0).all() and (np.diff(tp) >= 0).all()
    assert curve.points()[0] == (0.0, 0.0)
    assert curve.points()[-1] == (1.0, 1.0)


def test_perfect_and_inverted_scores():
    assert roc_and_auc([0.0, 0.1], [0.9, 1.0])[1] == 1.0
    assert roc_and_auc([0.9, 1.0], [0.0, 0.1])[1] == 0.0


def test_empty_score_sets_are_rejected():
    with pytest.raises(EvaluationError):
        roc_and_auc([], [0.5])
    with pytest.raises(EvaluationError):
        roc_and_auc([0.5], [])


# ===============================
# FIXED FALSE-POSITIVE LEVELS
# ===============================
def test_step_rule_versus_interpolation_on_chance_line():
    curve, auc = roc_and_auc([0.5], [0.5])
    assert auc == pytest.approx(0.5)
    assert tp_at_fp(curve, [0.25])[0.25] == 0.0
    assert tp_at_fp(curve, [0.25], interpolate=True)[0.25] == pytest.approx(0.25)


def test_tp_at_fp_is_monotone_and_within_budget():
    rng = np.random.default_rng(2)
    curve, _ = roc_and_auc(rng.random(500) * 0.8, rng.random(2000))
    rates = tp_at_fp(curve, FP_LEVELS)
    values = [rates[level] for level in FP_LEVELS]
    assert values == sorted(values)

    fp, tp = np.array(curve.fp), np.array(curve.tp)
    for level, value in rates.items():
        reachable = tp[fp <= level + 1e-12]
        assert value == reachable.max()


def test_tp_at_fp_rejects_bad_levels():
    curve, _ = roc_and_auc([0.1], [0.2])
    with pytest.raises(EvaluationError):
        tp_at_fp(curve, [1.5])


def test_threshold_at_fp_keeps_the_budget():
    neg = np.arange(100) / 100
    t = threshold_at_fp(neg, 0.05)
    assert (neg <= t).sum() == 5
    assert (neg <= threshold_at_fp(neg, 0.0)).sum() == 0
    assert threshold_at_fp(neg, 1.0) == neg[-1]

    tied = [0.1, 0.2, 0.2, 0.2, 0.9]
    assert threshold_at_fp(tied, 0.4) == 0.1


def test_evaluate_reports_cases():
    report = evaluate(
        {"1": [0.1, 0.2], "12": [0.6], "2": []},
        [0.3, 0.5, 0.7, 0.9],
        fp_levels=(0.25, 0.5),
    )
    assert report.n_identical == 3 and report.n_non_identical == 4
    assert set(report.cases) == {"1", "12"}
    assert report.cases["1"].auc == 1.0
    assert report.cases["12"].auc == pytest.approx(0.5)
    assert report.auc == pytest.approx(_brute_auc([0.1, 0.2, 0.6], [0.3, 0.5, 0.7, 0.9]))

    row = report.as_row("Complete")
    assert row["row"] == "Complete"
    assert list(row)[1:3] == ["25%", "50%"]


def test_fp_column_names():
    assert [fp_column(x) for x in FP_LEVELS] == ["0.01%", "0.1%", "1%", "10%", "25%"]


# ===============================
# NEIGHBORHOOD OVERLAP
# ===============================
def test_jaccard():
    assert jaccard({1, 2, 3}, {2, 3, 4}) == 0.5
    assert jaccard([], []) == 0.0
    assert jaccard({1}, {2}) == 0.0


@pytest.mark.parametrize(
    "jc, bucket",
    [(0.0, 0), (1e-9, 1), (0.05, 1), (0.0501, 2), (0.10, 2), (0.15, 3), (0.151, 4), (1.0, 4)],
)
def test_buckets(jc, bucket):
    assert bucket_of(jc) == bucket
    assert JC_BUCKETS[bucket][0]


def test_jc_error_breakdown():
    rows = jc_error_breakdown(
        jaccards=[0.0, 0.0, 0.03, 0.2, 0.2, 0.0],
        labels=[1, 1, 1, 1, 0, 0],
        scores=[0.1, 0.8, 0.2, 0.1, 0.1, 0.9],
        threshold=0.5,
    )
    zero, low, *_, high = rows
    assert (zero["identical"], zero["tp"], zero["tp_rate"]) == (2, 1, 0.5)
    assert (zero["non_identical"], zero["fp"], zero["fp_rate"]) == (1, 0, 0.0)
    assert low["tp_rate"] == 1.0 and low["identical_fraction"] == 0.25
    assert high["fp_rate"] == 1.0 and high["non_identical_fraction"] == 0.5
    with pytest.raises(EvaluationError):
        jc_error_breakdown([0.0], [1, 0], [0.1], 0.5)
