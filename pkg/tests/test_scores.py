import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dendro_evo.brownian import bm_fit
from dendro_evo.clustering import build_dendrogram, distances, standardize
from dendro_evo.data import FeatureMatrix
from dendro_evo.scores import (
    DegenerateScoreError,
    ScoreReport,
    SkippedFeatureWarning,
    ari,
    assign_labels,
    cophenetic_correlation,
    cvl,
    f1_gold,
    fom,
    pfis,
    reports_to_csv,
    reports_to_json,
    spearman,
)
from dendro_evo.tree import Dendrogram, cut, to_ultrametric
from oracles import ari_pairs, cophenetic_pearson, loo_block, midranks, pearson, random_dendrogram

small_labels = st.lists(st.integers(0, 3), min_size=2, max_size=14)


@settings(max_examples=80, deadline=None)
@given(data=st.data())
def test_ari_matches_pair_counting(data):
    a = data.draw(small_labels)
    b = data.draw(st.lists(st.integers(0, 3), min_size=len(a), max_size=len(a)))
    assert ari(np.array(a), b) == pytest.approx(ari_pairs(a, b), abs=1e-12)


def test_ari_identical_partitions():
    assert ari(np.array([0, 0, 1, 1]), ["x", "x", "y", "y"]) == 1.0


def test_spearman_hand_value():
    # one adjacent swap among 4: 1 - 6*2/(4*15)
    assert spearman([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-15)


@settings(max_examples=80, deadline=None)
@given(a=st.lists(st.integers(-3, 3), min_size=3, max_size=12), data=st.data())
def test_spearman_matches_midrank_pearson(a, data):
    b = data.draw(st.lists(st.integers(-3, 3), min_size=len(a), max_size=len(a)))
    if len(set(a)) < 2 or len(set(b)) < 2:
        with pytest.raises(DegenerateScoreError):
            spearman(a, b)
        return
    assert spearman(a, b) == pytest.approx(pearson(midranks(a), midranks(b)), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), method=st.sampled_from(["average", "complete", "single", "diana"]))
def test_cophenetic_correlation_matches_direct_formula(seed, method):
    X = np.random.default_rng(seed).normal(size=(10, 3))
    fm = FeatureMatrix.from_array(X)
    d = build_dendrogram(fm, method, standardize_features=False)
    D = distances(X).entries
    assert cophenetic_correlation(D, d) == pytest.approx(cophenetic_pearson(D, d), abs=1e-12)


def test_cophenetic_degenerate():
    D = np.ones((3, 3)) - np.eye(3)
    d = Dendrogram(3, [[0, 1], [2, 3]], [1.0, 1.0])
    with pytest.raises(DegenerateScoreError, match="degenerate"):
        cophenetic_correlation(D, d)


def test_f1_gold_hand_example():
    # leaves 0-3 cut into {0,1,2} and {3}; labels a,a,b,b
    d = Dendrogram(4, [[0, 1], [4, 2], [5, 3]], [1.0, 2.0, 3.0])
    labels = ["a", "a", "b", "b"]
    # majority: cluster {0,1,2} -> a, {3} -> b ; predictions a,a,a,b
    # F1(a) = 2*2/(3+2) = 0.8, F1(b) = 2*1/(1+2) = 2/3
    assert f1_gold(d, labels) == pytest.approx((0.8 + 2 / 3) / 2, abs=1e-15)


def test_assign_labels_majority_vs_hungarian():
    a = np.array([0, 0, 0, 1, 1, 2])
    labels = np.array(["x", "x", "y", "x", "x", "y"], dtype=object)
    maj = assign_labels(a, labels, ["x", "y"], "majority")
    assert list(maj) == ["x", "x", "x", "x", "x", "y"]
    hun = assign_labels(a, labels, ["x", "y"], "hungarian")
    # one-to-one: x goes to one of the two x-heavy clusters, y to cluster 2
    assert hun[5] == "y"


def test_fom_direct():
    a = np.array([0.0, 0.1, 5.0, 5.1])
    b = np.array([1.0, 3.0, 2.5, 2.0])
    fm = FeatureMatrix.from_array(np.column_stack([a, b]), ("a", "b"))
    za = (a - a.mean()) / a.std(ddof=1)
    zb = (b - b.mean()) / b.std(ddof=1)

    def within_rms(z, groups):
        return math.sqrt(sum(((z[g] - z[g].mean()) ** 2).sum() for g in groups) / len(z))

    # b held out: clustering on a gives {0,1} | {2,3}
    # a held out: clustering on b (1, 3, 2.5, 2) gives {0} | {1,2,3} under average linkage
    want = (within_rms(zb, [[0, 1], [2, 3]]) + within_rms(za, [[0], [1, 2, 3]])) / 2
    assert fom(fm, "average", 2) == pytest.approx(want, abs=1e-12)


def _cvl_oracle(X, method):
    Z = (X - X.mean(0)) / X.std(0, ddof=1)
    losses = []
    for j in range(X.shape[1]):
        rest = FeatureMatrix.from_array(np.delete(X, j, axis=1))
        t = to_ultrametric(build_dendrogram(rest, method))
        C = t.mrca_depth_matrix()
        y = Z[:, j]
        one = np.ones(len(y))
        Ci = np.linalg.inv(C)
        mu = one @ Ci @ y / (one @ Ci @ one)
        losses.append(np.mean((y - loo_block(C, y, mu)) ** 2))
    return float(np.mean(losses)), losses


@pytest.mark.parametrize("method", ["average", "mcquitty", "ward_d2", "diana"])
def test_cvl_matches_explicit_construction(method):
    X = np.random.default_rng(12).normal(size=(25, 4)) * [1, 2, 3, 4]
    want, per = _cvl_oracle(X, method)
    res = cvl(FeatureMatrix.from_array(X), method)
    assert res.cvl == pytest.approx(want, abs=1e-9)
    np.testing.assert_allclose(res.per_feature_loss, per, atol=1e-9)


def test_pfis_is_one_minus_loo_loss_and_nan_for_constant():
    rng = np.random.default_rng(13)
    X = np.column_stack([rng.normal(size=20), rng.normal(size=20), np.ones(20)])
    fm = FeatureMatrix.from_array(X, ("a", "b", "c"))
    d = build_dendrogram(fm, "average")
    with pytest.warns(SkippedFeatureWarning):
        from dendro_evo.scores import usable_features

        usable_features(fm)
    with pytest.warns(SkippedFeatureWarning):
        out = pfis(fm, d)
    assert math.isnan(out[2])
    t = to_ultrametric(d)
    z = standardize(fm.select([0]), warn=False)[0].columns[0]
    fit = bm_fit(t, z)
    C = t.mrca_depth_matrix()
    assert out[0] == pytest.approx(1 - np.mean((z - loo_block(C, z, fit.mu_hat)) ** 2), abs=1e-10)


def test_cvl_with_categorical_feature_uses_brier():
    rng = np.random.default_rng(14)
    X = rng.normal(size=(30, 2))
    cat = np.where(X[:, 0] > 0, "hi", "lo").astype(object)
    fm = FeatureMatrix(FeatureMatrix.from_array(X).columns + (cat,), ("x0", "x1", "c"),
                       ("continuous", "continuous", "categorical"))
    res = cvl(fm, "average")
    # Brier per leaf is at most 1 and a split this clean should be well predicted
    assert 0 <= res.per_feature_loss[2] < 0.25
    assert np.all(np.isfinite(res.per_feature_loss))


def test_cvl_needs_two_features():
    with pytest.raises(ValueError):
        cvl(FeatureMatrix.from_array(np.arange(6.0).reshape(6, 1)), "average")


def test_report_serialization():
    r = ScoreReport("average:euclidean", ("a", "b"), cvl=0.5, fom=math.nan, coph=0.25, ari=1.0, f1_gold=1 / 3,
                    per_feature_loss=np.array([0.1, 0.9]), pfis=np.array([0.9, math.nan]))
    csv_text = reports_to_csv([r, ScoreReport("single:euclidean", error="ValueError: boom")])
    lines = csv_text.splitlines()
    assert lines[0] == "method_id,cvl,fom,coph,ari,f1_gold,loss_a,loss_b,pfis_a,pfis_b,error"
    assert lines[1] == "average:euclidean,0.500000,,0.250000,1.000000,0.333333,0.100000,0.900000,0.900000,,"
    assert lines[2].endswith(",ValueError: boom")
    doc = json.loads(reports_to_json([r]))
    assert doc[0]["fom"] is None
    assert doc[0]["f1_gold"] == 1 / 3
    assert doc[0]["pfis"] == {"a": 0.9, "b": None}


def test_random_trees_cut_partition_counts():
    d = random_dendrogram(np.random.default_rng(1), 10)
    for k in range(1, 11):
        assert len(set(cut(d, k).assignment)) == k
