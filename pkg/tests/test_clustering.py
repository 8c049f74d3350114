import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import pdist, squareform

from dendro_evo.clustering import (
    AGNES_ALIASES,
    ConstantFeatureWarning,
    LinkageSpec,
    agglomerate,
    build_dendrogram,
    diana,
    distances,
    standardize,
)
from dendro_evo.data import FeatureMatrix
from oracles import merges_of, naive_agglomerate


def test_euclidean_345():
    assert distances(np.array([[0.0, 0.0], [3.0, 4.0]])).entries[0, 1] == 5.0


@pytest.mark.parametrize("metric,scipy_name", [("euclidean", "euclidean"), ("manhattan", "cityblock"), ("canberra", "canberra")])
def test_distances_match_scipy(metric, scipy_name):
    X = np.random.default_rng(3).normal(size=(15, 4))
    np.testing.assert_allclose(distances(X, metric).entries, squareform(pdist(X, scipy_name)), rtol=1e-13, atol=1e-14)


def test_canberra_zero_over_zero_counts_as_zero():
    X = np.array([[0.0, 1.0], [0.0, 3.0]])
    assert distances(X, "canberra").entries[0, 1] == pytest.approx(2 / 4)


def test_unknown_metric():
    with pytest.raises(ValueError):
        distances(np.zeros((2, 1)), "cosine")


def test_method_spellings():
    assert LinkageSpec("ward.D").method == "ward_d"
    assert LinkageSpec("Ward.D2").method == "ward_d2"
    assert LinkageSpec("agnes.weighted").method == "weighted_agnes"
    for alias, target in AGNES_ALIASES.items():
        assert LinkageSpec(alias).algorithm == target
    with pytest.raises(ValueError, match="unknown clustering method"):
        LinkageSpec("kmeans")


def test_single_linkage_three_points():
    d = agglomerate(distances(np.array([[0.0], [1.0], [3.0]])), "single")
    assert merges_of(d) == [(frozenset({0, 1}), 1.0), (frozenset({0, 1, 2}), 2.0)]


def test_ward_d_on_raw_distances_three_points():
    # d({0,1},2) = ((1+1)*3 + (1+1)*2 - 1*1) / 3 = 3
    d = agglomerate(distances(np.array([[0.0], [1.0], [3.0]])), "ward_d")
    np.testing.assert_allclose(d.heights, [1.0, 3.0], rtol=1e-15)


def test_ward_d2_three_points():
    # squared: d^2({0,1},2) = (2*9 + 2*4 - 1)/3 = 25/3, height sqrt(25/3)
    d = agglomerate(distances(np.array([[0.0], [1.0], [3.0]])), "ward_d2")
    np.testing.assert_allclose(d.heights, [1.0, np.sqrt(25 / 3)], rtol=1e-15)


def test_ties_go_to_lowest_pair():
    # all pairwise distances equal
    D = np.ones((4, 4)) - np.eye(4)
    d = agglomerate(D, "average")
    assert tuple(d.children[0]) == (0, 1)
    # the merged cluster keeps slot 0, still at distance 1 from everything
    assert tuple(d.children[1]) == (4, 2)
    assert tuple(d.children[2]) == (5, 3)


def _same_merges(got, want, tol):
    assert len(got) == len(want)
    for (gs, gh), (ws, wh) in zip(got, want):
        assert gs == ws
        assert gh == pytest.approx(wh, abs=tol, rel=tol)


points = st.integers(0, 2**32 - 1).map(lambda s: np.random.default_rng(s).normal(size=(int(np.random.default_rng(s).integers(3, 9)), 2)))


@settings(max_examples=30, deadline=None)
@given(X=points, method=st.sampled_from(["single", "complete", "average"]))
def test_lance_williams_matches_naive_agglomeration(X, method):
    d = agglomerate(distances(X), method)
    _same_merges(merges_of(d), naive_agglomerate(X, method), 1e-10)


@settings(max_examples=30, deadline=None)
@given(X=points)
def test_ward_d_on_squared_distances_is_classic_ward(X):
    D2 = distances(X).entries ** 2
    _same_merges(merges_of(agglomerate(D2, "ward_d")), naive_agglomerate(X, "ward"), 1e-10)


@settings(max_examples=30, deadline=None)
@given(X=points)
def test_ward_d2_heights_are_root_of_classic_ward(X):
    want = [(s, np.sqrt(h)) for s, h in naive_agglomerate(X, "ward")]
    _same_merges(merges_of(agglomerate(distances(X), "ward_d2")), want, 1e-10)


@settings(max_examples=30, deadline=None)
@given(X=points, method=st.sampled_from(["centroid", "median"]))
def test_centroid_and_median_on_squared_distances(X, method):
    D2 = distances(X).entries ** 2
    _same_merges(merges_of(agglomerate(D2, method)), naive_agglomerate(X, method), 1e-10)


@pytest.mark.parametrize("ours,theirs", [("single", "single"), ("complete", "complete"), ("average", "average"),
                                         ("mcquitty", "weighted"), ("ward_d2", "ward")])
def test_matches_scipy_linkage(ours, theirs):
    X = np.random.default_rng(4).normal(size=(30, 3))
    Z = linkage(X, theirs)
    d = agglomerate(distances(X), ours)
    np.testing.assert_allclose(np.sort(d.heights), np.sort(Z[:, 2]), rtol=1e-10)


def test_diana_three_points():
    d = diana(distances(np.array([[0.0], [1.0], [10.0]])))
    # the top split isolates 10 at the full diameter, then {0, 1} splits at 1
    assert sorted(d.heights) == [1.0, 10.0]
    assert merges_of(d)[0] == (frozenset({0, 1}), 1.0)


def test_diana_four_points():
    # {0,1,5,6}: splinter starts at 0 (tied highest mean dissimilarity, lowest
    # index), pulls in 1; the halves then split at their diameters
    d = diana(distances(np.array([[0.0], [1.0], [5.0], [6.0]])))
    sets = merges_of(d)
    assert sorted(h for _, h in sets) == [1.0, 1.0, 6.0]
    assert {s for s, _ in sets} == {frozenset({0, 1}), frozenset({2, 3}), frozenset({0, 1, 2, 3})}


def test_diana_heights_are_cluster_diameters():
    X = np.random.default_rng(5).normal(size=(20, 2))
    D = distances(X).entries
    for s, h in merges_of(diana(D)):
        idx = sorted(s)
        assert h == pytest.approx(D[np.ix_(idx, idx)].max())


def test_standardize_drops_constant_columns():
    fm = FeatureMatrix.from_array(np.column_stack([np.arange(5.0), np.ones(5)]), ("a", "b"))
    with pytest.warns(ConstantFeatureWarning, match="b"):
        out, dropped = standardize(fm)
    assert dropped == ["b"]
    assert out.names == ("a",)
    np.testing.assert_allclose(out.columns[0].std(ddof=1), 1.0)


def test_build_dendrogram_ignores_categorical_columns():
    X = np.random.default_rng(6).normal(size=(8, 2))
    fm = FeatureMatrix.from_array(X, ("a", "b"))
    cat = FeatureMatrix(fm.columns + (np.array(list("xyxyxyxy"), dtype=object),), ("a", "b", "c"),
                        fm.kinds + ("categorical",))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        d1 = build_dendrogram(fm, "average")
        d2 = build_dendrogram(cat, "average")
    np.testing.assert_array_equal(d1.children, d2.children)
