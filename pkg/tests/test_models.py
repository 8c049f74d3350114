"""Brownian motion and equal-rates Markov model against brute-force oracles."""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dendro_evo.brownian import ancestral_states, bm_fit, loo_predict
from dendro_evo.ctmc import (
    Q_MIN,
    LikelihoodError,
    brier,
    fit_rate,
    holdout_leaf_posterior,
    holdout_posteriors,
    marginal_posteriors,
    pruning_loglik,
    transition_matrix,
)
from dendro_evo.tree import Dendrogram, to_ultrametric
from oracles import asr_joint, bm_sigma2, enumerate_states, er_transition, gls_mean, loo_block, random_dendrogram

seeds = st.integers(0, 2**32 - 1)


def _tree(seed, lo=2, hi=8, ties=True):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(lo, hi + 1))
    return to_ultrametric(random_dendrogram(rng, n, ties)), rng


# ---------------------------------------------------------------- Brownian motion


@settings(max_examples=60, deadline=None)
@given(seed=seeds)
def test_bm_fit_matches_explicit_inverse(seed):
    t, rng = _tree(seed, lo=3)
    y = rng.normal(size=t.n_leaves)
    fit = bm_fit(t, y)
    C = t.mrca_depth_matrix()
    assert fit.mu_hat == pytest.approx(gls_mean(C, y), abs=1e-9)
    assert fit.sigma2_hat == pytest.approx(bm_sigma2(C, y, fit.mu_hat), rel=1e-8)


@settings(max_examples=60, deadline=None)
@given(seed=seeds)
def test_loo_matches_block_conditional_mean(seed):
    t, rng = _tree(seed)
    y = rng.normal(size=t.n_leaves) * 3
    fit = bm_fit(t, y)
    np.testing.assert_allclose(loo_predict(fit, y), loo_block(t.mrca_depth_matrix(), y, fit.mu_hat), atol=1e-9, rtol=0)


@settings(max_examples=40, deadline=None)
@given(seed=seeds)
def test_ancestral_states_match_joint_gaussian(seed):
    t, rng = _tree(seed)
    y = rng.normal(size=t.n_leaves)
    fit = bm_fit(t, y)
    asr = ancestral_states(fit, y, samples_per_edge=5)
    np.testing.assert_allclose(asr.node_mean, asr_joint(t, y, fit.mu_hat), atol=1e-9, rtol=0)
    # edge samples run from the parent's mean to the child's
    for u, s in asr.edge_samples.items():
        assert s.shape == (5, 2)
        assert s[0, 1] == pytest.approx(asr.node_mean[t.parent[u]])
        assert s[-1, 1] == pytest.approx(asr.node_mean[u])


def test_two_leaf_loo_predicts_root_mean():
    t = to_ultrametric(Dendrogram(2, [[0, 1]], [1.0]))
    y = np.array([1.0, 3.0])
    fit = bm_fit(t, y)
    assert fit.mu_hat == pytest.approx(2.0)
    # the leaves share no path (C = I), so each prediction is just mu
    np.testing.assert_allclose(loo_predict(fit, y), [2.0, 2.0])


def test_constant_trait_floors_sigma2():
    t = to_ultrametric(Dendrogram(3, [[0, 1], [2, 3]], [1.0, 2.0]))
    with pytest.warns(RuntimeWarning, match="clamped"):
        fit = bm_fit(t, np.full(3, 4.0))
    assert fit.sigma2_hat == pytest.approx(1e-12)
    np.testing.assert_allclose(loo_predict(fit, np.full(3, 4.0)), 4.0)


def test_loo_is_exact_on_cherries():
    # sibling leaves at a tiny distance predict each other almost exactly
    t = to_ultrametric(Dendrogram(4, [[0, 1], [2, 3], [4, 5]], [1e-6, 1e-6, 10.0]))
    y = np.array([1.0, 1.0, -2.0, -2.0])
    pred = loo_predict(bm_fit(t, y), y)
    np.testing.assert_allclose(pred, y, atol=1e-5)


# ---------------------------------------------------------------- Markov chain


@pytest.mark.parametrize("k", [2, 3, 5])
@pytest.mark.parametrize("qt", [0.0, 0.01, 0.7, 5.0])
def test_transition_matrix_matches_expm(k, qt):
    np.testing.assert_allclose(transition_matrix(k, 1.0, qt), er_transition(k, 1.0, qt), atol=1e-14)


def test_transition_limits():
    np.testing.assert_allclose(transition_matrix(3, 2.0, 0.0), np.eye(3))
    np.testing.assert_allclose(transition_matrix(3, 2.0, 1e6), np.full((3, 3), 1 / 3))


def _labels(rng, n, k, missing=True):
    states = [chr(ord("a") + i) for i in range(k)]
    lab = [states[int(i)] for i in rng.integers(0, k, size=n)]
    # make sure every state occurs so the state set is fixed
    for i, s in enumerate(states[: min(k, n)]):
        lab[i] = s
    if missing and n > k and rng.random() < 0.5:
        lab[int(rng.integers(k, n))] = None
    return lab, tuple(states)


@settings(max_examples=60, deadline=None)
@given(seed=seeds, k=st.integers(2, 3), q=st.floats(0.01, 5.0))
def test_pruning_matches_enumeration(seed, k, q):
    t, rng = _tree(seed, lo=2, hi=5)
    labels, states = _labels(rng, t.n_leaves, k)
    ll, _ = enumerate_states(t, labels, q, states)
    assert pruning_loglik(t, labels, q, states) == pytest.approx(ll, abs=1e-10, rel=0)


@settings(max_examples=60, deadline=None)
@given(seed=seeds, k=st.integers(2, 3), q=st.floats(0.01, 5.0))
def test_marginals_match_enumeration(seed, k, q):
    from dendro_evo.ctmc import CtmcFit

    t, rng = _tree(seed, lo=2, hi=5)
    labels, states = _labels(rng, t.n_leaves, k)
    fit = CtmcFit(states, q, np.full(k, 1 / k), float("nan"))
    _, marg = enumerate_states(t, labels, q, states)
    np.testing.assert_allclose(marginal_posteriors(fit, t, labels).probs, marg, atol=1e-10, rtol=0)


@settings(max_examples=30, deadline=None)
@given(seed=seeds)
def test_holdout_sweep_equals_masking_each_leaf(seed):
    t, rng = _tree(seed, lo=3, hi=8)
    labels, states = _labels(rng, t.n_leaves, 3, missing=False)
    fit = fit_rate(t, labels, states)
    sweep = holdout_posteriors(fit, t, labels)
    for i in range(t.n_leaves):
        np.testing.assert_allclose(sweep[i], holdout_leaf_posterior(fit, t, labels, i), atol=1e-12)


def test_holdout_posterior_is_enumeration_with_leaf_masked():
    t, rng = _tree(11, lo=4, hi=4)
    labels, states = _labels(rng, 4, 2, missing=False)
    fit = fit_rate(t, labels, states)
    masked = list(labels)
    masked[2] = None
    _, marg = enumerate_states(t, masked, fit.q_hat, states)
    np.testing.assert_allclose(holdout_posteriors(fit, t, labels)[2], marg[2], atol=1e-10)


def test_fit_rate_maximizes_likelihood():
    t, rng = _tree(3, lo=8, hi=8)
    labels = ["a", "b", "a", "b", "b", "a", "a", "b"]
    fit = fit_rate(t, labels)
    grid = np.exp(np.linspace(math.log(1e-4), math.log(1e3 / t.tree_height), 400))
    best = max(pruning_loglik(t, labels, q) for q in grid)
    assert fit.log_lik >= best - 1e-9
    assert fit.log_lik == pytest.approx(pruning_loglik(t, labels, fit.q_hat), abs=1e-12)


def test_uniform_labels_drive_rate_to_lower_bound():
    t, _ = _tree(4, lo=5, hi=5)
    fit = fit_rate(t, ["x"] * 5, states=("x", "y"))
    assert fit.q_hat == pytest.approx(Q_MIN)


def test_all_missing_labels_rejected():
    t, _ = _tree(5, lo=3, hi=3)
    with pytest.raises(LikelihoodError):
        pruning_loglik(t, [None, None, None], 1.0, ("a", "b"))


def test_brier_hand_value():
    # ((1-.7)^2 + .2^2 + .1^2) / 3
    assert brier([0.7, 0.2, 0.1], 0) == pytest.approx(0.14 / 3, abs=1e-15)
    assert brier([0.7, 0.2, 0.1], "b", states=("a", "b", "c")) == pytest.approx((0.49 + 0.64 + 0.01) / 3)


def test_no_warnings_on_deep_trees():
    # 200 leaves: scaling must keep the pruning recursion finite
    rng = np.random.default_rng(9)
    t = to_ultrametric(random_dendrogram(rng, 200))
    labels = [str(v) for v in rng.integers(0, 4, size=200)]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fit = fit_rate(t, labels)
    assert np.isfinite(fit.log_lik)
