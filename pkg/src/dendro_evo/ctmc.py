"""Equal-rates Markov model for categorical features on a tree.

All off-diagonal rates equal ``q``.  Transition probabilities have a closed
form, so no matrix exponential is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tree import UltrametricTree

Q_MIN = 1e-8
Q_MAX_TIMES_HEIGHT = 1e4
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class LikelihoodError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CtmcFit:
    states: tuple
    q_hat: float
    root_prior: np.ndarray
    log_lik: float


@dataclass(frozen=True, eq=False)
class StatePosteriors:
    """Rows are nodes (``0..2n-2``), columns follow ``states``."""

    states: tuple
    probs: np.ndarray

    def __getitem__(self, u: int) -> np.ndarray:
        return self.probs[u]


def transition_matrix(n_states: int, q: float, t: float) -> np.ndarray:
    k = n_states
    decay = math.exp(-k * q * t)
    same = 1.0 / k + (1.0 - 1.0 / k) * decay
    diff = 1.0 / k - decay / k
    P = np.full((k, k), diff)
    np.fill_diagonal(P, same)
    return P


def _states_of(labels: Sequence, states: Sequence | None) -> tuple:
    if states is not None:
        return tuple(states)
    return tuple(sorted({str(v) for v in labels if v is not None}))


def _leaf_partials(labels: Sequence, states: tuple) -> np.ndarray:
    index = {s: a for a, s in enumerate(states)}
    L = np.ones((len(labels), len(states)))
    for i, v in enumerate(labels):
        if v is None:
            continue
        try:
            a = index[str(v)]
        except KeyError:
            raise ValueError(f"label {v!r} not among states {states}") from None
        L[i] = 0.0
        L[i, a] = 1.0
    return L


def _check(tree: UltrametricTree, labels: Sequence, states: tuple) -> None:
    if len(labels) != tree.n_leaves:
        raise ValueError(f"expected {tree.n_leaves} labels, got {len(labels)}")
    if all(v is None for v in labels):
        raise LikelihoodError("all labels are missing")
    if len(states) < 2:
        raise ValueError("need at least 2 states")


def _upward(tree: UltrametricTree, leaf_L: np.ndarray, q: float):
    """Post-order pass.  Returns normalized partials, child-to-parent
    messages and the accumulated log scale."""
    n = tree.n_leaves
    k = leaf_L.shape[1]
    partial = np.empty((tree.n_nodes, k))
    partial[:n] = leaf_L
    message = np.empty((tree.n_nodes, k))
    log_scale = 0.0
    edge = tree.edge_length
    for m, (a, b) in enumerate(tree.children):
        u = n + m
        prod = np.ones(k)
        for c in (a, b):
            message[c] = transition_matrix(k, q, edge[c]) @ partial[c]
            prod *= message[c]
        s = prod.max()
        if s <= 0 or not np.isfinite(s):
            raise LikelihoodError("non-finite likelihood")
        partial[u] = prod / s
        log_scale += math.log(s)
    return partial, message, log_scale


def pruning_loglik(tree: UltrametricTree, labels: Sequence, q: float, states: Sequence | None = None) -> float:
    """Log-likelihood by Felsenstein pruning with a uniform root prior.

    ``None`` entries in ``labels`` are missing leaves.
    """
    states = _states_of(labels, states)
    _check(tree, labels, states)
    if q <= 0:
        raise ValueError("q must be positive")
    partial, _, log_scale = _upward(tree, _leaf_partials(labels, states), q)
    k = len(states)
    return math.log(partial[tree.root].sum() / k) + log_scale


def fit_rate(tree: UltrametricTree, labels: Sequence, states: Sequence | None = None, rtol: float = 1e-6) -> CtmcFit:
    """Maximum-likelihood rate by golden-section search on log q.

    The search interval is ``[1e-8, 1e4 / tree_height]``; the endpoints are
    also evaluated so boundary optima are returned exactly.
    """
    states = _states_of(labels, states)
    _check(tree, labels, states)
    lo, hi = math.log(Q_MIN), math.log(Q_MAX_TIMES_HEIGHT / tree.tree_height)
    leaf_L = _leaf_partials(labels, states)
    k = len(states)

    def f(logq):
        partial, _, log_scale = _upward(tree, leaf_L, math.exp(logq))
        return math.log(partial[tree.root].sum() / k) + log_scale

    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    tol = math.log1p(rtol)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    candidates = [(fc, c), (fd, d), (f(lo), lo), (f(hi), hi)]
    if not all(np.isfinite(v) for v, _ in candidates):
        raise LikelihoodError("non-finite likelihood during rate optimization")
    # prefer the larger likelihood; ties resolved toward the smaller rate
    best_ll, best_logq = max(candidates, key=lambda t: (t[0], -t[1]))
    prior = np.full(k, 1.0 / k)
    return CtmcFit(states, math.exp(best_logq), prior, float(best_ll))


def _downward(tree: UltrametricTree, partial: np.ndarray, message: np.ndarray, prior: np.ndarray, q: float) -> np.ndarray:
    """Pre-order pass: ``outside[u]`` is proportional to the probability of
    all data outside the subtree of ``u`` jointly with each state at ``u``."""
    n = tree.n_leaves
    k = prior.shape[0]
    outside = np.empty((tree.n_nodes, k))
    outside[tree.root] = prior
    edge = tree.edge_length
    for m in range(n - 2, -1, -1):
        u = n + m
        a, b = tree.children[m]
        for c, sib in ((a, b), (b, a)):
            v = transition_matrix(k, q, edge[c]).T @ (outside[u] * message[sib])
            outside[c] = v / v.sum()
    return outside


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    return x / x.sum(axis=1, keepdims=True)


def marginal_posteriors(fit: CtmcFit, tree: UltrametricTree, labels: Sequence) -> StatePosteriors:
    """Exact marginal state distribution at every node given all observed leaves."""
    _check(tree, labels, fit.states)
    partial, message, _ = _upward(tree, _leaf_partials(labels, fit.states), fit.q_hat)
    outside = _downward(tree, partial, message, fit.root_prior, fit.q_hat)
    return StatePosteriors(fit.states, _normalize_rows(outside * partial))


def holdout_posteriors(fit: CtmcFit, tree: UltrametricTree, labels: Sequence) -> np.ndarray:
    """Posterior at every leaf with that leaf's own label masked.

    A leaf's outside vector never involves its own observation, so one
    up/down sweep serves all leaves.  Shape (n_leaves, n_states).
    """
    _check(tree, labels, fit.states)
    partial, message, _ = _upward(tree, _leaf_partials(labels, fit.states), fit.q_hat)
    outside = _downward(tree, partial, message, fit.root_prior, fit.q_hat)
    return _normalize_rows(outside[: tree.n_leaves])


def holdout_leaf_posterior(fit: CtmcFit, tree: UltrametricTree, labels: Sequence, i: int) -> np.ndarray:
    if not 0 <= i < tree.n_leaves:
        raise IndexError(f"leaf {i} does not exist")
    masked = list(labels)
    masked[i] = None
    posterior = marginal_posteriors(fit, tree, masked)
    return posterior.probs[i]


def brier(posterior, truth, states: Sequence | None = None) -> float:
    """Mean over categories of (indicator - predicted probability)^2.

    ``truth`` is a state label when ``states`` is given, otherwise an index.
    """
    p = np.asarray(posterior, dtype=float)
    a = list(states).index(truth) if states is not None else int(truth)
    onehot = np.zeros_like(p)
    onehot[a] = 1.0
    return float(np.mean((onehot - p) ** 2))
