"""Brownian motion on an ultrametric tree.

Leaf values are jointly Gaussian with mean ``mu`` and covariance
``sigma2 * C`` where ``C[i, j]`` is the shared root-path length of leaves
``i`` and ``j``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .tree import UltrametricTree

SIGMA2_FLOOR = 1e-12


class DegenerateCovarianceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BrownianFit:
    mu_hat: float
    sigma2_hat: float
    cov_factor: tuple  # (lower Cholesky factor, lower=True) as returned by cho_factor
    tree: UltrametricTree
    cov: np.ndarray

    def solve(self, b: np.ndarray) -> np.ndarray:
        return linalg.cho_solve(self.cov_factor, b)

    def precision(self) -> np.ndarray:
        """Inverse of the unit-rate leaf covariance."""
        return self.solve(np.eye(self.cov.shape[0]))


@dataclass(frozen=True, eq=False)
class AncestralStates:
    """Conditional means at every node plus interpolated edge values.

    ``node_mean`` covers all ``2n - 1`` nodes (leaves hold the observed
    values).  ``edge_samples[u]`` is an array of shape (k, 2) with columns
    (position along the edge from parent=0 to child=1, mean).
    """

    node_mean: np.ndarray
    edge_samples: dict

    def internal_means(self, n_leaves: int) -> np.ndarray:
        return self.node_mean[n_leaves:]


def bm_fit(tree: UltrametricTree, y) -> BrownianFit:
    """Maximum-likelihood root state and rate by generalized least squares."""
    y = np.asarray(y, dtype=float)
    n = tree.n_leaves
    if y.shape != (n,):
        raise ValueError(f"expected {n} values, got shape {y.shape}")
    if n < 2:
        raise ValueError("need at least 2 leaves")
    if not np.all(np.isfinite(y)):
        raise ValueError("feature values must be finite")
    if tree.tree_height <= 0:
        raise DegenerateCovarianceError("degenerate covariance")
    C = tree.mrca_depth_matrix()
    try:
        factor = linalg.cho_factor(C, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise DegenerateCovarianceError("degenerate covariance") from exc
    ones = np.ones(n)
    ci1 = linalg.cho_solve(factor, ones)
    mu = float(ci1 @ y / (ci1 @ ones))
    r = y - mu
    sigma2 = float(r @ linalg.cho_solve(factor, r) / n)
    if not np.isfinite(sigma2):
        raise DegenerateCovarianceError("degenerate covariance")
    if sigma2 < SIGMA2_FLOOR:
        warnings.warn("Brownian rate estimate is zero; clamped to 1e-12", RuntimeWarning, stacklevel=2)
        sigma2 = SIGMA2_FLOOR
    return BrownianFit(mu, sigma2, factor, tree, C)


def loo_predict(fit: BrownianFit, y) -> np.ndarray:
    """Conditional mean of each leaf given all the others.

    Uses ``y_i - [C^-1 r]_i / [C^-1]_ii`` with ``r = y - mu``; the fitted
    root state is held fixed across held-out leaves.
    """
    y = np.asarray(y, dtype=float)
    P = fit.precision()
    alpha = P @ (y - fit.mu_hat)
    return y - alpha / np.diag(P)


def ancestral_states(fit: BrownianFit, y, samples_per_edge: int = 16) -> AncestralStates:
    """Conditional expectation at every node given all leaves.

    Values along an edge interpolate linearly in depth between the parent
    and child means, which is exact under Brownian motion.
    """
    if samples_per_edge < 2:
        raise ValueError("samples_per_edge must be at least 2")
    y = np.asarray(y, dtype=float)
    tree = fit.tree
    S = tree.node_leaf_shared_depth()
    alpha = fit.solve(y - fit.mu_hat)
    means = fit.mu_hat + S @ alpha
    n = tree.n_leaves
    means[:n] = y
    means[tree.root] = fit.mu_hat
    t = np.linspace(0.0, 1.0, samples_per_edge)
    edges = {}
    for u in range(tree.n_nodes - 1):
        p = tree.parent[u]
        edges[u] = np.column_stack([t, (1 - t) * means[p] + t * means[u]])
    return AncestralStates(means, edges)
