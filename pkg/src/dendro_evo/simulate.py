"""Synthetic datasets.

Random streams
--------------
Every generator uses numpy's PCG64 seeded through ``SeedSequence``.  In
:func:`simulate_tree_data` feature ``j`` (0-based) draws from its own
stream ``SeedSequence(seed, spawn_key=(j,))``; within a stream, level ``k``
consumes ``2**k`` standard normals: first the noise of the ``2**(k-1)``
children that keep their parent's index, then the noise of the children at
index ``2**(k-1) + i``.  Output therefore does not depend on thread count
or on how many features are generated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import FeatureMatrix
from .tree import Dendrogram

DEFAULT_SIGMA = tuple(2.0 ** (j - 3) for j in range(1, 7))


@dataclass(frozen=True)
class SimConfig:
    depth: int = 7
    n_features: int = 6
    sigma: tuple = field(default=DEFAULT_SIGMA)
    seed: int = 0
    noise_scale_is_variance: bool = True

    def __post_init__(self):
        object.__setattr__(self, "sigma", tuple(float(s) for s in self.sigma))
        if self.depth < 1:
            raise ValueError("depth must be at least 1")
        if len(self.sigma) != self.n_features:
            raise ValueError("sigma must have one entry per feature")
        if any(s <= 0 for s in self.sigma):
            raise ValueError("sigma entries must be positive")


def generating_tree(depth: int) -> Dendrogram:
    """The complete binary tree behind :func:`simulate_tree_data`.

    A node at level ``k`` with index ``i`` has children ``i`` and
    ``2**k + i`` at level ``k + 1``; leaves are the level-``depth`` indices.
    Merges at level ``k`` sit at height ``depth - k``.
    """
    n = 2**depth
    ids = np.arange(n)  # node id of each position at the current level
    children, heights = [], []
    for k in range(depth - 1, -1, -1):
        half = 2**k
        nxt = np.empty(half, dtype=np.int64)
        for i in range(half):
            children.append((ids[i], ids[half + i]))
            heights.append(float(depth - k))
            nxt[i] = n + len(children) - 1
        ids = nxt
    labels = tuple(f"t{i + 1}" for i in range(n))
    return Dendrogram(n, np.array(children, dtype=np.int64), np.array(heights), labels)


def simulate_tree_data(cfg: SimConfig) -> tuple[FeatureMatrix, Dendrogram]:
    """Features evolved by recursive doubling along a complete binary tree.

    At level ``k`` every node spawns two children, each adding independent
    N(0, sigma_j**k) noise (sigma_j**k is a variance unless
    ``noise_scale_is_variance`` is off, then it is the standard deviation).
    Returns a ``2**depth`` x ``n_features`` matrix and the generating tree.
    """
    K = cfg.depth
    n = 2**K
    out = np.empty((n, cfg.n_features))
    for j, s in enumerate(cfg.sigma):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=(j,))))
        theta = np.zeros(1)
        for k in range(1, K + 1):
            scale = s ** (k / 2) if cfg.noise_scale_is_variance else s**k
            z = rng.standard_normal(2**k) * scale
            half = 2 ** (k - 1)
            theta = np.concatenate([theta + z[:half], theta + z[half:]])
        out[:, j] = theta
    tree = generating_tree(K)
    names = tuple(f"X{j + 1}" for j in range(cfg.n_features))
    return FeatureMatrix.from_array(out, names, tree.leaf_labels), tree


def simulate_two_gaussians(n: int = 250, seed: int = 0) -> tuple[FeatureMatrix, np.ndarray]:
    """Y ~ Bernoulli(1/2); (X1, X2) | Y ~ N((2Y, 2Y), I)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    y = rng.integers(0, 2, size=n)
    x = rng.standard_normal((n, 2)) + 2.0 * y[:, None]
    return FeatureMatrix.from_array(x, ("X1", "X2")), np.array([str(v) for v in y], dtype=object)
