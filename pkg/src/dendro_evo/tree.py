"""Dendrogram representation, ultrametric edge lengths, cophenetic distances
and k-cuts.

Node ids follow one convention everywhere: leaves are ``0..n-1`` and the
internal node created by merge ``m`` is ``n + m``.  The root is ``2n - 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

DEFAULT_EPS = 1e-9


class DegenerateTreeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dendrogram:
    """Merge-sequence encoding of a rooted binary tree.

    Attributes
    ----------
    n_leaves : int
    children : ndarray of int, shape (n_leaves - 1, 2)
        ``children[m]`` are the two node ids joined by merge ``m``.
    heights : ndarray of float, shape (n_leaves - 1,)
        Merge heights.  Need not be monotone (centroid/median linkage).
    leaf_labels : tuple of str
    """

    n_leaves: int
    children: np.ndarray
    heights: np.ndarray
    leaf_labels: tuple = field(default=())

    def __post_init__(self):
        n = int(self.n_leaves)
        children = np.asarray(self.children, dtype=np.int64).reshape(-1, 2)
        heights = np.asarray(self.heights, dtype=float).reshape(-1)
        labels = tuple(str(s) for s in self.leaf_labels) or tuple(str(i) for i in range(n))
        object.__setattr__(self, "n_leaves", n)
        object.__setattr__(self, "children", children)
        object.__setattr__(self, "heights", heights)
        object.__setattr__(self, "leaf_labels", labels)
        children.setflags(write=False)
        heights.setflags(write=False)
        self._validate()

    def _validate(self):
        n = self.n_leaves
        if n < 1:
            raise DegenerateTreeError("degenerate tree")
        if self.children.shape[0] != n - 1 or self.heights.shape[0] != n - 1:
            raise ValueError(f"expected {n - 1} merges, got {self.children.shape[0]}")
        if len(self.leaf_labels) != n:
            raise ValueError("leaf_labels length does not match n_leaves")
        if np.any(self.heights < 0) or not np.all(np.isfinite(self.heights)):
            raise ValueError("merge heights must be finite and nonnegative")
        used = np.zeros(2 * n - 1, dtype=bool)
        for m, (a, b) in enumerate(self.children):
            for c in (a, b):
                if c < 0 or c >= n + m:
                    raise ValueError(f"merge {m} references node {c} that does not exist yet")
                if used[c]:
                    raise ValueError(f"node {c} is merged twice")
                used[c] = True
        if not np.all(used[:-1]):
            raise ValueError("some node is never merged")

    @classmethod
    def from_linkage(cls, Z, leaf_labels: Sequence[str] = ()) -> "Dendrogram":
        """Build from a scipy-style linkage matrix (only the first 3 columns are read)."""
        Z = np.asarray(Z, dtype=float)
        return cls(Z.shape[0] + 1, Z[:, :2].astype(np.int64), Z[:, 2], tuple(leaf_labels))

    def to_linkage(self) -> np.ndarray:
        """Scipy-style linkage matrix with cluster sizes in the 4th column."""
        sizes = self.subtree_sizes
        n = self.n_leaves
        return np.column_stack([self.children.astype(float), self.heights, sizes[n:].astype(float)])

    @property
    def n_nodes(self) -> int:
        return 2 * self.n_leaves - 1

    @property
    def root(self) -> int:
        return 2 * self.n_leaves - 2

    def node_height(self, u: int) -> float:
        return 0.0 if u < self.n_leaves else float(self.heights[u - self.n_leaves])

    @cached_property
    def node_heights(self) -> np.ndarray:
        return np.concatenate([np.zeros(self.n_leaves), self.heights])

    @cached_property
    def parent(self) -> np.ndarray:
        """Parent id of every node; -1 for the root."""
        par = np.full(self.n_nodes, -1, dtype=np.int64)
        for m, (a, b) in enumerate(self.children):
            par[a] = par[b] = self.n_leaves + m
        return par

    @cached_property
    def subtree_sizes(self) -> np.ndarray:
        n = self.n_leaves
        sizes = np.ones(self.n_nodes, dtype=np.int64)
        for m, (a, b) in enumerate(self.children):
            sizes[n + m] = sizes[a] + sizes[b]
        return sizes

    @cached_property
    def leaf_order(self) -> list[int]:
        """Leaves left to right in the drawing order (left child first)."""
        order: list[int] = []
        stack = [self.root]
        n = self.n_leaves
        while stack:
            u = stack.pop()
            if u < n:
                order.append(u)
            else:
                a, b = self.children[u - n]
                stack.append(int(b))
                stack.append(int(a))
        return order

    def descendants(self, u: int) -> list[int]:
        """Leaf ids below node ``u``."""
        n = self.n_leaves
        out, stack = [], [u]
        while stack:
            v = stack.pop()
            if v < n:
                out.append(v)
            else:
                stack.extend(int(c) for c in self.children[v - n])
        return sorted(out)


@dataclass(frozen=True, eq=False)
class UltrametricTree:
    """Edge-length view of a dendrogram.

    ``node_depth`` is the distance from the root, ``edge_length[u]`` the length
    of the edge above ``u`` (0 for the root).
    """

    dendrogram: Dendrogram
    parent: np.ndarray
    edge_length: np.ndarray
    node_depth: np.ndarray
    tree_height: float

    @property
    def n_leaves(self) -> int:
        return self.dendrogram.n_leaves

    @property
    def n_nodes(self) -> int:
        return self.dendrogram.n_nodes

    @property
    def root(self) -> int:
        return self.dendrogram.root

    @property
    def children(self) -> np.ndarray:
        return self.dendrogram.children

    def postorder(self) -> range:
        """Internal node ids in an order where children precede parents."""
        n = self.n_leaves
        return range(n, 2 * n - 1)

    def node_leaf_shared_depth(self) -> np.ndarray:
        """Matrix ``S`` of shape (n_nodes, n_leaves) with ``S[u, i]`` the depth
        of the most recent common ancestor of node ``u`` and leaf ``i``."""
        d = self.dendrogram
        n = d.n_leaves
        order = d.leaf_order
        pos = np.empty(n, dtype=np.int64)
        pos[order] = np.arange(n)
        # leaves of every subtree are a contiguous run of the drawing order
        first = np.empty(d.n_nodes, dtype=np.int64)
        first[:n] = pos
        for m, (a, b) in enumerate(d.children):
            first[n + m] = min(first[a], first[b])
        sizes = d.subtree_sizes
        S = np.zeros((d.n_nodes, n))
        order_arr = np.asarray(order)
        for u in range(d.n_nodes - 2, -1, -1):
            S[u] = S[self.parent[u]]
            below = order_arr[first[u]:first[u] + sizes[u]]
            S[u, below] = self.node_depth[u]
        return S

    def mrca_depth_matrix(self) -> np.ndarray:
        """Leaf-by-leaf shared root-path length: the Brownian covariance at unit rate."""
        d = self.dendrogram
        n = d.n_leaves
        C = np.zeros((n, n))
        members: dict[int, list[int]] = {i: [i] for i in range(n)}
        for m, (a, b) in enumerate(d.children):
            la, lb = members.pop(int(a)), members.pop(int(b))
            h = self.node_depth[n + m]
            C[np.ix_(la, lb)] = h
            C[np.ix_(lb, la)] = h
            members[n + m] = la + lb
        C[np.diag_indices(n)] = self.node_depth[:n]
        return C

    def to_newick(self) -> str:
        d = self.dendrogram
        n = d.n_leaves

        def label(u):
            s = d.leaf_labels[u]
            if any(c in s for c in " ():,;[]'\t"):
                s = "'" + s.replace("'", "''") + "'"
            return s

        def rec(u):
            # iterative would be nicer for very deep trees; dendrograms here stay < 1000 leaves
            if u < n:
                body = label(u)
            else:
                a, b = d.children[u - n]
                body = f"({rec(int(a))},{rec(int(b))})"
            if u == d.root:
                return body
            return f"{body}:{self.edge_length[u]:.12g}"

        import sys

        limit = sys.getrecursionlimit()
        if n + 100 > limit:
            sys.setrecursionlimit(n + 100)
        try:
            return rec(d.root) + ";"
        finally:
            sys.setrecursionlimit(limit)


def to_ultrametric(d: Dendrogram, eps: float = DEFAULT_EPS) -> UltrametricTree:
    """Convert merge heights into edge lengths.

    Node depth is ``H - height`` where ``H`` is the largest merge height.  Any
    edge that would come out shorter than ``eps`` (height inversions, zero-
    height merges) is clamped to ``eps``; descendants keep their own depth
    unless they too are pushed past it.  Leaf edges are then stretched so all
    leaves sit at the same depth, which is reported as ``tree_height``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if d.n_leaves < 2:
        raise DegenerateTreeError("degenerate tree")
    n = d.n_leaves
    total = d.n_nodes
    H = float(d.heights.max())
    heights = d.node_heights
    par = d.parent
    depth = np.zeros(total)
    for u in range(total - 2, n - 1, -1):
        depth[u] = max(H - heights[u], depth[par[u]] + eps)
    leaf_floor = depth[par[:n]] + eps
    tree_height = max(H, float(leaf_floor.max()))
    depth[:n] = tree_height
    edge = np.zeros(total)
    edge[:-1] = depth[:-1] - depth[par[:-1]]
    for arr in (par, edge, depth):
        arr.setflags(write=False)
    return UltrametricTree(d, par, edge, depth, tree_height)


def cophenetic_matrix(d: Dendrogram) -> np.ndarray:
    """Merge height of the most recent common ancestor for every leaf pair."""
    n = d.n_leaves
    out = np.zeros((n, n))
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    for m, (a, b) in enumerate(d.children):
        la, lb = members.pop(int(a)), members.pop(int(b))
        h = d.heights[m]
        out[np.ix_(la, lb)] = h
        out[np.ix_(lb, la)] = h
        members[n + m] = la + lb
    return out


@dataclass(frozen=True)
class Partition:
    assignment: np.ndarray
    k: int

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        if a.size and (a.min() < 0 or set(np.unique(a).tolist()) != set(range(self.k))):
            raise ValueError("every cluster index in 0..k-1 must be used")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)


def cut(d: Dendrogram, k: int) -> Partition:
    """Undo the last ``k - 1`` merges; clusters are numbered by first leaf."""
    n = d.n_leaves
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    # union the first n - k merges
    owner = np.arange(2 * n - 1)
    for m in range(n - k):
        a, b = d.children[m]
        owner[a] = owner[b] = n + m
    # resolve each leaf to its top-most surviving ancestor
    top = np.arange(2 * n - 1)
    for u in range(2 * n - 2, -1, -1):
        top[u] = top[owner[u]] if owner[u] != u else u
    roots = top[:n]
    assignment = np.empty(n, dtype=np.int64)
    seen: dict[int, int] = {}
    for i, r in enumerate(roots):
        assignment[i] = seen.setdefault(int(r), len(seen))
    return Partition(assignment, k)
