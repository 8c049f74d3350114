"""Distances and dendrogram construction.

Agglomerative linkages use the Lance-Williams update on a dense
dissimilarity matrix.  Conventions follow R's ``hclust``: the update is
applied to the dissimilarities as given, except ``ward_d2`` which works on
squared dissimilarities and reports square-rooted heights.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .data import CONTINUOUS, FeatureMatrix
from .tree import Dendrogram

METRICS = ("euclidean", "manhattan", "canberra")

AGGLOMERATIVE = ("single", "complete", "average", "mcquitty", "ward_d", "ward_d2", "median", "centroid")
AGNES_ALIASES = {"weighted_agnes": "mcquitty", "average_agnes": "average", "ward_agnes": "ward_d2"}
METHODS = AGGLOMERATIVE + tuple(AGNES_ALIASES) + ("diana",)

# names accepted on input, mapped to canonical method ids
_SPELLINGS = {
    "ward.d": "ward_d",
    "ward.d2": "ward_d2",
    "ward": "ward_d2",
    "weighted": "mcquitty",
    "wpgma": "mcquitty",
    "upgma": "average",
    "agnes.weighted": "weighted_agnes",
    "agnes.average": "average_agnes",
    "agnes.ward": "ward_agnes",
    "agnes_weighted": "weighted_agnes",
    "agnes_average": "average_agnes",
    "agnes_ward": "ward_agnes",
}


class ConstantFeatureWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LinkageSpec:
    method: str

    def __post_init__(self):
        m = _SPELLINGS.get(self.method.lower(), self.method.lower())
        if m not in METHODS:
            raise ValueError(f"unknown clustering method {self.method!r}; choose from {', '.join(METHODS)}")
        object.__setattr__(self, "method", m)

    @property
    def algorithm(self) -> str:
        """The linkage actually run (aliases resolved)."""
        return AGNES_ALIASES.get(self.method, self.method)


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    entries: np.ndarray
    metric: str

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def condensed(self) -> np.ndarray:
        return squareform(self.entries, checks=False)


def _canberra(x: np.ndarray) -> np.ndarray:
    # scipy's canberra already treats 0/0 terms as 0; kept explicit for clarity
    n = x.shape[0]
    out = np.zeros((n, n))
    ax = np.abs(x)
    for i in range(n):
        num = np.abs(x[i] - x[i + 1:])
        den = ax[i] + ax[i + 1:]
        with np.errstate(invalid="ignore", divide="ignore"):
            terms = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
        out[i, i + 1:] = terms.sum(axis=1)
    return out + out.T


def distances(x, metric: str = "euclidean") -> DistanceMatrix:
    """Pairwise distances between rows.

    ``x`` may be a FeatureMatrix (categorical columns are ignored) or a 2-D
    array.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {', '.join(METRICS)}")
    if isinstance(x, FeatureMatrix):
        x = x.continuous_array()
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("distance computation needs at least 2 rows")
    if metric == "canberra":
        D = _canberra(x)
    else:
        D = squareform(pdist(x, "cityblock" if metric == "manhattan" else "euclidean"))
    D.setflags(write=False)
    return DistanceMatrix(D, metric)


def standardize(x: FeatureMatrix, warn: bool = True) -> tuple[FeatureMatrix, list[str]]:
    """Center and scale continuous columns to sample variance 1.

    Constant columns are dropped and their names returned.  Categorical
    columns pass through.
    """
    cols, names, kinds, dropped = [], [], [], []
    for col, name, kind in zip(x.columns, x.names, x.kinds):
        if kind == CONTINUOUS:
            if x.n < 2 or np.ptp(col) == 0:
                dropped.append(name)
                continue
            col = (col - col.mean()) / col.std(ddof=1)
        cols.append(col)
        names.append(name)
        kinds.append(kind)
    if dropped and warn:
        warnings.warn(f"constant feature(s) excluded: {', '.join(dropped)}", ConstantFeatureWarning, stacklevel=2)
    return FeatureMatrix(tuple(cols), tuple(names), tuple(kinds), x.row_labels), dropped


def _lw_coefficients(method: str, ni: int, nj: int, nk: np.ndarray):
    if method == "single":
        return 0.5, 0.5, 0.0, -0.5
    if method == "complete":
        return 0.5, 0.5, 0.0, 0.5
    if method == "average":
        s = ni + nj
        return ni / s, nj / s, 0.0, 0.0
    if method == "mcquitty":
        return 0.5, 0.5, 0.0, 0.0
    if method == "median":
        return 0.5, 0.5, -0.25, 0.0
    if method == "centroid":
        s = ni + nj
        return ni / s, nj / s, -ni * nj / s**2, 0.0
    if method in ("ward_d", "ward_d2"):
        tot = ni + nj + nk
        return (ni + nk) / tot, (nj + nk) / tot, -nk / tot, 0.0
    raise ValueError(method)


def agglomerate(dm: DistanceMatrix | np.ndarray, spec: LinkageSpec | str, labels=()) -> Dendrogram:
    """Agglomerative clustering by the Lance-Williams recurrence.

    At each step the pair of active clusters with the smallest
    dissimilarity is merged; ties go to the lexicographically lowest
    (slot i, slot j) pair, and the merged cluster takes slot i.
    """
    if isinstance(spec, str):
        spec = LinkageSpec(spec)
    method = spec.algorithm
    if method == "diana":
        raise ValueError("use diana() for divisive clustering")
    D = np.array(dm.entries if isinstance(dm, DistanceMatrix) else dm, dtype=float)
    n = D.shape[0]
    if n < 2:
        raise ValueError("need at least 2 objects")
    if method == "ward_d2":
        D = D * D
    np.fill_diagonal(D, np.inf)
    size = np.ones(n, dtype=np.int64)
    node = np.arange(n)
    active = np.ones(n, dtype=bool)
    children = np.empty((n - 1, 2), dtype=np.int64)
    heights = np.empty(n - 1)
    for m in range(n - 1):
        # D is symmetric, so the first row-major minimum is the lowest (i, j), i < j
        i, j = divmod(int(np.argmin(D)), n)
        dij = D[i, j]
        children[m] = node[i], node[j]
        heights[m] = dij
        ni, nj = size[i], size[j]
        others = active.copy()
        others[[i, j]] = False
        k = np.flatnonzero(others)
        ai, aj, b, g = _lw_coefficients(method, ni, nj, size[k])
        dik, djk = D[i, k], D[j, k]
        new = ai * dik + aj * djk + b * dij + g * np.abs(dik - djk)
        D[i, k] = new
        D[k, i] = new
        D[j, :] = np.inf
        D[:, j] = np.inf
        active[j] = False
        size[i] = ni + nj
        node[i] = n + m
    if method == "ward_d2":
        heights = np.sqrt(np.maximum(heights, 0.0))
    # rounding can leave tiny negatives for median/centroid
    heights = np.maximum(heights, 0.0)
    return Dendrogram(n, children, heights, tuple(labels))


def _split(D: np.ndarray, members: list[int]) -> tuple[list[int], list[int]]:
    """One DIANA splinter step on ``members``; returns (splinter, remainder)."""
    sub = D[np.ix_(members, members)]
    m = len(members)
    avg = sub.sum(axis=1) / (m - 1)
    seed = int(np.argmax(avg))
    in_splinter = np.zeros(m, dtype=bool)
    in_splinter[seed] = True
    while in_splinter.sum() < m - 1:
        rest = ~in_splinter
        n_rest = rest.sum()
        to_rest = sub[:, rest].sum(axis=1) / (n_rest - 1)
        to_splinter = sub[:, in_splinter].mean(axis=1)
        diff = np.where(rest, to_rest - to_splinter, -np.inf)
        best = int(np.argmax(diff))
        if diff[best] <= 0:
            break
        in_splinter[best] = True
    splinter = [members[t] for t in range(m) if in_splinter[t]]
    rest = [members[t] for t in range(m) if not in_splinter[t]]
    return splinter, rest


def diana(dm: DistanceMatrix | np.ndarray, labels=()) -> Dendrogram:
    """Divisive analysis (Kaufman & Rousseeuw).

    The cluster with the largest diameter is split next; the split node's
    height is that diameter.  Splits are replayed in reverse to form the
    merge sequence, so heights come out nondecreasing.
    """
    D = np.asarray(dm.entries if isinstance(dm, DistanceMatrix) else dm, dtype=float)
    n = D.shape[0]
    if n < 2:
        raise ValueError("need at least 2 objects")

    def diameter(c):
        return float(D[np.ix_(c, c)].max()) if len(c) > 1 else 0.0

    # each entry: (members, diameter); splits recorded as (height, parts)
    pending = [(sorted(range(n)), diameter(list(range(n))))]
    splits = []
    while pending:
        # largest diameter first; earliest-created wins ties
        idx = max(range(len(pending)), key=lambda t: (pending[t][1], -t))
        members, diam = pending.pop(idx)
        a, b = _split(D, members)
        splits.append((diam, a, b))
        for part in (a, b):
            if len(part) > 1:
                pending.append((part, diameter(part)))

    node_of: dict[tuple, int] = {(i,): i for i in range(n)}
    children = []
    heights = []
    for diam, a, b in reversed(splits):
        ka, kb = tuple(sorted(a)), tuple(sorted(b))
        children.append((node_of[ka], node_of[kb]))
        heights.append(diam)
        node_of[tuple(sorted(a + b))] = n + len(children) - 1
    return Dendrogram(n, np.array(children, dtype=np.int64), np.array(heights), tuple(labels))


def build_dendrogram(
    x: FeatureMatrix,
    method: LinkageSpec | str,
    metric: str = "euclidean",
    standardize_features: bool = True,
) -> Dendrogram:
    """Cluster the rows of ``x`` using its continuous columns."""
    spec = LinkageSpec(method) if isinstance(method, str) else method
    if standardize_features:
        x, _ = standardize(x, warn=False)
    arr = x.continuous_array()
    if arr.shape[1] == 0:
        raise ValueError("no usable continuous features to cluster on")
    dm = distances(arr, metric)
    if spec.method == "diana":
        return diana(dm, x.row_labels)
    return agglomerate(dm, spec, x.row_labels)
