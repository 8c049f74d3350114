"""Dendrogram scores.

``cvl`` holds out one feature at a time, rebuilds the dendrogram without
it and asks an evolutionary model on that tree to predict the held-out
feature leaf by leaf.  ``pfis`` does the same on the full dendrogram, one
score per feature.  The remaining functions are the partition-based and
correlation-based comparison scores.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.optimize import linear_sum_assignment
from sklearn.metrics import adjusted_rand_score, f1_score

from .brownian import DegenerateCovarianceError, bm_fit, loo_predict
from .clustering import DistanceMatrix, LinkageSpec, build_dendrogram, standardize
from .ctmc import LikelihoodError, brier, fit_rate, holdout_posteriors
from .data import CATEGORICAL, CONTINUOUS, FeatureMatrix
from .tree import DEFAULT_EPS, Dendrogram, DegenerateTreeError, Partition, cophenetic_matrix, cut, to_ultrametric

log = logging.getLogger(__name__)


class SkippedFeatureWarning(UserWarning):
    pass


class DegenerateScoreError(ValueError):
    pass


def usable_features(x: FeatureMatrix, warn: bool = True) -> FeatureMatrix:
    """Drop features that cannot be scored: constant continuous columns and
    categorical columns with a single level.  Values are left untouched."""
    keep, dropped = [], []
    for j, (col, kind) in enumerate(zip(x.columns, x.kinds)):
        if len(set(col.tolist())) < 2:
            dropped.append(x.names[j])
        else:
            keep.append(j)
    if dropped and warn:
        warnings.warn(f"constant feature(s) excluded: {', '.join(dropped)}", SkippedFeatureWarning, stacklevel=2)
    return x.select(keep) if dropped else x


def targets(x: FeatureMatrix) -> FeatureMatrix:
    """Prediction targets: continuous columns standardized, categorical as is."""
    return standardize(x, warn=False)[0]


def feature_losses(tree, y: np.ndarray, kind: str) -> np.ndarray:
    """Per-leaf inaccuracy of leave-one-out predictions of ``y`` on ``tree``.

    Squared error for continuous values (expected already standardized),
    Brier score for categorical ones.
    """
    if kind == CONTINUOUS:
        fit = bm_fit(tree, y)
        return (y - loo_predict(fit, y)) ** 2
    labels = [str(v) for v in y]
    fit = fit_rate(tree, labels)
    post = holdout_posteriors(fit, tree, labels)
    index = {s: a for a, s in enumerate(fit.states)}
    return np.array([brier(post[i], index[v]) for i, v in enumerate(labels)])


_MODEL_ERRORS = (DegenerateTreeError, DegenerateCovarianceError, LikelihoodError, np.linalg.LinAlgError)


@dataclass
class CvlResult:
    cvl: float
    per_feature_loss: np.ndarray  # NaN where a feature was skipped
    feature_names: tuple
    fold_trees: list = field(default_factory=list, repr=False)  # Dendrogram or None per feature


def cvl(
    x: FeatureMatrix,
    method: LinkageSpec | str,
    metric: str = "euclidean",
    standardize_features: bool = True,
    eps: float = DEFAULT_EPS,
) -> CvlResult:
    """Cross-validated loss of a clustering recipe.

    For every feature, the dendrogram is rebuilt on the other features with
    the same method and metric, the held-out feature is predicted at every
    leaf from the remaining leaves, and the per-leaf inaccuracies are
    averaged.  The loss is the mean over features.  Features whose fold
    fails (no continuous features left, degenerate tree or model) are
    skipped with a warning.
    """
    x = usable_features(x)
    if x.p < 2:
        raise ValueError("cvl needs at least 2 usable features")
    y = targets(x)
    losses = np.full(x.p, np.nan)
    trees: list = []
    for j in range(x.p):
        rest = x.drop(j)
        if not rest.continuous_indices():
            warnings.warn(f"feature {x.names[j]!r} skipped: no continuous features left to cluster on", SkippedFeatureWarning)
            trees.append(None)
            continue
        d = build_dendrogram(rest, method, metric, standardize_features=standardize_features)
        trees.append(d)
        try:
            tree = to_ultrametric(d, eps)
            losses[j] = feature_losses(tree, y.columns[j], y.kinds[j]).mean()
        except _MODEL_ERRORS as exc:
            warnings.warn(f"feature {x.names[j]!r} skipped: {exc}", SkippedFeatureWarning)
    if np.all(np.isnan(losses)):
        raise DegenerateScoreError("every feature was skipped")
    return CvlResult(float(np.nanmean(losses)), losses, x.names, trees)


def pfis(x: FeatureMatrix, d: Dendrogram, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Importance of each feature for a dendrogram built on all of them.

    One minus the mean leave-one-out inaccuracy on the full tree; for
    standardized continuous features this is an R^2.  Features dropped as
    unusable get NaN.
    """
    usable = targets(usable_features(x))
    tree = to_ultrametric(d, eps)
    out = np.full(x.p, np.nan)
    pos = {name: j for j, name in enumerate(x.names)}
    for j, name in enumerate(usable.names):
        try:
            out[pos[name]] = 1.0 - feature_losses(tree, usable.columns[j], usable.kinds[j]).mean()
        except _MODEL_ERRORS as exc:
            warnings.warn(f"feature {name!r} skipped: {exc}", SkippedFeatureWarning)
    return out


def _within_rms(y: np.ndarray, assignment: np.ndarray) -> float:
    total = 0.0
    for c in np.unique(assignment):
        v = y[assignment == c]
        total += ((v - v.mean()) ** 2).sum()
    return math.sqrt(total / y.shape[0])


def fom(
    x: FeatureMatrix,
    method: LinkageSpec | str,
    k: int,
    metric: str = "euclidean",
    standardize_features: bool = True,
    fold_trees: Sequence | None = None,
) -> float:
    """Figure of merit: within-cluster RMS deviation of each held-out
    continuous feature under the k-cut of the dendrogram built without it,
    averaged over features.

    ``fold_trees`` may pass the leave-one-feature-out dendrograms already
    built by :func:`cvl` (same order as the usable features).
    """
    x = usable_features(x, warn=False)
    if not 2 <= k <= x.n:
        raise ValueError(f"k must be in 2..{x.n}, got {k}")
    y = targets(x)
    terms = []
    for j in x.continuous_indices():
        d = fold_trees[j] if fold_trees is not None else None
        if d is None:
            rest = x.drop(j)
            if not rest.continuous_indices():
                continue
            d = build_dendrogram(rest, method, metric, standardize_features=standardize_features)
        terms.append(_within_rms(y.columns[j], cut(d, k).assignment))
    if not terms:
        raise DegenerateScoreError("no continuous feature to compute FOM on")
    return float(np.mean(terms))


def _upper(m: np.ndarray) -> np.ndarray:
    return m[np.triu_indices(m.shape[0], 1)]


def cophenetic_correlation(dm: DistanceMatrix | np.ndarray, d: Dendrogram) -> float:
    """Pearson correlation between input distances and merge-height distances."""
    D = dm.entries if isinstance(dm, DistanceMatrix) else np.asarray(dm, dtype=float)
    if D.shape[0] < 3:
        raise ValueError("cophenetic correlation needs at least 3 objects")
    a, b = _upper(D), _upper(cophenetic_matrix(d))
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise DegenerateScoreError("degenerate: zero variance in distances")
    return float(np.corrcoef(a, b)[0, 1])


def ari(p: Partition | np.ndarray, labels) -> float:
    assignment = p.assignment if isinstance(p, Partition) else np.asarray(p)
    labels = np.asarray(labels)
    if assignment.shape[0] != labels.shape[0]:
        raise ValueError("partition and labels differ in length")
    return float(adjusted_rand_score(labels, assignment))


def assign_labels(assignment: np.ndarray, labels: np.ndarray, classes: Sequence, matching: str = "majority") -> np.ndarray:
    """Label every cluster.  ``majority`` takes each cluster's most frequent
    label (ties to the first class); ``hungarian`` finds the one-to-one
    cluster/label matching with the most agreements."""
    clusters = np.unique(assignment)
    table = np.array([[np.sum((assignment == c) & (labels == lab)) for lab in classes] for c in clusters])
    if matching == "majority":
        chosen = {c: classes[int(np.argmax(row))] for c, row in zip(clusters, table)}
    elif matching == "hungarian":
        rows, cols = linear_sum_assignment(-table)
        chosen = {clusters[r]: classes[c] for r, c in zip(rows, cols)}
        for c, row in zip(clusters, table):
            chosen.setdefault(c, classes[int(np.argmax(row))])
    else:
        raise ValueError(f"unknown matching {matching!r}")
    return np.array([chosen[c] for c in assignment], dtype=object)


def f1_gold(d: Dendrogram, labels, matching: str = "majority", average: str = "macro") -> float:
    """F1 of the dendrogram used as a classifier: cut into as many clusters
    as there are labels, name each cluster after a label, score the result."""
    labels = np.asarray([str(v) for v in labels], dtype=object)
    classes = sorted(set(labels.tolist()))
    if len(classes) < 2:
        raise ValueError("f1_gold needs at least 2 distinct labels")
    if labels.shape[0] != d.n_leaves:
        raise ValueError("labels and dendrogram differ in size")
    k = min(len(classes), d.n_leaves)
    predicted = assign_labels(cut(d, k).assignment, labels, classes, matching)
    return float(f1_score(labels, predicted, labels=classes, average=average, zero_division=0))


def spearman(a, b) -> float:
    """Rank correlation with midranks for ties."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("inputs must be 1-D and of equal length")
    if a.shape[0] < 3:
        raise ValueError("spearman needs at least 3 pairs")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise DegenerateScoreError("constant input")
    return float(stats.spearmanr(a, b).statistic)


@dataclass
class ScoreReport:
    method_id: str
    feature_names: tuple = ()
    cvl: float = math.nan
    fom: float = math.nan
    coph: float = math.nan
    ari: float = math.nan
    f1_gold: float = math.nan
    per_feature_loss: np.ndarray = field(default_factory=lambda: np.empty(0))
    pfis: np.ndarray = field(default_factory=lambda: np.empty(0))
    error: str = ""

    SCALARS = ("cvl", "fom", "coph", "ari", "f1_gold")

    def to_dict(self) -> dict:
        def clean(v):
            v = float(v)
            return None if math.isnan(v) else v

        return {
            "method_id": self.method_id,
            **{k: clean(getattr(self, k)) for k in self.SCALARS},
            "per_feature_loss": {n: clean(v) for n, v in zip(self.feature_names, self.per_feature_loss)},
            "pfis": {n: clean(v) for n, v in zip(self.feature_names, self.pfis)},
            "error": self.error,
        }


def _fmt(v) -> str:
    v = float(v)
    return "" if math.isnan(v) else f"{v:.6f}"


def reports_to_csv(reports: Sequence[ScoreReport]) -> str:
    names: list[str] = []
    for r in reports:
        for n in r.feature_names:
            if n not in names:
                names.append(n)
    header = ["method_id", *ScoreReport.SCALARS, *(f"loss_{n}" for n in names), *(f"pfis_{n}" for n in names), "error"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in reports:
        loss = dict(zip(r.feature_names, r.per_feature_loss))
        imp = dict(zip(r.feature_names, r.pfis))
        w.writerow([
            r.method_id,
            *(_fmt(getattr(r, k)) for k in ScoreReport.SCALARS),
            *(_fmt(loss.get(n, math.nan)) for n in names),
            *(_fmt(imp.get(n, math.nan)) for n in names),
            r.error,
        ])
    return buf.getvalue()


def reports_to_json(reports: Sequence[ScoreReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2) + "\n"
