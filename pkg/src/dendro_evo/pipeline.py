"""Scoring many clustering recipes on one dataset, optionally in parallel.

Results are always returned in grid order (methods outer, metrics inner),
whatever the worker count, so serialized output is identical.
"""

from __future__ import annotations

import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clustering import METRICS, LinkageSpec, build_dendrogram, distances, standardize
from .data import FeatureMatrix
from .scores import (
    ScoreReport,
    ari,
    cophenetic_correlation,
    cvl,
    f1_gold,
    fom,
    pfis,
    spearman,
    usable_features,
)
from .tree import cut

log = logging.getLogger(__name__)

# the 11 methods x 3 metrics grid used for benchmarking
GRID_METHODS = (
    "weighted_agnes", "average_agnes", "ward_agnes",
    "ward_d", "complete", "single", "ward_d2", "average", "mcquitty", "median",
    "diana",
)
THREADS_ENV = "DENDRO_EVO_THREADS"


def method_id(method: str, metric: str) -> str:
    return f"{LinkageSpec(method).method}:{metric}"


def resolve_workers(requested: int | None = None) -> int:
    """Worker count: the request (default: CPU count) capped by DENDRO_EVO_THREADS."""
    n = requested if requested else (os.cpu_count() or 1)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return max(1, n)


@dataclass(frozen=True)
class ScoreTask:
    features: FeatureMatrix
    method: str
    metric: str
    labels: np.ndarray | None = None
    k: int | None = None
    with_pfis: bool = True
    standardize: bool = True
    coph_metric: str = "euclidean"


def score_one(task: ScoreTask) -> ScoreReport:
    """Every score for one recipe.  Failures are recorded in ``error``
    instead of raised, so one bad cell does not abort a grid."""
    mid = method_id(task.method, task.metric)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            x = usable_features(task.features, warn=False)
            res = cvl(x, task.method, task.metric, standardize_features=task.standardize)
            report = ScoreReport(mid, x.names, cvl=res.cvl, per_feature_loss=res.per_feature_loss)
            d = build_dendrogram(x, task.method, task.metric, standardize_features=task.standardize)
            if task.with_pfis:
                report.pfis = pfis(x, d)
            else:
                report.pfis = np.full(x.p, np.nan)
            xd = standardize(x, warn=False)[0] if task.standardize else x
            report.coph = cophenetic_correlation(distances(xd, task.coph_metric), d)
            k = task.k
            if task.labels is not None:
                n_classes = len(set(str(v) for v in task.labels))
                k = k or n_classes
                report.f1_gold = f1_gold(d, task.labels)
                report.ari = ari(cut(d, k), task.labels)
            if k:
                report.fom = fom(x, task.method, k, task.metric, task.standardize, fold_trees=res.fold_trees)
        return report
    except Exception as exc:  # noqa: BLE001 - reported per grid cell
        log.warning("%s failed: %s", mid, exc)
        return ScoreReport(mid, error=f"{type(exc).__name__}: {exc}")


def run_tasks(tasks: Sequence[ScoreTask], workers: int = 1) -> list[ScoreReport]:
    if workers <= 1 or len(tasks) <= 1:
        return [score_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(score_one, tasks))


def score_grid(
    features: FeatureMatrix,
    methods: Sequence[str],
    metrics: Sequence[str] = ("euclidean",),
    labels=None,
    k: int | None = None,
    workers: int = 1,
    with_pfis: bool = True,
    standardize: bool = True,
) -> list[ScoreReport]:
    for m in metrics:
        if m not in METRICS:
            raise ValueError(f"unknown metric {m!r}")
    tasks = [
        ScoreTask(features, LinkageSpec(meth).method, metric, labels, k, with_pfis, standardize)
        for meth in methods
        for metric in metrics
    ]
    return run_tasks(tasks, workers)


def benchmark_correlations(reports: Sequence[ScoreReport]) -> dict[str, float]:
    """Spearman correlation of CVL, FOM, -COPH and -ARI against F1 over the
    grid cells that produced every score."""
    ok = [r for r in reports if not r.error and all(math.isfinite(getattr(r, s)) for s in ScoreReport.SCALARS)]
    out = {"n_methods": float(len(ok))}
    f1 = [r.f1_gold for r in ok]
    for key, values in (
        ("cvl", [r.cvl for r in ok]),
        ("fom", [r.fom for r in ok]),
        ("neg_coph", [-r.coph for r in ok]),
        ("neg_ari", [-r.ari for r in ok]),
    ):
        try:
            out[key] = spearman(values, f1)
        except ValueError:
            out[key] = math.nan
    return out


def benchmark(features: FeatureMatrix, labels, workers: int = 1, methods=GRID_METHODS, metrics=METRICS):
    reports = score_grid(features, methods, metrics, labels=labels, workers=workers, with_pfis=False)
    return reports, benchmark_correlations(reports)
