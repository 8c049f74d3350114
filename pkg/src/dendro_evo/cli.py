"""Command line interface.

    dendro-evo score      --input data.csv [--label COL] --methods mcquitty,average
    dendro-evo importance --input data.csv --method mcquitty
    dendro-evo render     --input data.csv --method mcquitty [--features A,B]
    dendro-evo simulate   tree|gaussians --seed 7
    dendro-evo benchmark  --input data.csv --label COL

Every command writes its artifacts plus ``manifest.json`` into
``--output-dir``.  Files are written to a temporary name and renamed into
place, and nothing time-dependent goes into them, so re-running a command
with the same arguments reproduces every file byte for byte.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .brownian import ancestral_states, bm_fit
from .clustering import AGNES_ALIASES, METHODS, METRICS, LinkageSpec, build_dendrogram
from .ctmc import fit_rate, marginal_posteriors
from .data import CONTINUOUS, KINDS, Dataset, FeatureMatrix, IngestError, ingest, write_csv
from .pipeline import GRID_METHODS, benchmark_correlations, method_id, resolve_workers, score_grid
from .render import COLORMAPS, RenderSpec, render_categorical, render_continuous, render_importance
from .scores import pfis, reports_to_csv, reports_to_json, usable_features
from .simulate import DEFAULT_SIGMA, SimConfig, simulate_tree_data, simulate_two_gaussians
from .tree import to_ultrametric

log = logging.getLogger("dendro_evo")

METHOD_HELP = (
    "comma-separated clustering methods: "
    + ", ".join(METHODS)
    + ".  R spellings are accepted too (ward.D, ward.D2, agnes.weighted, ...).  "
    + "The agnes variants are aliases, not separate implementations: "
    + ", ".join(f"{a} runs {b}" for a, b in AGNES_ALIASES.items())
    + "."
)


class CliError(Exception):
    pass


# ---------------------------------------------------------------- output


class Outputs:
    """Collects artifacts written under one directory, atomically."""

    def __init__(self, root: Path):
        self.root = root
        self.files: list[str] = []
        root.mkdir(parents=True, exist_ok=True)

    def _commit(self, name: str, write) -> Path:
        target = self.root / name
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".tmp-", suffix="-" + name)
        os.close(fd)
        try:
            write(Path(tmp))
            os.replace(tmp, target)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        if name not in self.files:
            self.files.append(name)
        return target

    def text(self, name: str, content: str) -> Path:
        return self._commit(name, lambda p: p.write_text(content, encoding="utf-8"))

    def table(self, name: str, fm: FeatureMatrix, labels=None, label_name: str = "label") -> Path:
        return self._commit(name, lambda p: write_csv(p, fm, labels, label_name))

    def manifest(self, command: str, config: dict) -> Path:
        doc = {
            "tool": "dendro-evo",
            "version": __version__,
            "command": command,
            "config": config,
            "outputs": sorted(self.files),
        }
        return self.text("manifest.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name).strip("_") or "x"


def _csv_list(s: str) -> list[str]:
    return [t.strip() for t in s.split(",") if t.strip()]


# ---------------------------------------------------------------- config


def _kinds(pairs: list[str]) -> dict[str, str]:
    out = {}
    for item in pairs or []:
        name, sep, kind = item.rpartition("=")
        if not sep or not name:
            raise CliError(f"--kind expects COLUMN=KIND, got {item!r}")
        if kind not in KINDS:
            raise CliError(f"--kind {item!r}: kind must be one of {', '.join(KINDS)}")
        out[name] = kind
    return out


def _methods(s: str) -> list[str]:
    names = _csv_list(s)
    if not names:
        raise CliError("no methods given")
    try:
        return [LinkageSpec(m).method for m in names]
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _metrics(s: str) -> list[str]:
    names = [m.lower() for m in _csv_list(s)]
    if not names:
        raise CliError("no metrics given")
    for m in names:
        if m not in METRICS:
            raise CliError(f"unknown metric {m!r}; choose from {', '.join(METRICS)}")
    return names


def _load(args) -> Dataset:
    if not args.input:
        raise CliError("--input is required")
    return ingest(args.input, _kinds(args.kind), label=args.label, row_names=args.row_names)


def _config(args, **extra) -> dict:
    cfg = {
        k: v
        for k, v in vars(args).items()
        if k not in ("func", "output_dir", "verbose", "workers", "command") and v is not None
    }
    if "input" in cfg:
        cfg["input"] = Path(cfg["input"]).name
    cfg.update(extra)
    return cfg


# ---------------------------------------------------------------- commands


def cmd_score(args) -> int:
    ds = _load(args)
    methods = _methods(args.methods)
    metrics = _metrics(args.metrics)
    if args.k is not None and args.k < 2:
        raise CliError("--k must be at least 2")
    workers = resolve_workers(args.workers)
    reports = score_grid(
        ds.features, methods, metrics, labels=ds.labels, k=args.k, workers=workers,
        with_pfis=not args.no_pfis, standardize=not args.no_standardize,
    )
    out = Outputs(Path(args.output_dir))
    out.text("scores.csv", reports_to_csv(reports))
    out.text("scores.json", reports_to_json(reports))
    out.manifest("score", _config(args, methods=methods, metrics=metrics))
    for r in reports:
        if r.error:
            print(f"{r.method_id}: {r.error}", file=sys.stderr)
    return 0


def _one_method(args) -> str:
    methods = _methods(args.method)
    if len(methods) != 1:
        raise CliError("give exactly one --method")
    return methods[0]


def cmd_importance(args) -> int:
    ds = _load(args)
    method = _one_method(args)
    metric = _metrics(args.metric)[0]
    x = usable_features(ds.features)
    d = build_dendrogram(x, method, metric, standardize_features=not args.no_standardize)
    scores = pfis(x, d)
    out = Outputs(Path(args.output_dir))
    order = sorted(range(x.p), key=lambda j: (-np.nan_to_num(scores[j], nan=-np.inf), j))
    lines = ["rank,feature,pfis"]
    for rank, j in enumerate(order, start=1):
        lines.append(f"{rank},{x.names[j]},{'' if np.isnan(scores[j]) else f'{scores[j]:.6f}'}")
    out.text("importance.csv", "\n".join(lines) + "\n")
    spec = RenderSpec(width=640, height=max(200, 40 + 22 * x.p), title=f"importance ({method_id(method, metric)})")
    out.text("importance.svg", render_importance(x.names, scores, spec))
    out.manifest("importance", _config(args, method=method, metric=metric))
    return 0


def cmd_render(args) -> int:
    ds = _load(args)
    method = _one_method(args)
    metric = _metrics(args.metric)[0]
    x = usable_features(ds.features)
    wanted = _csv_list(args.features) if args.features else list(x.names) + ([ds.label_name] if ds.labels is not None else [])
    for f in wanted:
        if f not in x.names and f != ds.label_name:
            raise CliError(f"unknown or unusable feature {f!r}")
    d = build_dendrogram(x, method, metric, standardize_features=not args.no_standardize)
    tree = to_ultrametric(d)
    spec = RenderSpec(
        width=args.width, height=args.height, colormap=args.colormap, orientation=args.orientation,
        samples_per_edge=args.samples_per_edge,
    )
    dataset = _safe(Path(args.input).stem)
    out = Outputs(Path(args.output_dir))
    for f in wanted:
        if f == ds.label_name:
            values, kind = [str(v) for v in ds.labels], "categorical"
        else:
            j = x.names.index(f)
            values, kind = x.columns[j], x.kinds[j]
        titled = RenderSpec(**{**spec.__dict__, "title": f"{f} ({method})"})
        if kind == CONTINUOUS:
            y = np.asarray(values, dtype=float)
            svg = render_continuous(d, ancestral_states(bm_fit(tree, y), y, spec.samples_per_edge), y, titled, tree)
        else:
            labels = [str(v) for v in values]
            post = marginal_posteriors(fit_rate(tree, labels), tree, labels)
            svg = render_categorical(d, post, labels, titled, tree)
        out.text(f"{dataset}_{_safe(f)}_{_safe(method)}.svg", svg)
    out.manifest("render", _config(args, method=method, metric=metric, features=wanted))
    return 0


def cmd_simulate(args) -> int:
    out = Outputs(Path(args.output_dir))
    if args.kind == "tree":
        sigma = tuple(float(s) for s in _csv_list(args.sigma)) if args.sigma else DEFAULT_SIGMA
        cfg = SimConfig(depth=args.depth, n_features=len(sigma), sigma=sigma, seed=args.seed,
                        noise_scale_is_variance=not args.sd)
        fm, tree = simulate_tree_data(cfg)
        out.table("sim_tree.csv", fm)
        out.text("sim_tree.nwk", to_ultrametric(tree).to_newick() + "\n")
        extra = {"sigma": list(sigma)}
    else:
        if args.n < 2:
            raise CliError("--n must be at least 2")
        fm, labels = simulate_two_gaussians(args.n, args.seed)
        out.table("sim_gaussians.csv", fm, labels, "Y")
        extra = {}
    out.manifest("simulate", _config(args, **extra))
    return 0


def cmd_benchmark(args) -> int:
    ds = _load(args)
    if ds.labels is None:
        raise CliError("benchmark needs a label column (--label)")
    methods = _methods(args.methods)
    metrics = _metrics(args.metrics)
    reports = score_grid(
        ds.features, methods, metrics, labels=ds.labels, workers=resolve_workers(args.workers),
        with_pfis=False, standardize=not args.no_standardize,
    )
    corr = benchmark_correlations(reports)
    dataset = Path(args.input).stem
    out = Outputs(Path(args.output_dir))
    out.text("benchmark_scores.csv", reports_to_csv(reports))
    keys = ("cvl", "fom", "neg_coph", "neg_ari")
    row = [dataset, str(int(corr["n_methods"]))] + ["" if np.isnan(corr[k]) else f"{corr[k]:.6f}" for k in keys]
    out.text("benchmark_spearman.csv", "dataset,n_methods," + ",".join(keys) + "\n" + ",".join(row) + "\n")
    out.manifest("benchmark", _config(args, methods=methods, metrics=metrics))
    failed = [r for r in reports if r.error]
    for r in failed:
        print(f"{r.method_id}: {r.error}", file=sys.stderr)
    print(f"{dataset}: spearman vs F1 over {int(corr['n_methods'])} recipes: "
          + ", ".join(f"{k}={corr[k]:.3f}" for k in keys))
    return 0


# ---------------------------------------------------------------- parser


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", help="CSV file with a header row")
    p.add_argument("--label", help="column holding class labels (used for ARI, F1 and default k)")
    p.add_argument("--row-names", help="column holding row names (used as leaf labels)")
    p.add_argument("--kind", action="append", metavar="COLUMN=KIND",
                   help=f"override the inferred kind of a column; KIND is one of {', '.join(KINDS)}; repeatable")
    p.add_argument("--no-standardize", action="store_true", help="cluster on raw instead of z-scored features")
    p.add_argument("--seed", type=int, default=0, help="random seed (echoed in the manifest)")
    p.add_argument("--output-dir", default="out", help="directory for artifacts (default: out)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dendro-evo",
        description="Score, select and draw hierarchical clusterings with evolutionary models fitted on the dendrogram.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="CVL, FOM, cophenetic correlation, ARI and F1 for each method and metric")
    _data_args(p)
    p.add_argument("--methods", default="mcquitty,average,diana,ward_d,single", help=METHOD_HELP)
    p.add_argument("--metrics", default="euclidean", help=f"comma-separated, from {', '.join(METRICS)}")
    p.add_argument("--k", type=int, help="clusters for FOM/ARI (default: number of labels; FOM skipped without either)")
    p.add_argument("--workers", type=int, help="parallel workers (default: CPU count, capped by DENDRO_EVO_THREADS)")
    p.add_argument("--no-pfis", action="store_true", help="skip per-feature importance columns")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("importance", help="per-feature importance table and bar chart for one method")
    _data_args(p)
    p.add_argument("--method", default="mcquitty", help=METHOD_HELP)
    p.add_argument("--metric", default="euclidean", choices=METRICS)
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("render", help="SVG dendrograms colored by each feature's reconstructed values")
    _data_args(p)
    p.add_argument("--method", default="mcquitty", help=METHOD_HELP)
    p.add_argument("--metric", default="euclidean", choices=METRICS)
    p.add_argument("--features", help="comma-separated columns to draw (default: all features and the label)")
    p.add_argument("--colormap", default="viridis", choices=COLORMAPS)
    p.add_argument("--orientation", default="horizontal", choices=("horizontal", "vertical"))
    p.add_argument("--samples-per-edge", type=int, default=16)
    p.add_argument("--width", type=int, default=800)
    p.add_argument("--height", type=int, default=600)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    p.add_argument("kind", choices=("tree", "gaussians"),
                   help="tree: features evolved down a complete binary tree; gaussians: two labelled 2-D Gaussians")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--depth", type=int, default=7, help="tree depth; 2**depth rows (tree only)")
    p.add_argument("--sigma", help="comma-separated per-feature noise scales (tree only; default 0.25,0.5,1,2,4,8)")
    p.add_argument("--sd", action="store_true", help="read sigma**k as a standard deviation rather than a variance")
    p.add_argument("--n", type=int, default=250, help="rows (gaussians only)")
    p.add_argument("--output-dir", default="out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("benchmark", help="Spearman correlation of each score with F1 over a method x metric grid")
    _data_args(p)
    p.add_argument("--methods", default=",".join(GRID_METHODS), help=METHOD_HELP)
    p.add_argument("--metrics", default=",".join(METRICS))
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore")
            return args.func(args)
    except (CliError, IngestError, ValueError, OSError) as exc:
        print(f"dendro-evo {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
