"""SVG output: evolutionary dendrograms and importance bar charts.

Documents are built with ElementTree, so they are well-formed by
construction, and every coordinate is printed with fixed precision so the
output is byte-stable.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .brownian import AncestralStates
from .ctmc import StatePosteriors
from .tree import Dendrogram, UltrametricTree, to_ultrametric

COLORMAPS = ("viridis", "magma", "grayscale")

# 12 qualitative colors (ColorBrewer "Paired", reordered so the first few contrast)
PALETTE = (
    "#1f78b4", "#e31a1c", "#33a02c", "#ff7f00", "#6a3d9a", "#b15928",
    "#a6cee3", "#fb9a99", "#b2df8a", "#fdbf6f", "#cab2d6", "#ffff99",
)


class PaletteError(ValueError):
    pass


@dataclass(frozen=True)
class RenderSpec:
    width: int = 800
    height: int = 600
    colormap: str = "viridis"
    orientation: str = "horizontal"
    samples_per_edge: int = 16
    legend: bool = True
    label_font_size: float = 10.0
    title: str = ""

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("dimensions must be positive")
        if self.samples_per_edge < 2:
            raise ValueError("samples_per_edge must be at least 2")
        if self.colormap not in COLORMAPS:
            raise ValueError(f"colormap must be one of {COLORMAPS}")
        if self.orientation not in ("horizontal", "vertical"):
            raise ValueError("orientation must be horizontal or vertical")


def _f(v: float) -> str:
    return f"{v:.3f}"


def _lut(name: str) -> np.ndarray:
    if name == "grayscale":
        g = np.linspace(0.05, 0.95, 256)
        return np.column_stack([g, g, g])
    from matplotlib import colormaps

    return np.asarray(colormaps[name].colors)[:, :3]


class ColorScale:
    """Linear map from values to a colormap.

    ``position`` is strictly increasing in the value; a degenerate range maps
    everything to the middle of the scale.
    """

    def __init__(self, values, colormap: str = "viridis"):
        v = np.asarray(values, dtype=float)
        self.vmin = float(v.min())
        self.vmax = float(v.max())
        self.lut = _lut(colormap)

    def position(self, value: float) -> float:
        if self.vmax <= self.vmin:
            return 0.5
        return min(1.0, max(0.0, (value - self.vmin) / (self.vmax - self.vmin)))

    def index(self, value: float) -> int:
        return int(round(self.position(value) * (len(self.lut) - 1)))

    def rgb(self, value: float) -> tuple:
        x = self.position(value) * (len(self.lut) - 1)
        lo = int(math.floor(x))
        hi = min(lo + 1, len(self.lut) - 1)
        w = x - lo
        c = (1 - w) * self.lut[lo] + w * self.lut[hi]
        return tuple(int(round(255 * t)) for t in c)

    def hex(self, value: float) -> str:
        return "#%02x%02x%02x" % self.rgb(value)


class _Layout:
    """Leaf positions spread evenly; node height taken from the ultrametric
    depths so clamped edges are drawn with their clamped length."""

    def __init__(self, tree: UltrametricTree, spec: RenderSpec, margin_right: float):
        d = tree.dendrogram
        self.tree = tree
        self.spec = spec
        n = d.n_leaves
        self.pad = 20.0
        self.label_space = spec.label_font_size * 0.6 * max(len(s) for s in d.leaf_labels) + 10
        spread = np.zeros(d.n_nodes)
        for rank, leaf in enumerate(d.leaf_order):
            spread[leaf] = rank
        for m, (a, b) in enumerate(d.children):
            spread[n + m] = 0.5 * (spread[a] + spread[b])
        self.spread = spread / max(n - 1, 1)
        H = tree.tree_height if tree.tree_height > 0 else 1.0
        self.level = tree.node_depth / H  # 0 at root, 1 at leaves
        self.margin_right = margin_right

    def xy(self, spread: float, level: float) -> tuple[float, float]:
        s = self.spec
        p = self.pad
        if s.orientation == "horizontal":
            x0, x1 = p, s.width - p - self.label_space - self.margin_right
            y0, y1 = p + 20, s.height - p
            return x0 + level * (x1 - x0), y0 + spread * (y1 - y0)
        x0, x1 = p, s.width - p - self.margin_right
        y0, y1 = p + 20, s.height - p - self.label_space
        return x0 + spread * (x1 - x0), y0 + level * (y1 - y0)

    def node_xy(self, u: int) -> tuple[float, float]:
        return self.xy(self.spread[u], self.level[u])


def _svg_root(spec: RenderSpec) -> ET.Element:
    root = ET.Element(
        "svg",
        {
            "xmlns": "http://www.w3.org/2000/svg",
            "version": "1.1",
            "width": str(spec.width),
            "height": str(spec.height),
            "viewBox": f"0 0 {spec.width} {spec.height}",
        },
    )
    ET.SubElement(root, "rect", {"x": "0", "y": "0", "width": str(spec.width), "height": str(spec.height), "fill": "#ffffff"})
    if spec.title:
        t = ET.SubElement(root, "text", {"x": "20", "y": "22", "font-family": "sans-serif", "font-size": _f(spec.label_font_size + 4)})
        t.text = spec.title
    return root


def _to_string(root: ET.Element) -> str:
    ET.indent(root, space=" ")
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def _leaf_labels(parent: ET.Element, layout: _Layout, d: Dendrogram, offset: float) -> None:
    spec = layout.spec
    g = ET.SubElement(parent, "g", {"class": "labels", "font-family": "sans-serif", "font-size": _f(spec.label_font_size)})
    for leaf in d.leaf_order:
        x, y = layout.node_xy(leaf)
        if spec.orientation == "horizontal":
            attrs = {"x": _f(x + offset), "y": _f(y + spec.label_font_size / 3), "text-anchor": "start"}
        else:
            attrs = {"x": _f(x), "y": _f(y + offset), "text-anchor": "end",
                     "transform": f"rotate(-90 {_f(x)} {_f(y + offset)})", "dominant-baseline": "middle"}
        ET.SubElement(g, "text", attrs).text = d.leaf_labels[leaf]


def _elbow_points(layout: _Layout, u: int, p: int) -> tuple[tuple, tuple, tuple]:
    """(child point, corner at parent's level, parent point) for the edge above u."""
    child = layout.node_xy(u)
    corner = layout.xy(layout.spread[u], layout.level[p])
    return child, corner, layout.node_xy(p)


def render_continuous(
    d: Dendrogram,
    asr: AncestralStates,
    y,
    spec: RenderSpec = RenderSpec(),
    tree: UltrametricTree | None = None,
) -> str:
    """Dendrogram with every edge colored by the expected feature value.

    Each edge is split into ``spec.samples_per_edge`` segments colored by
    the interpolated mean; internal nodes are dots in their mean color and
    leaf tips show observed values.
    """
    tree = tree or to_ultrametric(d)
    y = np.asarray(y, dtype=float)
    n = d.n_leaves
    means = np.asarray(asr.node_mean, dtype=float)
    scale = ColorScale(np.concatenate([y, means[n:]]), spec.colormap)
    legend_w = 90.0 if spec.legend else 0.0
    layout = _Layout(tree, spec, legend_w)
    root = _svg_root(spec)
    edges = ET.SubElement(root, "g", {"class": "edges", "stroke-width": "2", "stroke-linecap": "butt", "fill": "none"})
    k = spec.samples_per_edge
    for u in range(d.n_nodes - 1):
        p = int(tree.parent[u])
        samples = asr.edge_samples[u]
        (cx, cy), (kx, ky), (px, py) = _elbow_points(layout, u, p)
        # connector along the parent's level uses the parent's color
        ET.SubElement(edges, "line", {"x1": _f(px), "y1": _f(py), "x2": _f(kx), "y2": _f(ky),
                                      "stroke": scale.hex(means[p]), "data-node": str(p)})
        for s in range(k):
            t0, t1 = s / k, (s + 1) / k
            x0, y0 = kx + t0 * (cx - kx), ky + t0 * (cy - ky)
            x1, y1 = kx + t1 * (cx - kx), ky + t1 * (cy - ky)
            # segment s (counted from the parent end) shows edge sample s
            value = float(samples[s, 1]) if samples.shape[0] == k else float(np.interp(s / (k - 1), samples[:, 0], samples[:, 1]))
            ET.SubElement(edges, "line", {"x1": _f(x0), "y1": _f(y0), "x2": _f(x1), "y2": _f(y1),
                                          "stroke": scale.hex(value), "data-edge": str(u), "data-value": repr(float(value))})
    nodes = ET.SubElement(root, "g", {"class": "nodes"})
    for u in range(n, d.n_nodes):
        x, yy = layout.node_xy(u)
        ET.SubElement(nodes, "circle", {"cx": _f(x), "cy": _f(yy), "r": "2.5", "fill": scale.hex(means[u]),
                                        "data-node": str(u), "data-value": repr(float(means[u]))})
    tips = ET.SubElement(root, "g", {"class": "tips"})
    for leaf in range(n):
        x, yy = layout.node_xy(leaf)
        ET.SubElement(tips, "circle", {"cx": _f(x), "cy": _f(yy), "r": "3", "fill": scale.hex(y[leaf]),
                                       "data-leaf": str(leaf), "data-value": repr(float(y[leaf]))})
    _leaf_labels(root, layout, d, 6.0)
    if spec.legend:
        _gradient_legend(root, scale, spec)
    return _to_string(root)


def _gradient_legend(root: ET.Element, scale: ColorScale, spec: RenderSpec) -> None:
    g = ET.SubElement(root, "g", {"class": "legend", "font-family": "sans-serif", "font-size": _f(spec.label_font_size)})
    x = spec.width - 80.0
    top, bottom = 40.0, min(spec.height - 20.0, 240.0)
    steps = 64
    h = (bottom - top) / steps
    for s in range(steps):
        frac = 1 - (s + 0.5) / steps
        value = scale.vmin + frac * (scale.vmax - scale.vmin)
        ET.SubElement(g, "rect", {"x": _f(x), "y": _f(top + s * h), "width": "14", "height": _f(h + 0.2),
                                  "fill": scale.hex(value), "stroke": "none"})
    for t in range(5):
        frac = t / 4
        value = scale.vmin + frac * (scale.vmax - scale.vmin)
        yy = bottom - frac * (bottom - top)
        ET.SubElement(g, "text", {"x": _f(x + 18), "y": _f(yy + 3), "class": "tick"}).text = f"{value:.3g}"


def _pie(parent: ET.Element, cx: float, cy: float, r: float, probs: np.ndarray, node: int) -> None:
    g = ET.SubElement(parent, "g", {"class": "pie", "data-node": str(node)})
    start = 0.0
    nz = [a for a in range(len(probs)) if probs[a] > 0]
    for a in range(len(probs)):
        sweep = 360.0 * float(probs[a])
        if probs[a] <= 0:
            continue
        if len(nz) == 1:
            ET.SubElement(g, "circle", {"cx": _f(cx), "cy": _f(cy), "r": _f(r), "fill": PALETTE[a],
                                        "data-state": str(a), "data-angle": repr(sweep)})
            start += sweep
            continue
        t0, t1 = math.radians(start - 90), math.radians(start + sweep - 90)
        x0, y0 = cx + r * math.cos(t0), cy + r * math.sin(t0)
        x1, y1 = cx + r * math.cos(t1), cy + r * math.sin(t1)
        large = 1 if sweep > 180 else 0
        path = f"M {_f(cx)} {_f(cy)} L {_f(x0)} {_f(y0)} A {_f(r)} {_f(r)} 0 {large} 1 {_f(x1)} {_f(y1)} Z"
        ET.SubElement(g, "path", {"d": path, "fill": PALETTE[a], "data-state": str(a), "data-angle": repr(sweep)})
        start += sweep


def render_categorical(
    d: Dendrogram,
    post: StatePosteriors,
    labels: Sequence,
    spec: RenderSpec = RenderSpec(),
    tree: UltrametricTree | None = None,
) -> str:
    """Dendrogram with a pie of the state posterior at each internal node and
    leaf tips colored by their observed category."""
    states = tuple(post.states)
    if len(states) > len(PALETTE):
        raise PaletteError("palette exhausted")
    tree = tree or to_ultrametric(d)
    n = d.n_leaves
    legend_w = 110.0 if spec.legend else 0.0
    layout = _Layout(tree, spec, legend_w)
    root = _svg_root(spec)
    edges = ET.SubElement(root, "g", {"class": "edges", "stroke": "#555555", "stroke-width": "1.2", "fill": "none"})
    for u in range(d.n_nodes - 1):
        p = int(tree.parent[u])
        (cx, cy), (kx, ky), (px, py) = _elbow_points(layout, u, p)
        ET.SubElement(edges, "polyline", {"points": f"{_f(cx)},{_f(cy)} {_f(kx)},{_f(ky)} {_f(px)},{_f(py)}"})
    pies = ET.SubElement(root, "g", {"class": "pies"})
    r = max(3.0, min(9.0, 0.35 * (spec.height if spec.orientation == "horizontal" else spec.width) / max(n, 1)))
    for u in range(n, d.n_nodes):
        x, yy = layout.node_xy(u)
        _pie(pies, x, yy, r, post.probs[u], u)
    tips = ET.SubElement(root, "g", {"class": "tips"})
    index = {s: a for a, s in enumerate(states)}
    for leaf in range(n):
        x, yy = layout.node_xy(leaf)
        attrs = {"cx": _f(x), "cy": _f(yy), "r": _f(max(2.0, r * 0.6)), "data-leaf": str(leaf)}
        lab = labels[leaf]
        if lab is None:
            attrs.update({"fill": "#ffffff", "stroke": "#000000"})
        else:
            attrs.update({"fill": PALETTE[index[str(lab)]], "data-state": str(index[str(lab)])})
        ET.SubElement(tips, "circle", attrs)
    _leaf_labels(root, layout, d, r + 4)
    if spec.legend:
        g = ET.SubElement(root, "g", {"class": "legend", "font-family": "sans-serif", "font-size": _f(spec.label_font_size)})
        x = spec.width - 100.0
        for a, s in enumerate(states):
            yy = 40.0 + a * (spec.label_font_size + 6)
            ET.SubElement(g, "rect", {"x": _f(x), "y": _f(yy - spec.label_font_size + 2), "width": _f(spec.label_font_size),
                                      "height": _f(spec.label_font_size), "fill": PALETTE[a]})
            ET.SubElement(g, "text", {"x": _f(x + spec.label_font_size + 4), "y": _f(yy)}).text = s
    return _to_string(root)


def render_importance(names: Sequence[str], scores, spec: RenderSpec = RenderSpec(width=640, height=400)) -> str:
    """Horizontal bar chart of feature importance, highest first."""
    scores = np.asarray(scores, dtype=float)
    order = sorted(range(len(names)), key=lambda j: (-np.nan_to_num(scores[j], nan=-np.inf), j))
    root = _svg_root(spec)
    fs = spec.label_font_size
    left = 20 + fs * 0.6 * max(len(str(s)) for s in names) + 10
    right = spec.width - 60.0
    top = 40.0
    bar = (spec.height - top - 20) / max(len(names), 1)
    finite = scores[np.isfinite(scores)]
    lo = min(0.0, float(finite.min())) if finite.size else 0.0
    hi = max(1.0, float(finite.max())) if finite.size else 1.0

    def xpos(v):
        return left + (v - lo) / (hi - lo) * (right - left)

    g = ET.SubElement(root, "g", {"class": "bars", "font-family": "sans-serif", "font-size": _f(fs)})
    ET.SubElement(g, "line", {"x1": _f(xpos(0)), "y1": _f(top), "x2": _f(xpos(0)), "y2": _f(top + bar * len(names)), "stroke": "#000000"})
    for rank, j in enumerate(order):
        yy = top + rank * bar
        v = scores[j]
        ET.SubElement(g, "text", {"x": _f(left - 6), "y": _f(yy + bar * 0.65), "text-anchor": "end"}).text = str(names[j])
        if not np.isfinite(v):
            continue
        x0, x1 = sorted((xpos(0), xpos(v)))
        ET.SubElement(g, "rect", {"x": _f(x0), "y": _f(yy + bar * 0.15), "width": _f(x1 - x0), "height": _f(bar * 0.7),
                                  "fill": "#3b528b", "data-feature": str(names[j]), "data-value": repr(float(v))})
        ET.SubElement(g, "text", {"x": _f(max(x1, xpos(0)) + 4), "y": _f(yy + bar * 0.65)}).text = f"{v:.3f}"
    return _to_string(root)
