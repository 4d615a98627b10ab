"""Deterministic SVG rendering of the analysis figures.

Output is plain SVG 1.1 written by hand: numbers are formatted with a fixed
precision and elements are emitted in a fixed order, so the same inputs give
byte-identical files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .analytics import PositionalDensity, Segment
from .layout import LayoutCoords, WordCloudSpec
from .sentiment import EmotionalArc

# colour-blind friendly qualitative palette (Okabe-Ito, then Tableau extras)
DEFAULT_PALETTE = (
    "#0072B2", "#E69F00", "#009E73", "#CC79A7", "#D55E00", "#56B4E9", "#F0E442",
    "#000000", "#8C564B", "#7F7F7F", "#BCBD22", "#17BECF",
)


@dataclass(frozen=True)
class Style:
    width: int = 800
    height: int = 600
    margin: int = 40
    font_family: str = "DejaVu Sans, Arial, sans-serif"
    min_font: float = 10.0
    max_font: float = 48.0
    palette: tuple[str, ...] = DEFAULT_PALETTE
    background: str = "#ffffff"
    foreground: str = "#222222"
    unlabelled_color: str = "#7f7f7f"

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "Style":
        d = dict(d or {})
        if "palette" in d:
            d["palette"] = tuple(d["palette"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown style keys: {sorted(unknown)}")
        return cls(**d)


def _n(x: float) -> str:
    s = f"{x:.2f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


class _Svg:
    def __init__(self, style: Style, title: str):
        self.style = style
        self.parts = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{style.width}" '
            f'height="{style.height}" viewBox="0 0 {style.width} {style.height}" '
            f'font-family={quoteattr(style.font_family)}>',
            f"<title>{escape(title)}</title>",
            f'<rect x="0" y="0" width="{style.width}" height="{style.height}" '
            f'fill="{style.background}" class="background"/>',
        ]

    def add(self, s: str) -> None:
        self.parts.append(s)

    def text(self, x, y, s, size, fill, anchor="middle", cls=None, extra=""):
        c = f' class="{cls}"' if cls else ""
        self.add(f'<text x="{_n(x)}" y="{_n(y)}" font-size="{_n(size)}" fill="{fill}" '
                 f'text-anchor="{anchor}"{c}{extra}>{escape(str(s))}</text>')

    def done(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def label_colors(labels: Sequence[str], style: Style) -> dict[str, str]:
    """Colour per distinct label, assigned in sorted label order."""
    names = sorted(set(labels))
    return {n: style.palette[i % len(style.palette)] for i, n in enumerate(names)}


# -- word cloud -----------------------------------------------------------------

def font_sizes(weights: Sequence[float], style: Style) -> list[float]:
    """Linear in weight between ``min_font`` and ``max_font``."""
    if not weights:
        return []
    hi = max(weights)
    lo = min(weights)
    if hi == lo:
        return [style.max_font] * len(weights)
    return [style.min_font + (style.max_font - style.min_font) * (w - lo) / (hi - lo)
            for w in weights]


def _box(x, y, word, size):
    w = 0.6 * size * len(word)
    return (x - w / 2, y - 0.8 * size, x + w / 2, y + 0.2 * size)


def _overlaps(a, b):
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


def spiral_placement(words: Sequence[str], sizes: Sequence[float], style: Style,
                     step: float = 0.1, max_steps: int = 20000):
    """Archimedean-spiral placement: each word moves out from the centre until it fits."""
    cx, cy = style.width / 2, style.height / 2
    bounds = (style.margin, style.margin, style.width - style.margin, style.height - style.margin)
    placed, out = [], []
    for word, size in zip(words, sizes):
        pos = None
        for i in range(max_steps):
            t = i * step
            r = 2.0 * t
            x, y = cx + r * math.cos(t), cy + r * math.sin(t)
            box = _box(x, y, word, size)
            inside = (box[0] >= bounds[0] and box[1] >= bounds[1]
                      and box[2] <= bounds[2] and box[3] <= bounds[3])
            if inside and not any(_overlaps(box, p) for p in placed):
                pos = (x, y)
                break
        if pos is None:  # no free spot; stack at the centre rather than drop the word
            pos = (cx, cy)
            box = _box(cx, cy, word, size)
        placed.append(box)
        out.append(pos)
    return out


def render_wordcloud(spec: WordCloudSpec, style: Style | None = None) -> str:
    style = style or Style()
    title = "word cloud" if spec.topic is None else f"word cloud: topic {spec.topic}"
    svg = _Svg(style, title)
    words = [w for w, _ in spec.words]
    weights = [p for _, p in spec.words]
    sizes = font_sizes(weights, style)
    color = style.palette[(spec.topic or 0) % len(style.palette)]
    for (x, y), w, p, s in zip(spiral_placement(words, sizes, style), words, weights, sizes):
        svg.text(x, y, w, s, color, cls="word", extra=f' data-weight="{p!r}"')
    return svg.done()


# -- topic landscape --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Landscape:
    coords: LayoutCoords
    top_words: Mapping[int, Sequence[tuple[str, float]]]
    labels: Mapping[int, str] = field(default_factory=dict)


def _frame(xy: np.ndarray, style: Style):
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    w = style.width - 2 * style.margin
    h = style.height - 2 * style.margin

    def to_px(p):
        x = style.margin + (p[0] - lo[0]) / span[0] * w if hi[0] > lo[0] else style.width / 2
        y = style.height - style.margin - ((p[1] - lo[1]) / span[1] * h if hi[1] > lo[1] else h / 2)
        return x, y

    return to_px


def render_landscape(land: Landscape, style: Style | None = None) -> str:
    """Top words of every topic at its layout position, coloured by label."""
    style = style or Style()
    svg = _Svg(style, "topic landscape")
    xy = land.coords.coords[:, :2]
    to_px = _frame(xy, style) if len(xy) else None
    labels = {t: land.labels.get(t) for t in land.coords.ids}
    colors = label_colors([l for l in labels.values() if l is not None], style)
    allw = [p for t in land.coords.ids for _, p in land.top_words.get(t, ())[:3]]
    wmax = max(allw) if allw else 1.0
    for t, p in zip(land.coords.ids, xy):
        x, y = to_px(p)
        lab = labels[t]
        fill = colors[lab] if lab is not None else style.unlabelled_color
        tip = f"topic {t}" + (f" ({lab})" if lab is not None else "")
        svg.add(f'<circle cx="{_n(x)}" cy="{_n(y)}" r="3" fill="{fill}" class="topic">'
                f"<title>{escape(tip)}</title></circle>")
        words = list(land.top_words.get(t, ()))[:3]
        dy = 0.0
        for w, prob in words:
            size = style.min_font + (style.max_font / 2 - style.min_font) * (prob / wmax)
            dy += size
            svg.text(x, y + dy, w, size, fill, cls="word", extra=f' data-topic="{t}"')
    return svg.done()


# -- stacked positional densities ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class DensityStack:
    densities: Mapping[int, PositionalDensity]
    order: Sequence[int]
    labels: Mapping[int, str] = field(default_factory=dict)


def render_stacked_densities(stack: DensityStack, style: Style | None = None) -> str:
    """Ridgeline of ``p(x | t)``, first topic in ``order`` at the top."""
    style = style or Style()
    svg = _Svg(style, "topic positional densities")
    n = max(1, len(stack.order))
    x0, x1 = style.margin + 60, style.width - style.margin
    band = (style.height - 2 * style.margin) / (n + 1)
    peak = max((float(stack.densities[t].values.max()) for t in stack.order), default=1.0) or 1.0
    colors = label_colors([l for l in stack.labels.values()], style)
    for i, t in enumerate(stack.order):
        d = stack.densities[t]
        base = style.margin + band * (i + 2)
        pts = [f"{_n(x0)},{_n(base)}"]
        e = d.edges
        for k, v in enumerate(d.values):
            y = base - 2 * band * float(v) / peak
            pts.append(f"{_n(x0 + (x1 - x0) * e[k])},{_n(y)}")
            pts.append(f"{_n(x0 + (x1 - x0) * e[k + 1])},{_n(y)}")
        pts.append(f"{_n(x1)},{_n(base)}")
        lab = stack.labels.get(t)
        fill = colors[lab] if lab is not None else style.palette[i % len(style.palette)]
        svg.add(f'<polygon points="{" ".join(pts)}" fill="{fill}" fill-opacity="0.6" '
                f'stroke="{style.foreground}" stroke-width="0.5" class="density"/>')
        svg.text(x0 - 6, base, f"T{t}", style.min_font, style.foreground, anchor="end", cls="axis")
    yb = style.height - style.margin + 14
    for tick in (0.0, 0.5, 1.0):
        svg.text(x0 + (x1 - x0) * tick, yb, _n(tick), style.min_font, style.foreground, cls="axis")
    return svg.done()


# -- emotional arc -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ArcFigure:
    arc: EmotionalArc
    segments: Sequence[Segment] = ()


def render_arc(fig: ArcFigure, style: Style | None = None) -> str:
    """The arc as one polyline over shaded dominant-topic segments."""
    style = style or Style()
    svg = _Svg(style, "emotional arc")
    x0, x1 = style.margin, style.width - style.margin
    y0, y1 = style.margin, style.height - style.margin
    vals = fig.arc.mean_valence
    finite = np.isfinite(vals)
    lo = float(vals[finite].min()) if finite.any() else -1.0
    hi = float(vals[finite].max()) if finite.any() else 1.0
    pad = 0.1 * (hi - lo) if hi > lo else 0.5
    lo, hi = lo - pad, hi + pad

    def px(x, v):
        return x0 + (x1 - x0) * x, y1 - (y1 - y0) * (v - lo) / (hi - lo)

    segs = list(fig.segments) or [Segment(0.0, 1.0, "all")]
    colors = label_colors([s.label for s in segs], style)
    for s in segs:
        a, _ = px(s.start, 0)
        b, _ = px(s.end, 0)
        svg.add(f'<rect x="{_n(a)}" y="{_n(y0)}" width="{_n(b - a)}" height="{_n(y1 - y0)}" '
                f'fill="{colors[s.label]}" fill-opacity="0.18" class="segment">'
                f"<title>{escape(s.label)}</title></rect>")
    if lo < 0 < hi:
        _, yz = px(0, 0)
        svg.add(f'<line x1="{_n(x0)}" y1="{_n(yz)}" x2="{_n(x1)}" y2="{_n(yz)}" '
                f'stroke="{style.foreground}" stroke-dasharray="4 3" stroke-width="0.8"/>')
    pts = " ".join(f"{_n(a)},{_n(b)}" for a, b in
                   (px(float(x), float(v)) for x, v in zip(fig.arc.grid[finite], vals[finite])))
    svg.add(f'<polyline points="{pts}" fill="none" stroke="{style.foreground}" '
            f'stroke-width="2" class="arc"/>')
    for tick in (0.0, 0.5, 1.0):
        svg.text(px(tick, lo)[0], y1 + 14, _n(tick), style.min_font, style.foreground, cls="axis")
    return svg.done()


def render_svg(artifact, style: Style | None = None) -> str:
    """Render any supported artifact to an SVG document string."""
    if isinstance(artifact, WordCloudSpec):
        return render_wordcloud(artifact, style)
    if isinstance(artifact, Landscape):
        return render_landscape(artifact, style)
    if isinstance(artifact, DensityStack):
        return render_stacked_densities(artifact, style)
    if isinstance(artifact, ArcFigure):
        return render_arc(artifact, style)
    if isinstance(artifact, EmotionalArc):
        return render_arc(ArcFigure(artifact), style)
    raise TypeError(f"cannot render {type(artifact).__name__}")


__all__ = ["Style", "Landscape", "DensityStack", "ArcFigure", "render_svg", "render_wordcloud",
           "render_landscape", "render_stacked_densities", "render_arc", "font_sizes",
           "spiral_placement", "label_colors", "DEFAULT_PALETTE"]
