"""Static SVG line charts with the plotted samples embedded in the document.

Every ``<polyline>`` carries ``data-label``, ``data-x`` and ``data-y``
attributes holding the exact sample values (``repr`` floats, space
separated), so numbers can be read back with ``read_samples`` without
digitizing the drawing.
"""

import math
import os
from xml.etree import ElementTree as ET
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from . import losses

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=150, top=40, bottom=55)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
SVG_NS = "http://www.w3.org/2000/svg"


def _nice_ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (step * mult) <= n:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def _fmt(v):
    return f"{v:.4g}"


def line_plot(series, title="", xlabel="", ylabel=""):
    """SVG text for ``series``, a list of ``(label, xs, ys)``; non-finite y values are skipped."""
    if not series:
        raise ValueError("nothing to plot")
    cleaned = []
    for label, xs, ys in series:
        xs, ys = np.asarray(xs, float), np.asarray(ys, float)
        if xs.shape != ys.shape or xs.ndim != 1:
            raise ValueError(f"series {label!r}: x and y must be 1-D of equal length")
        keep = np.isfinite(xs) & np.isfinite(ys)
        cleaned.append((str(label), xs[keep], ys[keep]))
    all_x = np.concatenate([s[1] for s in cleaned])
    all_y = np.concatenate([s[2] for s in cleaned])
    if all_x.size == 0:
        raise ValueError("no finite samples to plot")
    x0, x1 = float(all_x.min()), float(all_x.max())
    y0, y1 = float(all_y.min()), float(all_y.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    left, top = MARGIN["left"], MARGIN["top"]
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + (1 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="{SVG_NS}" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" '
        'font-family="sans-serif" font-size="12">',
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for t in _nice_ticks(x0, x1):
        out.append(f'<line x1="{sx(t):.2f}" y1="{top + ph}" x2="{sx(t):.2f}" y2="{top + ph + 5}" stroke="#444"/>')
        out.append(f'<text x="{sx(t):.2f}" y="{top + ph + 18}" text-anchor="middle">{_fmt(t)}</text>')
    for t in _nice_ticks(y0, y1):
        out.append(f'<line x1="{left - 5}" y1="{sy(t):.2f}" x2="{left + pw}" y2="{sy(t):.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 8}" y="{sy(t) + 4:.2f}" text-anchor="end">{_fmt(t)}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    for i, (label, xs, ys) in enumerate(cleaned):
        color = COLORS[i % len(COLORS)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        out.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}" '
            f"data-label={quoteattr(label)} "
            f'data-x="{" ".join(repr(float(x)) for x in xs)}" '
            f'data-y="{" ".join(repr(float(y)) for y in ys)}"/>'
        )
        ly = top + 10 + 18 * i
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 38}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, svg):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(svg)


def read_samples(svg):
    """``{label: (xs, ys)}`` recovered from SVG text or a path to an SVG file."""
    if not svg.lstrip().startswith("<") and os.path.exists(svg):
        with open(svg, encoding="utf-8") as f:
            svg = f.read()
    root = ET.fromstring(svg)
    out = {}
    for node in root.iter(f"{{{SVG_NS}}}polyline"):
        xs = [float(v) for v in node.get("data-x").split()]
        ys = [float(v) for v in node.get("data-y").split()]
        out[node.get("data-label")] = (np.array(xs), np.array(ys))
    return out


# --------------------------------------------------------------------------
# chart builders


def tv_grid(n=100):
    """Tv = i/n for i = 1..n-1; includes 0.25, 0.5 and 0.75 exactly when 4 divides n."""
    return np.arange(1, n) / n


def loss_vs_tv_plot(curves, n=100):
    """Region loss against the Tversky index.

    ``curves`` is a list of ``(family, gamma)`` with family ``FT`` or ``DIBE_REG``.
    """
    tv = tv_grid(n)
    series = []
    for family, gamma in curves:
        family = losses.Family(str(family).upper())
        if family == losses.Family.FT:
            fn = losses.ft_value
        elif family == losses.Family.DIBE_REG:
            fn = losses.dibe_reg_value
        else:
            raise ValueError(f"loss-vs-Tv curves exist for FT and DIBE_REG, not {family.value}")
        series.append((f"{family.value} gamma={gamma:g}", tv, [fn(t, gamma) for t in tv]))
    return line_plot(series, "Region loss vs Tversky index", "Tv", "loss")


def grad_vs_tv_plot(curves, n=100):
    """|dL/dTv| for FT / DIBE_REG curves, showing behaviour as Tv approaches 1."""
    tv = tv_grid(n)
    series = []
    for family, gamma in curves:
        family = losses.Family(str(family).upper())
        fn = losses.ft_grad_tv if family == losses.Family.FT else losses.dibe_reg_grad_tv
        series.append((f"{family.value} gamma={gamma:g}", tv, [abs(fn(t, gamma)) for t in tv]))
    return line_plot(series, "Gradient magnitude vs Tversky index", "Tv", "|dL/dTv|")


def dibe_dis_gradient_plot(alphas=(0.0, 0.3, 0.6, 0.9), lam=0.25, gamma=2.0, n=96):
    """dL/dp on the missed-foreground branch (y=1, p < 0.5) for several alphas."""
    p = np.linspace(0.01, 0.49, n)
    series = [(f"alpha={a:g}", p, losses.dibe_dis_missed_grad(p, lam, gamma, a)) for a in alphas]
    return line_plot(series, f"Missed-foreground gradient (lambda={lam:g}, gamma={gamma:g})", "p", "dL/dp")


def epoch_plot(logs, metric="oii"):
    """``metric`` vs epoch for ``{label: TrainingLog}``."""
    series = [
        (label, [r.epoch for r in log], [getattr(r, metric) for r in log]) for label, log in logs.items()
    ]
    return line_plot(series, f"{metric.upper()} vs epoch", "epoch", metric)
