"""Minimal SVG line plots; no plotting dependency, CSVs stay canonical.

Just enough for the experiment figures: multiple series, axes with 1-2-5
ticks, a small legend.  Output is deterministic for identical inputs.
"""

from __future__ import annotations

import math

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2")


def nice_ticks(lo: float, hi: float, target: int = 5):
    """Tick positions covering [lo, hi] at a 1/2/5 x 10^k step."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return [0.0, 1.0]
    if hi <= lo:
        hi = lo + (abs(lo) if lo else 1.0)
    span = hi - lo
    raw = span / max(target, 2)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(s * mag for s in (1.0, 2.0, 5.0, 10.0) if raw <= s * mag)
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + step * 1e-9:
        ticks.append(0.0 if abs(t) < step * 1e-9 else t)
        t += step
    return ticks or [lo, hi]


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def svg_line_plot(path, x, series, title="", xlabel="", ylabel="",
                  width=640, height=420, logy=False) -> None:
    """series: list of (label, y-values).  Writes an SVG file."""
    x = [float(v) for v in x]
    series = [(label, [float(v) for v in ys]) for label, ys in series]
    ml, mr, mt, mb = 64, 16, 34, 46
    pw, ph = width - ml - mr, height - mt - mb

    all_y = [v for _, ys in series for v in ys if math.isfinite(v) and (not logy or v > 0)]
    if not all_y or not x:
        raise ValueError("nothing to plot")
    ylo, yhi = min(all_y), max(all_y)
    if logy:
        ylo, yhi = math.log10(ylo), math.log10(yhi)
    if yhi == ylo:
        yhi = ylo + (abs(ylo) if ylo else 1.0)
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad
    xlo, xhi = min(x), max(x)
    if xhi == xlo:
        xhi = xlo + 1.0

    def sx(v):
        return ml + (v - xlo) / (xhi - xlo) * pw

    def sy(v):
        if logy:
            v = math.log10(v) if v > 0 else ylo
        return mt + ph - (v - ylo) / (yhi - ylo) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" '
             'stroke="#333" stroke-width="1"/>']
    if title:
        parts.append(f'<text x="{width / 2:.1f}" y="20" font-family="sans-serif" '
                     f'font-size="14" text-anchor="middle">{title}</text>')
    for t in nice_ticks(xlo, xhi):
        if xlo <= t <= xhi:
            px = sx(t)
            parts.append(f'<line x1="{px:.2f}" y1="{mt + ph}" x2="{px:.2f}" '
                         f'y2="{mt + ph + 4}" stroke="#333"/>')
            parts.append(f'<text x="{px:.2f}" y="{mt + ph + 18}" font-family="sans-serif" '
                         f'font-size="11" text-anchor="middle">{_fmt(t)}</text>')
    for t in nice_ticks(ylo, yhi):
        if ylo <= t <= yhi:
            py = mt + ph - (t - ylo) / (yhi - ylo) * ph
            label = _fmt(10 ** t) if logy else _fmt(t)
            parts.append(f'<line x1="{ml - 4}" y1="{py:.2f}" x2="{ml}" y2="{py:.2f}" stroke="#333"/>')
            parts.append(f'<text x="{ml - 7}" y="{py + 4:.2f}" font-family="sans-serif" '
                         f'font-size="11" text-anchor="end">{label}</text>')
    if xlabel:
        parts.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" font-family="sans-serif" '
                     f'font-size="12" text-anchor="middle">{xlabel}</text>')
    if ylabel:
        parts.append(f'<text x="16" y="{mt + ph / 2:.1f}" font-family="sans-serif" font-size="12" '
                     f'text-anchor="middle" transform="rotate(-90 16 {mt + ph / 2:.1f})">{ylabel}</text>')
    for si, (label, ys) in enumerate(series):
        color = PALETTE[si % len(PALETTE)]
        pts = " ".join(f"{sx(xv):.2f},{sy(yv):.2f}" for xv, yv in zip(x, ys)
                       if math.isfinite(yv) and (not logy or yv > 0))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        if label:
            ly = mt + 14 + 16 * si
            parts.append(f'<line x1="{ml + pw - 120}" y1="{ly - 4}" x2="{ml + pw - 100}" '
                         f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
            parts.append(f'<text x="{ml + pw - 95}" y="{ly}" font-family="sans-serif" '
                         f'font-size="11">{label}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")
