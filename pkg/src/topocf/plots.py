"""Minimal SVG writers: log-log degree distribution and signed coefficient bars."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

W, H, PAD = 480, 360, 50


def _svg(body: list, width=W, height=H) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">')
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def degree_distribution_svg(series: dict, title: str = "Degree distribution") -> str:
    """``series`` maps a label to {degree: probability}; both axes are log10."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    pts = [(d, p) for s in series.values() for d, p in s.items() if d > 0 and p > 0]
    body = [f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>']
    if not pts:
        return _svg(body)
    lx = [math.log10(d) for d, _ in pts]
    ly = [math.log10(p) for _, p in pts]
    x0, x1 = min(lx), max(lx) if max(lx) > min(lx) else min(lx) + 1
    y0, y1 = min(ly), max(ly) if max(ly) > min(ly) else min(ly) + 1
    sx = lambda v: PAD + (v - x0) / (x1 - x0) * (W - 2 * PAD)
    sy = lambda v: H - PAD - (v - y0) / (y1 - y0) * (H - 2 * PAD)
    body += [f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>',
             f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>',
             f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle">log10 d</text>',
             f'<text x="14" y="{H / 2}" transform="rotate(-90 14 {H / 2})" text-anchor="middle">log10 P(d)</text>',
             f'<text x="{PAD}" y="{H - PAD + 14}" text-anchor="middle">{x0:.2f}</text>',
             f'<text x="{W - PAD}" y="{H - PAD + 14}" text-anchor="middle">{x1:.2f}</text>',
             f'<text x="{PAD - 4}" y="{H - PAD}" text-anchor="end">{y0:.2f}</text>',
             f'<text x="{PAD - 4}" y="{PAD + 4}" text-anchor="end">{y1:.2f}</text>']
    for k, (label, s) in enumerate(series.items()):
        c = colors[k % len(colors)]
        for d, p in sorted(s.items()):
            if d > 0 and p > 0:
                body.append(f'<circle cx="{sx(math.log10(d)):.2f}" cy="{sy(math.log10(p)):.2f}" r="2.5" '
                            f'fill="{c}" fill-opacity="0.7"/>')
        body.append(f'<text x="{W - PAD}" y="{PAD + 14 * k}" text-anchor="end" fill="{c}">{escape(label)}</text>')
    return _svg(body)


def coefficient_bars_svg(rows: list, title: str = "Regression coefficients") -> str:
    """Horizontal bars for signed coefficients; opacity grows with significance.

    ``rows`` holds dicts with ``name``, ``coef`` and ``p`` in display order.
    """
    n = max(len(rows), 1)
    height = 60 + 22 * n
    label_w, mid_pad = 110, 20
    left = label_w + mid_pad
    span = (W - left - 20) / 2
    zero = left + span
    m = max([abs(r["coef"]) for r in rows] + [1e-12])
    body = [f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>',
            f'<line x1="{zero:.2f}" y1="30" x2="{zero:.2f}" y2="{height - 20}" stroke="black"/>']
    for k, r in enumerate(rows):
        y = 36 + 22 * k
        length = abs(r["coef"]) / m * span
        x = zero if r["coef"] >= 0 else zero - length
        p = r["p"]
        opacity = 1.0 if p < 0.001 else 0.75 if p < 0.01 else 0.5 if p < 0.05 else 0.2
        color = "#1f77b4" if r["coef"] >= 0 else "#d62728"
        body.append(f'<text x="{label_w}" y="{y + 12}" text-anchor="end">{escape(r["name"])}</text>')
        body.append(f'<rect x="{x:.2f}" y="{y}" width="{length:.2f}" height="16" fill="{color}" '
                    f'fill-opacity="{opacity}"/>')
        body.append(f'<text x="{W - 4}" y="{y + 12}" text-anchor="end">{r["coef"]:+.3f}</text>')
    return _svg(body, height=height)
