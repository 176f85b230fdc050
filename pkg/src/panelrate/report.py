"""Artifact writers: curve CSVs, an SVG line chart and test summaries."""

from __future__ import annotations

import csv
import io
import json
from xml.sax.saxutils import escape

import numpy as np

from .estimation import SmoothedRateEstimate, StepRateEstimate

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22")


def _num(x: float) -> str:
    return repr(float(x))


def curves_csv(points, per_cause, overall, cause_names) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", *cause_names, "overall"])
    for k, t in enumerate(points):
        w.writerow([_num(t), *(_num(v) for v in per_cause[:, k]), _num(overall[k])])
    return buf.getvalue()


def smoothed_csv(sm: SmoothedRateEstimate, cause_names) -> str:
    return curves_csv(sm.points, sm.values_per_cause, sm.overall_values, cause_names)


def step_csv(step: StepRateEstimate, cause_names) -> str:
    return curves_csv(step.grid.points, step.values_per_cause, step.overall_values, cause_names)


def svg_chart(sm: SmoothedRateEstimate, cause_names, x_label: str = "time",
              y_label: str = "rate", title: str = "", metadata: dict | None = None) -> str:
    """Standalone SVG with one polyline per cause and one for the overall rate.

    ``metadata`` is stored as JSON inside a ``<metadata>`` element.
    """
    width, height = 720, 440
    left, right, top, bottom = 80, 150, 40, 60
    pw, ph = width - left - right, height - top - bottom
    xs = np.asarray(sm.points, dtype=float)
    series = [(name, sm.values_per_cause[j]) for j, name in enumerate(cause_names)]
    series.append(("overall", sm.overall_values))
    x0, x1 = float(xs.min()), float(xs.max())
    if x1 == x0:
        x1 = x0 + 1.0
    y1 = max(float(np.max([s for _, s in series])), 0.0)
    y1 = y1 * 1.05 if y1 > 0 else 1.0

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + ph - y / y1 * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if metadata:
        out.insert(2, f"<metadata>{escape(json.dumps(metadata, sort_keys=True))}</metadata>")
    if title:
        out.append(f'<text x="{left + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>')
    for k in range(6):
        xv = x0 + (x1 - x0) * k / 5
        yv = y1 * k / 5
        out.append(f'<text x="{px(xv):.1f}" y="{top + ph + 18}" text-anchor="middle">{xv:.4g}</text>')
        out.append(f'<text x="{left - 6}" y="{py(yv) + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 15}" text-anchor="middle">{escape(x_label)}</text>')
    out.append(f'<text x="20" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 20 {top + ph / 2:.1f})">{escape(y_label)}</text>')
    for j, (name, ys) in enumerate(series):
        color = "black" if name == "overall" else PALETTE[j % len(PALETTE)]
        dash = ' stroke-dasharray="6 4"' if name == "overall" else ""
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
        out.append(f'<polyline class="series" data-series="{escape(name)}" fill="none" '
                   f'stroke="{color}" stroke-width="1.8"{dash} points="{pts}"/>')
        ly = top + 16 + 18 * j
        out.append(f'<line x1="{left + pw + 15}" y1="{ly}" x2="{left + pw + 40}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{left + pw + 46}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def format_p(p: float) -> str:
    return "<.0005" if p < 0.0005 else f"{p:.4f}"


def test_table(results, version: str = "") -> str:
    """Aligned ``weight | statistic | p-value`` table."""
    rows = [("Weight function", "Test statistic", "p-value")]
    rows += [(r.weight.label, f"{r.z_statistic:.2f}", format_p(r.p_value)) for r in results]
    widths = [max(len(r[k]) for r in rows) for k in range(3)]
    lines = [" | ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "-+-".join("-" * w for w in widths))
    if results:
        r = results[0]
        lines.append("")
        lines.append(f"df = {r.df}, tau = {r.tau:g}, bandwidth = {r.bandwidth:.6g}, B = {r.bootstrap_reps}, seed = {r.seed}"
                     + (f", version {version}" if version else ""))
    return "\n".join(lines) + "\n"


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"
