"""Trace/summary writers: CSV, gnuplot data and a minimal SVG line chart."""

import csv
import json
import math
from pathlib import Path

import numpy as np

SUMMARY_FIELDS = ["dataset", "method", "seed", "stop_iter", "final_error", "kappa", "wall_time"]


def fmt(x):
    """Shortest round-trip float representation (repr), stable across runs."""
    return repr(float(x))


def write_trace(path, errors):
    lines = ["iter,error"] + [f"{t},{fmt(e)}" for t, e in enumerate(errors)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_trace(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["iter", "error"]:
        raise ValueError(f"{path}: bad header {rows[0]}")
    return np.array([float(r[1]) for r in rows[1:]])


def write_gnuplot(path, traces):
    """One block per (label, errors), blocks separated by two blank lines (gnuplot `index`)."""
    out = []
    for label, errors in traces:
        out.append(f"# {label}")
        out.extend(f"{t} {fmt(e)}" for t, e in enumerate(errors))
        out.extend(["", ""])
    Path(path).write_text("\n".join(out))


def write_summary(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow({k: r[k] for k in SUMMARY_FIELDS})


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    return str(o)


_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]


def write_svg(path, traces, width=640, height=400, title="relative error"):
    """Log-scale error vs iteration, one polyline per trace."""
    pad = 50
    series = [(lab, np.asarray(e, dtype=float)) for lab, e in traces]
    vals = np.concatenate([e[e > 0] for _, e in series if np.any(e > 0)] or [np.array([1.0])])
    lo, hi = math.floor(np.log10(vals.min())), math.ceil(np.log10(vals.max()))
    if hi == lo:
        hi = lo + 1
    tmax = max(len(e) - 1 for _, e in series) or 1

    def px(t):
        return pad + (width - 2 * pad) * t / tmax

    def py(e):
        v = np.log10(max(e, 10.0 ** lo))
        return height - pad - (height - 2 * pad) * (v - lo) / (hi - lo)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<text x="{width / 2}" y="20" text-anchor="middle">{title}</text>',
             f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
             'fill="none" stroke="black"/>']
    for k in range(lo, hi + 1):
        parts.append(f'<text x="{pad - 5}" y="{py(10.0 ** k):.1f}" text-anchor="end" '
                     f'font-size="10">1e{k}</text>')
    parts.append(f'<text x="{width - pad}" y="{height - pad + 15}" text-anchor="end" '
                 f'font-size="10">{tmax}</text>')
    for j, (label, e) in enumerate(series):
        step = max(1, len(e) // 2000)
        idx = list(range(0, len(e), step))
        if idx[-1] != len(e) - 1:
            idx.append(len(e) - 1)
        pts = " ".join(f"{px(t):.1f},{py(e[t]):.1f}" for t in idx)
        color = _COLORS[j % len(_COLORS)]
        parts.append(f'<polyline fill="none" stroke="{color}" points="{pts}"/>')
        parts.append(f'<text x="{width - pad - 5}" y="{pad + 15 * (j + 1)}" text-anchor="end" '
                     f'font-size="11" fill="{color}">{label}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
