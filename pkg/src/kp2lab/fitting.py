"""Log-log exponent fits and the CSV/JSON/SVG artifacts produced by experiments."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import json
import math
import os
from pathlib import Path

import numpy as np


@dataclass
class FitResult:
    slope: float
    intercept: float
    max_residual: float
    samples: list = field(default_factory=list)  # (abscissa, ratio, refinement_delta)

    def summary(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "max_residual": self.max_residual}


def fit_loglog(xs, ys, deltas=None) -> FitResult:
    """Least squares for log2 y = slope * log2 x + intercept."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 2:
        raise ValueError("need at least two samples to fit an exponent")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("log-log fit needs positive data")
    order = np.argsort(xs, kind="stable")
    xs, ys = xs[order], ys[order]
    deltas = np.zeros_like(xs) if deltas is None else np.asarray(deltas, dtype=float)[order]
    lx, ly = np.log2(xs), np.log2(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    samples = [(float(a), float(b), float(c)) for a, b, c in zip(xs, ys, deltas)]
    return FitResult(float(slope), float(intercept), float(np.abs(resid).max()), samples)


def thread_count(threads: int | None = None) -> int:
    env = os.environ.get("KP2_THREADS")
    if env:
        return max(1, int(env))
    if threads:
        return max(1, int(threads))
    return os.cpu_count() or 1


def parallel_map(fn, items, threads: int | None = None) -> list:
    """Order-preserving map; each item is computed independently."""
    items = list(items)
    n = thread_count(threads)
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# artifacts

def write_csv(path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


def loglog_svg(points, fit: FitResult | None = None, title: str = "",
               xlabel: str = "x", ylabel: str = "ratio", width: int = 480, height: int = 360) -> str:
    """Log-log scatter with an optional fitted line, as a standalone SVG string."""
    pts = [(math.log2(x), math.log2(y)) for x, y in points if x > 0 and y > 0]
    if not pts:
        pts = [(0.0, 0.0)]
    lx = [p[0] for p in pts]
    ly = [p[1] for p in pts]
    x0, x1 = min(lx), max(lx)
    y0, y1 = min(ly), max(ly)
    if fit is not None:
        y0 = min(y0, fit.slope * x0 + fit.intercept, fit.slope * x1 + fit.intercept)
        y1 = max(y1, fit.slope * x0 + fit.intercept, fit.slope * x1 + fit.intercept)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    m = 50

    def sx(v):
        return m + (v - x0) / (x1 - x0) * (width - 2 * m)

    def sy(v):
        return height - m - (v - y0) / (y1 - y0) * (height - 2 * m)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{m}" y1="{height - m}" x2="{width - m}" y2="{height - m}" stroke="black"/>',
           f'<line x1="{m}" y1="{m}" x2="{m}" y2="{height - m}" stroke="black"/>',
           f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{_esc(title)}</text>',
           f'<text x="{width / 2:.1f}" y="{height - 10}" text-anchor="middle" font-size="12">'
           f'log2 {_esc(xlabel)}</text>',
           f'<text x="14" y="{height / 2:.1f}" font-size="12" '
           f'transform="rotate(-90 14 {height / 2:.1f})">log2 {_esc(ylabel)}</text>']
    for a, b in pts:
        out.append(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="3" fill="steelblue"/>')
    if fit is not None:
        out.append(f'<line x1="{sx(x0):.2f}" y1="{sy(fit.slope * x0 + fit.intercept):.2f}" '
                   f'x2="{sx(x1):.2f}" y2="{sy(fit.slope * x1 + fit.intercept):.2f}" '
                   f'stroke="crimson" stroke-dasharray="4 3"/>')
        out.append(f'<text x="{width - m}" y="{m}" text-anchor="end" font-size="12">'
                   f'slope {fit.slope:.4f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
