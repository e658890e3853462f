"""Minimal deterministic SVG line charts for per-generation CSV series."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 720, 440
MARGIN = dict(left=70, right=170, top=40, bottom=50)
PALETTE = (
    "#000000", "#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad",
    "#d35400", "#16a085", "#7f8c8d", "#b8860b", "#2c3e50",
)


class ChartError(ValueError):
    pass


def read_series(path: str | Path, column: str | None = None) -> tuple[list[float], list[float]]:
    """Read ``(generation, value)`` pairs from a run or aggregate CSV.

    Without ``column`` the first of ``mean_best_waycost`` / ``best_waycost`` present is used.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ChartError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if "generation" not in header:
        raise ChartError(f"{path}: no 'generation' column")
    if column is None:
        column = next((c for c in ("mean_best_waycost", "best_waycost") if c in header), None)
        if column is None:
            raise ChartError(f"{path}: no best waycost column; pass a column name")
    if column not in header:
        raise ChartError(f"{path}: no column {column!r}")
    gi, vi = header.index("generation"), header.index(column)
    xs, ys = [], []
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ChartError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            x, y = float(row[gi]), float(row[vi])
        except ValueError:
            raise ChartError(f"{path}:{lineno}: non-numeric value") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ChartError(f"{path}:{lineno}: non-finite value")
        xs.append(x)
        ys.append(y)
    if not xs:
        raise ChartError(f"{path}: series is empty")
    return xs, ys


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = next(s * mag for s in (1, 2, 5, 10) if s * mag >= raw)
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 10))
        v += step
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def render_chart(series: dict[str, tuple[list[float], list[float]]], title: str = "",
                 ylabel: str = "best waycost") -> str:
    """One polyline per entry of ``series``; generation on the x axis."""
    if not series:
        raise ChartError("nothing to plot")
    for label, (xs, ys) in series.items():
        if not xs or len(xs) != len(ys):
            raise ChartError(f"series {label!r} is empty or ragged")
    x_lo = min(min(xs) for xs, _ in series.values())
    x_hi = max(max(xs) for xs, _ in series.values())
    y_lo = min(min(ys) for _, ys in series.values())
    y_hi = max(max(ys) for _, ys in series.values())
    if x_hi == x_lo:
        x_hi = x_lo + 1
    if y_hi == y_lo:
        y_hi = y_lo + 1
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return MARGIN["left"] + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        return MARGIN["top"] + ph - (y - y_lo) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    x0, y0 = MARGIN["left"], MARGIN["top"] + ph
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0 + pw}" y2="{y0}" stroke="#333"/>')
    out.append(f'<line x1="{x0}" y1="{MARGIN["top"]}" x2="{x0}" y2="{y0}" stroke="#333"/>')
    for t in _ticks(x_lo, x_hi):
        out.append(f'<line x1="{px(t):.2f}" y1="{y0}" x2="{px(t):.2f}" y2="{y0 + 4}" stroke="#333"/>')
        out.append(f'<text x="{px(t):.2f}" y="{y0 + 16}" text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(y_lo, y_hi):
        out.append(f'<line x1="{x0 - 4}" y1="{py(t):.2f}" x2="{x0 + pw}" y2="{py(t):.2f}" stroke="#e5e5e5"/>')
        out.append(f'<text x="{x0 - 6}" y="{py(t) + 4:.2f}" text-anchor="end">{_fmt(t)}</text>')
    out.append(f'<text x="{x0 + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">generation</text>')
    out.append(
        f'<text x="16" y="{MARGIN["top"] + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    for k, (label, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        points = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>')
        ly = MARGIN["top"] + 14 * k + 6
        lx = x0 + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
