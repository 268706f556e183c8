"""Sweep/probe result tables and self-contained SVG charts.

CSV files carry a header row; floats are written with "%.17g" so values
round-trip exactly and re-runs with identical configs produce identical
numeric fields. Charts are plain hand-assembled SVG with no plotting
dependencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

__all__ = [
    "SweepRow",
    "ProbeRow",
    "write_sweep_csv",
    "read_sweep_csv",
    "write_probe_csv",
    "read_probe_csv",
    "svg_line_chart",
]


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


@dataclass(frozen=True)
class SweepRow:
    """One (model, suite, test graph) cell of a shift sweep."""

    model: str
    shift: str
    seed: int
    graph_index: int  # one-based suite index (tests are 3..12)
    adjacency_gap: float
    rmse: float
    status: str = "ok"


SWEEP_COLUMNS = ("model", "shift", "seed", "graph_index", "adjacency_gap", "rmse", "status")


def write_sweep_csv(path, rows: list[SweepRow]) -> None:
    lines = [",".join(SWEEP_COLUMNS)]
    for r in rows:
        lines.append(
            ",".join(
                (
                    r.model,
                    r.shift,
                    str(int(r.seed)),
                    str(int(r.graph_index)),
                    _fmt(r.adjacency_gap),
                    _fmt(r.rmse),
                    r.status,
                )
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_sweep_csv(path) -> list[SweepRow]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0] != ",".join(SWEEP_COLUMNS):
        raise ConfigError(f"{path}: unexpected sweep CSV header")
    out = []
    for ln in lines[1:]:
        model, shift, seed, gi, gap, rmse, status = ln.split(",")
        out.append(
            SweepRow(
                model=model,
                shift=shift,
                seed=int(seed),
                graph_index=int(gi),
                adjacency_gap=float(gap),
                rmse=float(rmse),
                status=status,
            )
        )
    return out


@dataclass(frozen=True)
class ProbeRow:
    """Representation sensitivity of one model at one perturbation."""

    model: str
    flip_count: int
    perturb_seed: int
    adjacency_gap: float
    representation_change: float
    relative_change: float


PROBE_COLUMNS = (
    "model",
    "flip_count",
    "perturb_seed",
    "adjacency_gap",
    "representation_change",
    "relative_change",
)


def write_probe_csv(path, rows: list[ProbeRow]) -> None:
    lines = [",".join(PROBE_COLUMNS)]
    for r in rows:
        lines.append(
            ",".join(
                (
                    r.model,
                    str(int(r.flip_count)),
                    str(int(r.perturb_seed)),
                    _fmt(r.adjacency_gap),
                    _fmt(r.representation_change),
                    _fmt(r.relative_change),
                )
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_probe_csv(path) -> list[ProbeRow]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0] != ",".join(PROBE_COLUMNS):
        raise ConfigError(f"{path}: unexpected probe CSV header")
    out = []
    for ln in lines[1:]:
        model, fc, ps, gap, change, rel = ln.split(",")
        out.append(
            ProbeRow(
                model=model,
                flip_count=int(fc),
                perturb_seed=int(ps),
                adjacency_gap=float(gap),
                representation_change=float(change),
                relative_change=float(rel),
            )
        )
    return out


# ---------------------------------------------------------------------------
# SVG


PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#9467bd",
    "#ff7f0e",
    "#8c564b",
    "#17becf",
    "#e377c2",
)

_W, _H = 800, 500
_ML, _MR, _MT, _MB = 70, 160, 50, 60  # margins: left, right, top, bottom


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if not math.isfinite(lo) or not math.isfinite(hi) or hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def svg_line_chart(path, title: str, xlabel: str, ylabel: str, series) -> None:
    """Write a polyline chart with optional error bars.

    `series` is a list of (name, points) where points is a list of
    (x, y, yerr) triples; pass yerr = 0 for plain lines.
    """
    xs = [p[0] for _, pts in series for p in pts]
    ys = [p[1] + abs(p[2]) for _, pts in series for p in pts]
    ys += [p[1] - abs(p[2]) for _, pts in series for p in pts]
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    pad_x = 0.04 * (x_hi - x_lo)
    pad_y = 0.08 * (y_hi - y_lo)
    x_lo, x_hi = x_lo - pad_x, x_hi + pad_x
    y_lo, y_hi = y_lo - pad_y, y_hi + pad_y

    def sx(x: float) -> float:
        return _ML + (x - x_lo) / (x_hi - x_lo) * (_W - _ML - _MR)

    def sy(y: float) -> float:
        return _H - _MB - (y - y_lo) / (y_hi - y_lo) * (_H - _MT - _MB)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="24" text-anchor="middle" font-size="15">{title}</text>',
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>',
        f'<text x="{(_ML + _W - _MR) / 2:.1f}" y="{_H - 18}" text-anchor="middle">{xlabel}</text>',
        f'<text x="20" y="{(_MT + _H - _MB) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 20 {(_MT + _H - _MB) / 2:.1f})">{ylabel}</text>',
    ]
    for tx in _ticks(x_lo + pad_x, x_hi - pad_x):
        parts.append(
            f'<line x1="{sx(tx):.2f}" y1="{_H - _MB}" x2="{sx(tx):.2f}" y2="{_H - _MB + 5}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{sx(tx):.2f}" y="{_H - _MB + 18}" text-anchor="middle">{tx:.3g}</text>'
        )
    for ty in _ticks(y_lo + pad_y, y_hi - pad_y):
        parts.append(
            f'<line x1="{_ML - 5}" y1="{sy(ty):.2f}" x2="{_ML}" y2="{sy(ty):.2f}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{_ML - 8}" y="{sy(ty):.2f}" text-anchor="end" dominant-baseline="middle">{ty:.3g}</text>'
        )
    for si, (name, pts) in enumerate(series):
        color = PALETTE[si % len(PALETTE)]
        pts = sorted(pts, key=lambda p: p[0])
        coords = " ".join(f"{sx(px):.2f},{sy(py):.2f}" for px, py, _ in pts)
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.8"/>'
        )
        for px, py, pe in pts:
            parts.append(f'<circle cx="{sx(px):.2f}" cy="{sy(py):.2f}" r="2.6" fill="{color}"/>')
            if pe:
                parts.append(
                    f'<line x1="{sx(px):.2f}" y1="{sy(py - pe):.2f}" '
                    f'x2="{sx(px):.2f}" y2="{sy(py + pe):.2f}" stroke="{color}" stroke-width="1"/>'
                )
        ly = _MT + 16 + 18 * si
        lx = _W - _MR + 12
        parts.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{lx + 28}" y="{ly}">{name}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
