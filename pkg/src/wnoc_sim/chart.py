"""Minimal SVG latency-throughput charts, written by hand.

Each series is a polyline through per-rate means with min/max latency
whiskers; the latency axis is logarithmic because saturated latencies
are orders of magnitude above zero-load ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 160, 40, 55


@dataclass(frozen=True)
class Point:
    throughput: float
    latency: float
    latency_min: float
    latency_max: float


@dataclass(frozen=True)
class Series:
    label: str
    points: Sequence[Point]


def _f(x: float) -> str:
    return f"{x:.2f}"


def _nice_step(span: float) -> float:
    raw = span / 5 if span > 0 else 1.0
    mag = 10 ** math.floor(math.log10(raw))
    for m in (1, 2, 5, 10):
        if raw <= m * mag:
            return m * mag
    return 10 * mag


def render(series: Sequence[Series], title: str) -> str:
    pts = [p for s in series for p in s.points]
    xmax = max([p.throughput for p in pts] + [1e-9])
    step = _nice_step(xmax)
    xmax = step * math.ceil(xmax / step)
    lats = [v for p in pts for v in (p.latency_min, p.latency_max) if v > 0] or [1.0]
    ylo = 10 ** math.floor(math.log10(min(lats)))
    yhi = 10 ** math.ceil(math.log10(max(lats)))
    if yhi <= ylo:
        yhi = ylo * 10
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(x):
        return LEFT + pw * x / xmax

    def sy(y):
        y = max(y, ylo)
        return TOP + ph * (1 - (math.log10(y) - math.log10(ylo)) / (math.log10(yhi) - math.log10(ylo)))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2 - RIGHT / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    k = 0
    while k * step <= xmax + 1e-12:
        x = sx(k * step)
        out.append(f'<line x1="{_f(x)}" y1="{TOP + ph}" x2="{_f(x)}" y2="{TOP + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{_f(x)}" y="{TOP + ph + 16}" text-anchor="middle">{k * step:.3g}</text>')
        k += 1
    decade = ylo
    while decade <= yhi * 1.0001:
        y = sy(decade)
        out.append(f'<line x1="{LEFT - 4}" y1="{_f(y)}" x2="{LEFT + pw}" y2="{_f(y)}" stroke="#ddd"/>')
        out.append(f'<text x="{LEFT - 6}" y="{_f(y + 4)}" text-anchor="end">{decade:g}</text>')
        decade *= 10
    out.append(f'<text x="{LEFT + pw / 2}" y="{HEIGHT - 15}" text-anchor="middle">'
               f'throughput (packets/cycle)</text>')
    out.append(f'<text x="18" y="{TOP + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 18 {TOP + ph / 2})">mean latency (cycles)</text>')

    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_f(sx(p.throughput))},{_f(sy(p.latency))}" for p in s.points)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for p in s.points:
            x = _f(sx(p.throughput))
            out.append(f'<line x1="{x}" y1="{_f(sy(p.latency_min))}" x2="{x}" y2="{_f(sy(p.latency_max))}" '
                       f'stroke="{color}"/>')
            out.append(f'<circle cx="{x}" cy="{_f(sy(p.latency))}" r="2.5" fill="{color}"/>')
        ly = TOP + 14 + 18 * i
        out.append(f'<line x1="{LEFT + pw + 12}" y1="{ly}" x2="{LEFT + pw + 32}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{LEFT + pw + 38}" y="{ly + 4}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_chart(path: str | Path, series: Sequence[Series], title: str) -> None:
    Path(path).write_text(render(series, title))
