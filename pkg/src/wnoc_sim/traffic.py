"""Synthetic bursty/hotspot traffic, trace replay and traffic estimators.

Temporal burstiness comes from ON/OFF sources whose period lengths are
Pareto distributed with shape ``alpha = 3 - 2H``; spatial concentration
comes from a per-node weight vector whose normalized spread equals sigma.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ConfigError, HotspotAxis, SimConfig
from .rng import Stream

ALPHA_MIN, ALPHA_MAX = 1.05, 1.95


def pareto_alpha(hurst: float) -> float:
    return min(max(3.0 - 2.0 * hurst, ALPHA_MIN), ALPHA_MAX)


def pareto_period(alpha: float, rng: Stream) -> int:
    """Pareto period length in whole cycles, at least 1."""
    return int((1.0 - rng.random()) ** (-1.0 / alpha))


@dataclass
class SourceProcess:
    node: int
    on: bool
    remaining: int
    on_rate: float
    alpha: float


def new_source(node: int, on_rate: float, alpha: float, rng: Stream) -> SourceProcess:
    on = rng.random() < 0.5
    return SourceProcess(node, on, pareto_period(alpha, rng), on_rate, alpha)


def step_source(src: SourceProcess, rng: Stream) -> tuple[bool, SourceProcess]:
    """Advance one cycle; returns whether a packet is emitted this cycle."""
    emit = False
    if src.on and src.on_rate > 0.0:
        emit = src.on_rate >= 1.0 or rng.random() < src.on_rate
    src.remaining -= 1
    if src.remaining == 0:
        src.on = not src.on
        src.remaining = pareto_period(src.alpha, rng)
    return emit, src


def spatial_weights(n: int, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Random weights summing to 1 whose scaled spread std(n*w) equals sigma.

    A Gaussian draw fixes which nodes are hot; the sharpness of the
    softmax over it is solved by bisection so the spread is exact.
    """
    if n < 2:
        raise ValueError("need at least two nodes")
    max_sigma = math.sqrt(n - 1)
    if sigma < 0 or sigma > max_sigma * (1 + 1e-12):
        raise ValueError(f"sigma={sigma} outside achievable range [0, {max_sigma:.6g}]")
    z = rng.standard_normal(n)
    if sigma == 0:
        return np.full(n, 1.0 / n)
    if sigma >= max_sigma:
        w = np.zeros(n)
        w[int(np.argmax(z))] = 1.0
        return w
    z = z - z.max()

    def spread(beta: float) -> float:
        v = np.exp(beta * z)
        return float(np.std(n * v / v.sum()))

    lo, hi = 0.0, 1.0
    while spread(hi) < sigma:
        lo, hi = hi, hi * 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if spread(mid) < sigma:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    v = np.exp(0.5 * (lo + hi) * z)
    return v / v.sum()


class DestinationSampler:
    """Draw destinations proportionally to weights, excluding the source.

    The compiled kernel mirrors :meth:`pick` operation for operation.
    """

    def __init__(self, weights: Sequence[float]):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or len(w) < 2 or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be a non-negative vector of length >= 2")
        self.positive = (w > 0).astype(np.uint8)
        self.cum_array = np.cumsum(w / w.sum())
        self.cum = self.cum_array.tolist()
        self.n = len(self.cum)

    def _weight(self, i: int) -> float:
        return self.cum[i] - (self.cum[i - 1] if i > 0 else 0.0)

    def pick(self, src: int, u: float) -> int:
        cum, n = self.cum, self.n
        start = cum[src - 1] if src > 0 else 0.0
        w_src = cum[src] - start
        rest = cum[n - 1] - w_src
        if rest <= 0.0:
            return self._pick_fallback(src, u)
        x = u * rest
        if x >= start:
            x += w_src
        dst = bisect.bisect_right(cum, x)
        while dst < n and (dst == src or self._weight(dst) <= 0.0):
            dst += 1
        if dst >= n:
            dst = n - 1
            while dst == src or self._weight(dst) <= 0.0:
                dst -= 1
        return dst

    def _pick_fallback(self, src: int, u: float) -> int:
        # the source holds all representable mass: choose uniformly among
        # the other positive-weight nodes, or among all others if none
        others = [i for i in range(self.n) if i != src and self.positive[i]]
        if not others:
            others = [i for i in range(self.n) if i != src]
        return others[int(u * len(others))]

    def draw(self, src: int, rng: Stream) -> int:
        return self.pick(src, rng.random())


def draw_destination(src: int, weights: Sequence[float], rng: Stream) -> int:
    return DestinationSampler(weights).draw(src, rng)


def draw_uniform_destination(src: int, n: int, rng: Stream) -> int:
    dst = rng.below(n - 1)
    return dst + 1 if dst >= src else dst


def on_rates(cfg: SimConfig, weights: np.ndarray) -> np.ndarray:
    """Per-node ON-state emission probabilities.

    ON and OFF periods share one distribution, so sources are ON half the
    time and emit with twice their mean rate while ON.
    """
    rate = cfg.traffic.injection_rate
    if cfg.traffic.hotspot_axis is HotspotAxis.SOURCES:
        per_node = rate * cfg.num_nodes * np.asarray(weights, dtype=float)
    else:
        per_node = np.full(cfg.num_nodes, rate)
    return np.minimum(1.0, 2.0 * per_node)


def estimate_hurst(series: Sequence[float], max_level: int = 10) -> float:
    """Variance-time Hurst estimate over aggregation levels 2^0..2^max_level."""
    x = np.asarray(series, dtype=float)
    if len(x) < 2**16:
        raise ValueError(f"series too short for a Hurst estimate: {len(x)} < 65536")
    levels = 2 ** np.arange(max_level + 1)
    variances = []
    for m in levels:
        k = len(x) // m
        variances.append(x[: k * m].reshape(k, m).mean(axis=1).var())
    variances = np.asarray(variances)
    if np.any(variances <= 0):
        raise ValueError("degenerate series: zero variance at some aggregation level")
    slope = np.polyfit(np.log(levels), np.log(variances), 1)[0]
    return float(np.clip(1.0 + slope / 2.0, 0.5, 1.0))


def load_trace(path: str | Path, total_cycles: int, num_nodes: int):
    """Read a ``cycle,src,dst`` arrival trace into sorted numpy arrays."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"trace not found: {path}")
    cycles, srcs, dsts = [], [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["cycle", "src", "dst"]:
            raise ConfigError(f"{path}: expected header 'cycle,src,dst'")
        last = -1
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                c, s, d = (int(v) for v in row)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: malformed row {row!r}") from None
            if not 0 <= c < total_cycles:
                raise ConfigError(f"{path}:{lineno}: cycle {c} outside [0, {total_cycles})")
            if c < last:
                raise ConfigError(f"{path}:{lineno}: rows not sorted by cycle")
            if not (0 <= s < num_nodes and 0 <= d < num_nodes) or s == d:
                raise ConfigError(f"{path}:{lineno}: bad src/dst pair ({s}, {d})")
            last = c
            cycles.append(c)
            srcs.append(s)
            dsts.append(d)
    cycles = np.asarray(cycles, dtype=np.int64)
    srcs = np.asarray(srcs, dtype=np.int32)
    dsts = np.asarray(dsts, dtype=np.int32)
    order = np.lexsort((srcs, cycles))
    return cycles[order], srcs[order], dsts[order]
