"""Run driver: builds traffic and random streams, calls a kernel, checks the result."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import _backend
from .core import HotspotAxis, IntegrityError, Protocol, SimConfig, validate_config
from .metrics import MetricsReport, summarize
from .rng import mac_stream, phy_stream, traffic_stream, weights_stream
from .traffic import load_trace, on_rates, pareto_alpha, spatial_weights

EVENT_NAMES = ("INJECT", "DROP", "START", "ACK_OK", "NO_ACK", "ERR_ACK", "DELIVER", "TOKEN_PASS", "NACK")
EVENT_CODES = {name: code for code, name in enumerate(EVENT_NAMES)}
TRACE_HEADER = ("cycle", "event", "node", "peer", "channel", "packet_id")


@dataclass(frozen=True)
class Arrivals:
    cycle: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    weights: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.cycle)


@dataclass
class RunResult:
    cfg: SimConfig
    report: MetricsReport
    arrivals: Arrivals
    delivered_at: np.ndarray
    dropped: np.ndarray
    queued_end: int
    backend: str
    # (k, 6) int64 rows, stably sorted by cycle; None unless requested
    trace: Optional[np.ndarray] = None


def generate_traffic(cfg: SimConfig, backend: Optional[str] = None) -> Arrivals:
    """Arrivals for ``cfg``; depends only on seed, node count and traffic settings."""
    t = cfg.traffic
    if t.trace_file:
        cycles, srcs, dsts = load_trace(t.trace_file, cfg.total_cycles, cfg.num_nodes)
        return Arrivals(cycles, srcs, dsts)
    weights = spatial_weights(cfg.num_nodes, t.sigma, weights_stream(cfg.seed).generator())
    rates = on_rates(cfg, weights)
    streams = [traffic_stream(cfg.seed, i) for i in range(cfg.num_nodes)]
    uniform = t.hotspot_axis is HotspotAxis.SOURCES
    cycles, srcs, dsts = _backend.get(backend).generate_arrivals(
        streams, cfg.total_cycles, rates, pareto_alpha(t.hurst), weights, uniform)
    return Arrivals(cycles, srcs, dsts, weights)


def execute(cfg: SimConfig, *, trace: bool = False, backend: Optional[str] = None,
            arrivals: Optional[Arrivals] = None) -> RunResult:
    """Simulate one configuration and return the report with raw per-packet data."""
    validate_config(cfg)
    kernel = _backend.get(backend)
    if arrivals is None:
        arrivals = generate_traffic(cfg, backend)
    macs = [mac_stream(cfg.seed, i) for i in range(cfg.num_nodes)]
    out = kernel.simulate(cfg, arrivals.cycle, arrivals.src, arrivals.dst,
                          phy_stream(cfg.seed), macs, trace)

    delivered_at = out["delivered_at"]
    dropped = out["dropped"]
    injected = len(arrivals)
    n_delivered = int(np.count_nonzero(delivered_at >= 0))
    n_dropped = int(dropped.sum())
    if injected != n_delivered + out["queued_end"] + n_dropped:
        raise IntegrityError(
            f"conservation violated: injected={injected} delivered={n_delivered} "
            f"queued={out['queued_end']} dropped={n_dropped}")

    rows = out["trace"]
    if rows is not None and len(rows):
        rows = rows[np.argsort(rows[:, 0], kind="stable")]
    report = summarize(cfg, arrivals.cycle, delivered_at, dropped, out)
    return RunResult(cfg, report, arrivals, delivered_at, dropped, out["queued_end"],
                     kernel.BACKEND, rows)


def run(cfg: SimConfig, *, backend: Optional[str] = None) -> MetricsReport:
    return execute(cfg, backend=backend).report


# --------------------------------------------------------------------------
# trace output and checking

def write_trace(path: str | Path, rows: Optional[np.ndarray]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        if rows is None:
            return
        for cycle, event, node, peer, channel, pid in rows.tolist():
            w.writerow((cycle, EVENT_NAMES[event], node, peer, channel, pid))


def min_service_cycles(cfg: SimConfig) -> int:
    if cfg.protocol is Protocol.TRMAC:
        return cfg.epoch_len
    return cfg.preamble_cycles + cfg.data_cycles


def verify_run(result: RunResult) -> dict:
    """Check the run-level invariants; raises IntegrityError on the first violation.

    Needs a run executed with ``trace=True``. Returns the observed peak
    concurrency per channel.
    """
    cfg, rows = result.cfg, result.trace
    if rows is None:
        raise ValueError("verify_run needs a traced run")

    created = result.arrivals.cycle
    ok = result.delivered_at >= 0
    early = ok & (result.delivered_at - created < min_service_cycles(cfg))
    if early.any():
        pid = int(np.flatnonzero(early)[0])
        raise IntegrityError(f"packet {pid} delivered at {result.delivered_at[pid]}, created {created[pid]}")

    starts = rows[rows[:, 1] == EVENT_CODES["START"]]
    nacks = {(c, n) for c, n in rows[rows[:, 1] == EVENT_CODES["NACK"]][:, [0, 2]].tolist()}
    cap = cfg.npt if cfg.protocol is Protocol.TRMAC else 1
    E = cfg.epoch_len
    P, D = cfg.preamble_cycles, cfg.data_cycles
    peak = {ch: 0 for ch in range(cfg.num_freq_channels)}
    # group simultaneous starts on one channel into one exchange
    groups: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for cycle, _, node, _, ch, pid in starts.tolist():
        groups.setdefault((ch, cycle), []).append((node, pid))
    busy_until = {ch: 0 for ch in peak}
    tx_until: dict[int, int] = {}
    for (ch, cycle), members in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        if cycle < busy_until[ch]:
            raise IntegrityError(f"cycle {cycle}: channel {ch} started an exchange while busy")
        if cfg.protocol is Protocol.TRMAC:
            length = E
            live = len(members)
        elif cfg.protocol is Protocol.BRS and len(members) > 1:
            # a collided burst is cut after the preamble and never carries
            # data; its NACK is missing only if the run ended first
            done = cycle + P + 1 < cfg.total_cycles
            if done and any((cycle + P, node) not in nacks for node, _ in members):
                raise IntegrityError(f"cycle {cycle}: collided BRS burst on channel {ch} was not NACKed")
            length = P + 1
            live = 1
        else:
            length = P + D
            live = len(members)
        if live > cap:
            raise IntegrityError(
                f"cycle {cycle}: channel {ch} carries {live} transmissions "
                f"(nodes {[m[0] for m in members]}), cap {cap}")
        for node, _ in members:
            if tx_until.get(node, 0) > cycle:
                raise IntegrityError(f"cycle {cycle}: node {node} transmits twice at once")
            tx_until[node] = cycle + length
        busy_until[ch] = cycle + length
        peak[ch] = max(peak[ch], len(members) if cfg.protocol is Protocol.TRMAC else live)
    return peak
