"""Run statistics, aggregate data rate, injection sweeps and saturation."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import SimConfig
from .rng import derive_seed

RESULTS_HEADER = ("protocol", "nodes", "channels", "npt", "rate", "throughput", "mean_latency_cycles",
                  "p99_latency_cycles", "aggregate_gbps", "collision_rate", "dropped")


@dataclass(frozen=True)
class MetricsReport:
    protocol: str
    nodes: int
    channels: int
    npt: int
    rate: float  # configured injection rate, packets/node/cycle
    offered_load: float  # measured arrivals in the window, packets/node/cycle
    delivered: int  # deliveries inside the measurement window
    dropped: int  # drops of packets created inside the window
    mean_latency: Optional[float]  # cycles; None when nothing was delivered
    p99_latency: Optional[float]
    throughput: float  # network-wide deliveries per cycle
    mean_concurrency: float
    collision_rate: float
    link_rate_gbps: float
    measure_cycles: int
    injected_total: int
    delivered_total: int
    dropped_total: int
    queued_end: int
    clock_ghz: Optional[float] = None

    @property
    def aggregate_gbps(self) -> float:
        return self.mean_concurrency * self.link_rate_gbps

    @property
    def mean_latency_ns(self) -> Optional[float]:
        if self.clock_ghz is None or self.mean_latency is None:
            return None
        return self.mean_latency / self.clock_ghz

    def as_dict(self) -> dict:
        d = asdict(self)
        d["aggregate_gbps"] = self.aggregate_gbps
        return d


def summarize(cfg: SimConfig, created: np.ndarray, delivered_at: np.ndarray,
              dropped: np.ndarray, counters: dict) -> MetricsReport:
    """Reduce per-packet outcomes and kernel counters to a report.

    Latency covers packets created inside the measurement window and
    delivered before the run ends.
    """
    W, T, M = cfg.warmup, cfg.total_cycles, cfg.measure_cycles
    created = np.asarray(created)
    in_window = (created >= W) & (created < T)
    got = delivered_at >= 0
    delivered_w = int(np.count_nonzero(got & (delivered_at >= W) & (delivered_at < T)))

    lat = (delivered_at - created)[in_window & got]
    if len(lat):
        mean_lat = float(lat.mean())
        p99 = float(np.percentile(lat, 99))
    else:
        mean_lat = p99 = None

    attempts = counters["attempts_w"]
    return MetricsReport(
        protocol=cfg.protocol.value,
        nodes=cfg.num_nodes,
        channels=cfg.num_freq_channels,
        npt=cfg.npt,
        rate=float(cfg.traffic.injection_rate),
        offered_load=int(np.count_nonzero(in_window)) / (cfg.num_nodes * M),
        delivered=delivered_w,
        dropped=int(np.count_nonzero(in_window & (dropped > 0))),
        mean_latency=mean_lat,
        p99_latency=p99,
        throughput=delivered_w / M,
        mean_concurrency=counters["busy_w"] / M,
        collision_rate=counters["collisions_w"] / attempts if attempts else 0.0,
        link_rate_gbps=float(cfg.link_rate_gbps),
        measure_cycles=M,
        injected_total=len(created),
        delivered_total=int(np.count_nonzero(got)),
        dropped_total=int(np.count_nonzero(dropped)),
        queued_end=int(counters["queued_end"]),
        clock_ghz=cfg.clock_ghz,
    )


def aggregate_gbps(report: MetricsReport, cfg: Optional[SimConfig] = None) -> float:
    """Aggregate data rate: mean simultaneous transmissions times the link rate."""
    rate = cfg.link_rate_gbps if cfg is not None else report.link_rate_gbps
    return report.mean_concurrency * rate


# --------------------------------------------------------------------------
# sweeps

class SweepError(RuntimeError):
    def __init__(self, rate: float, repetition: int, cause: BaseException):
        super().__init__(f"sweep point rate={rate} repetition={repetition}: {cause}")
        self.rate = rate
        self.repetition = repetition


@dataclass(frozen=True)
class SweepRow:
    rate: float
    repetition: int
    seed: int
    report: Optional[MetricsReport]
    error: Optional[str] = None


def point_seed(base_seed: int, rate_index: int, repetition: int) -> int:
    return derive_seed(base_seed, rate_index, repetition)


def worker_count(tasks: int) -> int:
    env = os.environ.get("WNOC_SIM_THREADS")
    limit = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(limit, tasks))


def _run_point(args):
    cfg, backend = args
    from .engine import run
    try:
        return run(cfg, backend=backend), None
    except Exception as exc:  # recorded by the caller
        return None, f"{type(exc).__name__}: {exc}"


def run_points(cfgs: Sequence[SimConfig], *, backend: Optional[str] = None,
               workers: Optional[int] = None) -> list[tuple[Optional[MetricsReport], Optional[str]]]:
    """Run independent configurations on a bounded process pool, preserving order.

    Each entry is ``(report, None)`` or ``(None, error message)``.
    """
    jobs = [(cfg, backend) for cfg in cfgs]
    n = workers if workers is not None else worker_count(len(jobs))
    if n <= 1 or len(jobs) <= 1:
        return [_run_point(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_run_point, jobs))


def sweep(base: SimConfig, rates: Sequence[float], *, repetitions: int = 1,
          backend: Optional[str] = None, workers: Optional[int] = None,
          raise_errors: bool = True) -> list[SweepRow]:
    """One independent run per (rate, repetition), each with its own derived seed.

    Rows come back ordered by rate then repetition regardless of how the
    points were scheduled.
    """
    rates = [float(r) for r in rates]
    if any(b < a for a, b in zip(rates, rates[1:])):
        raise ValueError("sweep rates must be ascending")
    if repetitions < 1:
        raise ValueError("repetitions ≥ 1")
    points = []
    for i, r in enumerate(rates):
        for k in range(repetitions):
            seed = point_seed(base.seed, i, k)
            points.append((r, k, seed, base.replace(injection_rate=r, seed=seed)))
    results = run_points([cfg for *_, cfg in points], backend=backend, workers=workers)
    rows = []
    for (r, k, seed, _), (report, err) in zip(points, results):
        if err is not None and raise_errors:
            raise SweepError(r, k, RuntimeError(err))
        rows.append(SweepRow(r, k, seed, report, err))
    return rows


def _throughput(item) -> float:
    if isinstance(item, MetricsReport):
        return item.throughput
    return float(item)


def group_by_rate(rows: Sequence[SweepRow]) -> list[tuple[float, list[MetricsReport]]]:
    """Successful repetitions per rate, in sweep order."""
    out: dict[float, list[MetricsReport]] = {}
    for row in rows:
        out.setdefault(row.rate, [])
        if row.report is not None:
            out[row.rate].append(row.report)
    return list(out.items())


def saturation_point(curve: Iterable) -> float:
    """Saturation throughput: the largest delivered throughput on the curve.

    Accepts sweep rows (repetitions are averaged per rate first), reports
    or plain throughput values.
    """
    curve = list(curve)
    if curve and isinstance(curve[0], SweepRow):
        values = [float(np.mean([r.throughput for r in reps])) if reps else 0.0
                  for _, reps in group_by_rate(curve)]
    else:
        values = [_throughput(c) for c in curve]
    if len(values) < 3:
        raise ValueError(f"saturation needs a curve of at least 3 points, got {len(values)}")
    return max(values)


# --------------------------------------------------------------------------
# CSV

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite metric {value}")
        return repr(value)
    return str(value)


def results_row(report: MetricsReport) -> list[str]:
    return [_fmt(v) for v in (
        report.protocol, report.nodes, report.channels, report.npt, report.rate, report.throughput,
        report.mean_latency, report.p99_latency, report.aggregate_gbps, report.collision_rate,
        report.dropped)]


def write_results(path: str | Path, reports: Iterable[MetricsReport]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for rep in reports:
            w.writerow(results_row(rep))


def read_results(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


REPORT_FIELDS = tuple(f.name for f in fields(MetricsReport))
