"""Command-line front end: ``wnoc-sim run|sweep|compare|trace``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .chart import Point, Series, write_chart
from .core import ConfigError, IntegrityError, Protocol, SimConfig, config_from_mapping, config_to_mapping, \
    load_config, load_toml, validate_config
from .engine import execute, verify_run, write_trace
from .metrics import (MetricsReport, SweepRow, group_by_rate, point_seed, run_points, saturation_point,
                      sweep, write_results)

DEFAULT_REPETITIONS = 3


# --------------------------------------------------------------------------
# experiment specs

@dataclass(frozen=True)
class SeriesSpec:
    label: str
    overrides: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    base: SimConfig
    rates: tuple[float, ...]
    series: tuple[SeriesSpec, ...]
    repetitions: int = DEFAULT_REPETITIONS
    nodes: tuple[int, ...] = ()
    output_dir: str = "."

    def configs(self, nodes: int, series: SeriesSpec) -> SimConfig:
        data = config_to_mapping(self.base)
        traffic = dict(data.get("traffic", {}))
        for key, value in series.overrides.items():
            if key == "traffic":
                traffic.update(value)
            else:
                data[key] = value
        data["traffic"] = traffic
        data["num_nodes"] = nodes
        return validate_config(config_from_mapping(data))


def _series_label(protocol: str, overrides: dict, base: SimConfig) -> str:
    ch = overrides.get("num_freq_channels", base.num_freq_channels)
    if protocol == Protocol.TRMAC.value:
        npt = overrides.get("npt", base.npt)
        return f"TR-MAC (C={ch}, NPT={npt})"
    return f"{protocol} (C={ch})"


def load_spec(path: str | Path) -> ExperimentSpec:
    data = load_toml(path)
    known = {"name", "base", "rates", "protocols", "protocol_overrides", "series", "repetitions", "nodes",
             "output_dir"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown spec keys: {sorted(unknown)}")
    base = validate_config(config_from_mapping(data.get("base", {})))
    rates = tuple(float(r) for r in data.get("rates", ()))
    if not rates:
        raise ConfigError("spec needs a non-empty 'rates' list")
    if any(b < a for a, b in zip(rates, rates[1:])):
        raise ConfigError("spec rates must be ascending")

    series: list[SeriesSpec] = []
    overrides = data.get("protocol_overrides", {})
    for proto in data.get("protocols", ()):
        proto = str(proto).upper()
        if proto not in Protocol.__members__:
            raise ConfigError(f"unknown protocol {proto!r}")
        ov = dict(overrides.get(proto, {}))
        ov["protocol"] = proto
        series.append(SeriesSpec(_series_label(proto, ov, base), ov))
    for entry in data.get("series", ()):
        entry = dict(entry)
        label = entry.pop("label", None)
        proto = str(entry.get("protocol", base.protocol.value)).upper()
        series.append(SeriesSpec(label or _series_label(proto, entry, base), entry))
    if not series:
        series.append(SeriesSpec(_series_label(base.protocol.value, {}, base)))

    reps = int(data.get("repetitions", DEFAULT_REPETITIONS))
    if reps < 1:
        raise ConfigError("repetitions ≥ 1")
    nodes = tuple(int(n) for n in data.get("nodes", (base.num_nodes,)))
    name = str(data.get("name", Path(path).stem))
    spec = ExperimentSpec(name, base, rates, tuple(series), reps, nodes, str(data.get("output_dir", ".")))
    for n in nodes:
        for s in spec.series:
            spec.configs(n, s)  # validate every combination before running anything
    return spec


# --------------------------------------------------------------------------
# helpers

def apply_flags(cfg: SimConfig, args: argparse.Namespace) -> SimConfig:
    changes: dict[str, Any] = {}
    for flag, name in (("npt", "npt"), ("seed", "seed"), ("nodes", "num_nodes"),
                       ("channels", "num_freq_channels"), ("rate", "injection_rate")):
        value = getattr(args, flag, None)
        if value is not None:
            changes[name] = value
    if getattr(args, "protocol", None):
        changes["protocol"] = Protocol(args.protocol.upper())
    return validate_config(cfg.replace(**changes)) if changes else cfg


def describe(report: MetricsReport) -> str:
    def opt(v):
        return "n/a" if v is None else f"{v:.3f}"
    lines = [
        f"protocol          {report.protocol}",
        f"nodes/channels    {report.nodes}/{report.channels} (npt={report.npt})",
        f"offered load      {report.offered_load:.6f} packets/node/cycle (configured {report.rate:g})",
        f"throughput        {report.throughput:.6f} packets/cycle",
        f"delivered         {report.delivered}",
        f"dropped           {report.dropped}",
        f"mean latency      {opt(report.mean_latency)} cycles",
        f"p99 latency       {opt(report.p99_latency)} cycles",
        f"collision rate    {report.collision_rate:.4f}",
        f"mean concurrency  {report.mean_concurrency:.4f}",
        f"aggregate rate    {report.aggregate_gbps:.3f} Gbps",
    ]
    if report.mean_latency_ns is not None:
        lines.append(f"mean latency      {report.mean_latency_ns:.3f} ns")
    return "\n".join(lines)


def chart_series(label: str, rows: Sequence[SweepRow]) -> Optional[Series]:
    points = []
    for _, reps in group_by_rate(rows):
        lat = [r.mean_latency for r in reps if r.mean_latency is not None]
        if not lat:
            continue
        points.append(Point(float(np.mean([r.throughput for r in reps])), float(np.mean(lat)),
                            float(min(lat)), float(max(lat))))
    return Series(label, points) if points else None


def _ensure_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


# --------------------------------------------------------------------------
# subcommands

def cmd_run(args) -> int:
    cfg = apply_flags(load_config(args.config), args)
    result = execute(cfg, trace=bool(args.trace), backend=args.backend)
    write_results(args.out, [result.report])
    if args.trace:
        write_trace(args.trace, result.trace)
    print(describe(result.report))
    print(f"wrote {args.out}" + (f" and {args.trace}" if args.trace else ""))
    return 0


def cmd_trace(args) -> int:
    cfg = apply_flags(load_config(args.config), args)
    result = execute(cfg, trace=True, backend=args.backend)
    peak = verify_run(result)
    write_trace(args.out, result.trace)
    print(describe(result.report))
    print(f"trace rows {len(result.trace)}; peak concurrency per channel {peak}; invariants hold")
    print(f"wrote {args.out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = apply_flags(load_config(args.config), args)
    rates = [float(r) for r in args.rates.split(",")]
    rows = sweep(cfg, rates, repetitions=args.repetitions, backend=args.backend, raise_errors=False)
    failed = [r for r in rows if r.error]
    write_results(args.out, [r.report for r in rows if r.report is not None])
    label = _series_label(cfg.protocol.value, {}, cfg)
    series = chart_series(label, rows)
    if args.svg and series:
        write_chart(args.svg, [series], f"{label}, {cfg.num_nodes} nodes")
    for _, reps in group_by_rate(rows):
        for rep in reps[:1]:
            lat = "n/a" if rep.mean_latency is None else f"{rep.mean_latency:.2f}"
            print(f"rate {rep.rate:<10g} throughput {rep.throughput:.5f}  latency {lat}")
    if len(rates) >= 3:
        print(f"saturation throughput {saturation_point(rows):.5f} packets/cycle")
    for r in failed:
        print(f"FAILED rate={r.rate} repetition={r.repetition}: {r.error}", file=sys.stderr)
    return 1 if failed else 0


def cmd_compare(args) -> int:
    spec = load_spec(args.spec)
    if args.seed is not None:
        spec = ExperimentSpec(spec.name, spec.base.replace(seed=args.seed), spec.rates, spec.series,
                              spec.repetitions, spec.nodes, spec.output_dir)
    out_dir = _ensure_dir(Path(args.out_dir or spec.output_dir))

    # one flat job list so the pool sees every point at once; seeds are
    # shared across series so protocols face identical traffic
    jobs, keys = [], []
    for n in spec.nodes:
        for s in spec.series:
            cfg = spec.configs(n, s)
            for i, rate in enumerate(spec.rates):
                for k in range(spec.repetitions):
                    seed = point_seed(spec.base.seed, i, k)
                    jobs.append(cfg.replace(injection_rate=rate, seed=seed))
                    keys.append((n, s.label, rate, k, seed))
    results = run_points(jobs, backend=args.backend)

    rows_by: dict[tuple[int, str], list[SweepRow]] = {}
    reports, failed = [], []
    for (n, label, rate, k, seed), (report, err) in zip(keys, results):
        rows_by.setdefault((n, label), []).append(SweepRow(rate, k, seed, report, err))
        if err:
            failed.append(f"nodes={n} series={label!r} rate={rate} repetition={k}: {err}")
        else:
            reports.append(report)

    csv_path = out_dir / f"{spec.name}.csv"
    write_results(csv_path, reports)
    print(f"wrote {csv_path}")
    for n in spec.nodes:
        series = [chart_series(s.label, rows_by[(n, s.label)]) for s in spec.series]
        series = [s for s in series if s is not None]
        suffix = f"_n{n}" if len(spec.nodes) > 1 else ""
        svg_path = out_dir / f"{spec.name}{suffix}.svg"
        if series:
            write_chart(svg_path, series, f"{spec.name}: {n} nodes")
            print(f"wrote {svg_path}")
        for s in spec.series:
            rows = rows_by[(n, s.label)]
            if len(spec.rates) >= 3 and all(r.report is not None for r in rows):
                print(f"  {n:>4} nodes  {s.label:<26} saturation {saturation_point(rows):.5f} packets/cycle")
    for msg in failed:
        print(f"FAILED {msg}", file=sys.stderr)
    return 1 if failed else 0


# --------------------------------------------------------------------------

def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--npt", type=int, help="parallel transmissions per channel")
    p.add_argument("--protocol", choices=[m.value.lower() for m in Protocol] + [m.value for m in Protocol])
    p.add_argument("--rate", type=float, help="injection rate, packets/node/cycle")
    p.add_argument("--seed", type=int)
    p.add_argument("--nodes", type=int)
    p.add_argument("--channels", type=int, help="frequency channels")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wnoc-sim", description=__doc__)
    parser.add_argument("--backend", choices=["cython", "python"], default=None,
                        help="simulation kernel (default: compiled when built)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one configuration")
    p.add_argument("config")
    _add_overrides(p)
    p.add_argument("--out", default="results.csv")
    p.add_argument("--trace", metavar="PATH", help="also write the event trace CSV")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="injection-rate sweep of one configuration")
    p.add_argument("config")
    _add_overrides(p)
    p.add_argument("--rates", required=True, help="comma-separated ascending injection rates")
    p.add_argument("--repetitions", type=int, default=DEFAULT_REPETITIONS)
    p.add_argument("--out", default="sweep.csv")
    p.add_argument("--svg", help="latency-throughput chart path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="run an experiment spec across protocols")
    p.add_argument("spec")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("trace", help="write and check the event trace of one run")
    p.add_argument("config")
    _add_overrides(p)
    p.add_argument("--out", default="trace.csv")
    p.set_defaults(func=cmd_trace)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, IntegrityError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
