"""Compare the compiled and pure-Python kernels on identical workloads.

Usage: python benchmarks/bench_backends.py [--cycles N] [--repeat K]

Each workload is run once per backend to check that reports and traces
match, then timed ``--repeat`` times; the best time is reported.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from wnoc_sim import Protocol, SimConfig
from wnoc_sim._backend import available
from wnoc_sim.engine import execute, generate_traffic

WORKLOADS = [
    ("trmac npt=3", dict(protocol=Protocol.TRMAC, npt=3), 0.006),
    ("trmac npt=3 saturated", dict(protocol=Protocol.TRMAC, npt=3), 0.02),
    ("brs C=3", dict(protocol=Protocol.BRS, num_freq_channels=3), 0.004),
    ("token C=3", dict(protocol=Protocol.TOKEN, num_freq_channels=3), 0.006),
]


def best_time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cycles", type=int, default=20_000, help="measured cycles per run")
    ap.add_argument("--nodes", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    backends = available()
    if "cython" not in backends:
        print("compiled kernel not built; only the Python backend is available")
    print(f"{'workload':<24}" + "".join(f"{b + ' (s)':>14}" for b in backends) + f"{'speedup':>10}  match")
    for label, kw, rate in WORKLOADS:
        cfg = SimConfig(num_nodes=args.nodes, measure_cycles=args.cycles, **kw).replace(injection_rate=rate)
        runs = [execute(cfg, trace=True, backend=b) for b in backends]
        match = all(r.report == runs[0].report and np.array_equal(r.trace, runs[0].trace) for r in runs)
        arrivals = generate_traffic(cfg)
        times = [best_time(lambda b=b: execute(cfg, backend=b, arrivals=arrivals), args.repeat)
                 for b in backends]
        t = dict(zip(backends, times))
        speedup = f"{t['python'] / t['cython']:.1f}x" if len(t) > 1 else "-"
        print(f"{label:<24}" + "".join(f"{t:>14.3f}" for t in times) + f"{speedup:>10}  {match}")
        if not match:
            return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
