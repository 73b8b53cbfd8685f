import dataclasses

import numpy as np
import pytest

from wnoc_sim import Protocol, SimConfig, aggregate_gbps, run, saturation_point, sweep
from wnoc_sim.metrics import RESULTS_HEADER, SweepError, SweepRow, read_results, write_results


@pytest.fixture(scope="module")
def report():
    return run(SimConfig(num_nodes=16, npt=2, measure_cycles=5000).replace(injection_rate=0.01))


@pytest.mark.parametrize("conc, gbps", [(3, 90), (0, 0), (1, 30)])
def test_aggregate_gbps(report, conc, gbps):
    rep = dataclasses.replace(report, mean_concurrency=conc)
    assert aggregate_gbps(rep, SimConfig()) == pytest.approx(gbps)
    assert rep.aggregate_gbps == pytest.approx(gbps)


def test_saturation_point_examples(report):
    assert saturation_point([0.1, 0.3, 0.43, 0.43]) == 0.43
    assert saturation_point([0.0, 0.0, 0.0]) == 0
    assert saturation_point([report, report, report]) == report.throughput
    with pytest.raises(ValueError):
        saturation_point([0.1, 0.2])


def test_saturation_averages_repetitions(report):
    rows = [SweepRow(r, k, 0, dataclasses.replace(report, throughput=t))
            for r, k, t in [(0.1, 0, 0.2), (0.1, 1, 0.4), (0.2, 0, 0.5), (0.2, 1, 0.1), (0.3, 0, 0.35)]]
    assert saturation_point(rows) == pytest.approx(0.35)


def test_zero_rate_sweep():
    rows = sweep(SimConfig(num_nodes=8, measure_cycles=1000), [0.0])
    assert len(rows) == 1 and rows[0].report.throughput == 0


def test_sweep_rates_ascending_and_seeds_distinct():
    base = SimConfig(num_nodes=8, measure_cycles=2000)
    with pytest.raises(ValueError):
        sweep(base, [0.02, 0.01])
    rows = sweep(base, [0.01, 0.02], repetitions=2)
    assert [(r.rate, r.repetition) for r in rows] == [(0.01, 0), (0.01, 1), (0.02, 0), (0.02, 1)]
    assert len({r.seed for r in rows}) == 4
    assert all(r.report.rate == r.rate for r in rows)


def test_sweep_parallel_matches_serial():
    base = SimConfig(num_nodes=8, measure_cycles=3000)
    serial = sweep(base, [0.005, 0.01, 0.03], workers=1)
    parallel = sweep(base, [0.005, 0.01, 0.03], workers=3)
    assert serial == parallel


def test_sweep_error_carries_rate():
    with pytest.raises(SweepError, match="rate=0.9"):
        sweep(SimConfig(num_nodes=8, measure_cycles=100), [0.01, 0.9])
    rows = sweep(SimConfig(num_nodes=8, measure_cycles=100), [0.01, 0.9], raise_errors=False)
    assert rows[0].error is None and "injection_rate" in rows[1].error


def test_npt1_saturation_cap():
    rows = sweep(SimConfig(num_nodes=32, measure_cycles=20000), [0.002, 0.01, 0.05])
    assert saturation_point(rows) <= 1 / 6


@pytest.mark.slow
def test_delivered_matches_offered_below_saturation():
    base = SimConfig(num_nodes=64, npt=3, measure_cycles=200_000, seed=3)
    for rate in (0.0005, 0.001, 0.002):
        rep = run(base.replace(injection_rate=rate))
        offered = rep.offered_load * rep.nodes
        assert rep.throughput == pytest.approx(offered, rel=0.02)


@pytest.mark.slow
def test_latency_grows_with_load():
    base = SimConfig(num_nodes=64, npt=2, measure_cycles=100_000, seed=4)
    rates = [0.0005, 0.001, 0.002, 0.004, 0.008]
    rows = sweep(base, rates, repetitions=3)
    lat = np.array([[r.report.mean_latency for r in rows if r.rate == rate] for rate in rates])
    mean, std = lat.mean(axis=1), lat.std(axis=1)
    for i in range(len(rates) - 1):
        assert mean[i + 1] >= mean[i] - (std[i] + std[i + 1])


def test_results_csv(tmp_path, report):
    empty = dataclasses.replace(report, mean_latency=None, p99_latency=None)
    write_results(tmp_path / "r.csv", [report, empty])
    text = (tmp_path / "r.csv").read_text().splitlines()
    assert text[0] == ",".join(RESULTS_HEADER)
    rows = read_results(tmp_path / "r.csv")
    assert rows[0]["protocol"] == "TRMAC" and float(rows[0]["throughput"]) == report.throughput
    assert rows[1]["mean_latency_cycles"] == "" and rows[1]["p99_latency_cycles"] == ""
    assert float(rows[0]["aggregate_gbps"]) == pytest.approx(report.mean_concurrency * 30)


def test_latency_window_excludes_warmup(tmp_path):
    from conftest import trace_file
    path = trace_file(tmp_path, [(0, 0, 1), (150, 0, 1)])
    rep = run(SimConfig(num_nodes=4, measure_cycles=500, warmup_cycles=100).replace(trace_file=path))
    assert rep.delivered == 1 and rep.mean_latency == 6 and rep.offered_load == 1 / (4 * 500)


def test_ns_conversion(report):
    rep = dataclasses.replace(report, clock_ghz=2.0, mean_latency=6.0)
    assert rep.mean_latency_ns == 3.0
    assert dataclasses.replace(report, clock_ghz=None).mean_latency_ns is None


def test_report_invariants(report):
    assert report.delivered >= 0 and report.throughput <= 2 / 6
    assert np.isfinite([report.mean_latency, report.p99_latency, report.throughput, report.collision_rate]).all()
    assert report.mean_concurrency <= 2
    assert run(SimConfig(num_nodes=16, protocol=Protocol.TOKEN, measure_cycles=3000)
               .replace(injection_rate=0.01)).collision_rate == 0
