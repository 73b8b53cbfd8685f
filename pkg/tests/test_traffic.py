import math

import numpy as np
import pytest
from scipy.stats import chisquare

from wnoc_sim import ConfigError, HotspotAxis, SimConfig
from wnoc_sim.engine import generate_traffic
from wnoc_sim.rng import Stream
from wnoc_sim.traffic import (DestinationSampler, draw_destination, draw_uniform_destination, estimate_hurst,
                              load_trace, new_source, on_rates, pareto_alpha, pareto_period, spatial_weights,
                              step_source)

from conftest import trace_file


@pytest.mark.parametrize("h, alpha", [(0.5, 1.95), (0.75, 1.5), (0.9, 1.2), (1.0, 1.05)])
def test_alpha_mapping_with_clamp(h, alpha):
    assert pareto_alpha(h) == pytest.approx(alpha)


def test_pareto_period_at_least_one():
    rng = Stream(1)
    periods = [pareto_period(1.05, rng) for _ in range(10_000)]
    assert min(periods) >= 1


def test_pareto_tail():
    # P(period >= k) = k^-alpha for the floored Pareto with x_min = 1
    rng = Stream(2)
    periods = np.array([pareto_period(1.5, rng) for _ in range(200_000)])
    for k in (2, 4, 8):
        assert np.mean(periods >= k) == pytest.approx(k ** -1.5, rel=0.05)


def test_zero_rate_never_emits():
    rng = Stream(3)
    src = new_source(0, 0.0, 1.5, rng)
    assert not any(step_source(src, rng)[0] for _ in range(5000))


def test_source_alternates_and_counts_down():
    rng = Stream(4)
    src = new_source(0, 1.0, 1.95, rng)
    modes = []
    for _ in range(2000):
        _, src = step_source(src, rng)
        assert src.remaining >= 1
        modes.append(src.on)
    assert 0.3 < np.mean(modes) < 0.7


def test_on_source_emits_at_on_rate():
    rng = Stream(5)
    src = new_source(0, 0.4, 1.95, rng)
    on_cycles = emitted = 0
    for _ in range(200_000):
        was_on = src.on
        emit, src = step_source(src, rng)
        on_cycles += was_on
        emitted += emit
        assert not emit or was_on
    assert emitted / on_cycles == pytest.approx(0.4, rel=0.02)


def test_spatial_weights_uniform_at_zero():
    w = spatial_weights(64, 0.0, np.random.default_rng(0))
    assert np.all(w == 1 / 64)


@pytest.mark.parametrize("n, sigma", [(64, 0.5), (64, 1.0), (4, 1.0), (64, 3.0), (8, 0.01)])
def test_spatial_weights_spread(n, sigma):
    w = spatial_weights(n, sigma, np.random.default_rng(n))
    assert w.sum() == pytest.approx(1.0, abs=1e-9) and np.all(w >= 0)
    assert np.std(n * w) == pytest.approx(sigma, rel=1e-6)


def test_spatial_weights_extremes():
    w = spatial_weights(9, math.sqrt(8), np.random.default_rng(1))
    assert sorted(w) == [0.0] * 8 + [1.0]
    with pytest.raises(ValueError):
        spatial_weights(9, 3.1, np.random.default_rng(1))


def test_destination_two_nodes():
    rng = Stream(6)
    assert all(draw_uniform_destination(0, 2, rng) == 1 for _ in range(100))
    assert all(draw_destination(0, [0.5, 0.5], rng) == 1 for _ in range(100))


def test_destination_renormalized_after_exclusion():
    rng = Stream(7)
    sampler = DestinationSampler([0.7, 0.1, 0.1, 0.1])
    draws = np.array([sampler.draw(3, rng) for _ in range(100_000)])
    assert 3 not in draws
    assert np.mean(draws == 0) == pytest.approx(0.7 / 0.9, abs=0.01)
    counts = np.bincount(draws, minlength=4)[:3]
    assert chisquare(counts, np.array([0.7, 0.1, 0.1]) / 0.9 * len(draws)).pvalue > 0.01


def test_destination_skips_zero_weight_nodes():
    sampler = DestinationSampler([0.0, 0.5, 0.0, 0.5])
    for u in np.linspace(0, 1, 101, endpoint=False):
        assert sampler.pick(1, u) == 3
        assert sampler.pick(3, u) == 1


def test_destination_chi_square_hotspot():
    w = spatial_weights(16, 1.0, np.random.default_rng(3))
    rng, sampler = Stream(8), DestinationSampler(w)
    src = 5
    draws = np.array([sampler.draw(src, rng) for _ in range(100_000)])
    expected = np.delete(w, src) / (1 - w[src]) * len(draws)
    observed = np.delete(np.bincount(draws, minlength=16), src)
    assert chisquare(observed, expected).pvalue > 0.01


def test_on_rates_axes():
    cfg = SimConfig(num_nodes=4).replace(injection_rate=0.1)
    w = np.array([0.4, 0.3, 0.2, 0.1])
    assert np.allclose(on_rates(cfg, w), 0.2)
    cfg = cfg.replace(hotspot_axis=HotspotAxis.SOURCES)
    assert np.allclose(on_rates(cfg, w), [0.32, 0.24, 0.16, 0.08])


def test_hurst_memoryless():
    x = np.random.default_rng(0).binomial(1, 0.3, 2**20)
    assert estimate_hurst(x) == pytest.approx(0.5, abs=0.05)


def test_hurst_rejects_short_and_constant():
    with pytest.raises(ValueError, match="too short"):
        estimate_hurst(np.ones(1000))
    with pytest.raises(ValueError, match="zero variance"):
        estimate_hurst(np.ones(2**16))


def test_hurst_of_generated_long_memory_traffic():
    # single-source estimates scatter by about 0.02; average four sources
    cfg = SimConfig(num_nodes=4, measure_cycles=2**20, warmup_cycles=0, seed=1).replace(
        injection_rate=0.225, hurst=0.9, sigma=0.0)
    a = generate_traffic(cfg)
    est = [estimate_hurst(np.bincount(a.cycle[a.src == n], minlength=2**20)) for n in range(4)]
    assert 0.8 <= np.mean(est) <= 1.0


def test_generator_pure_function_of_seed():
    cfg = SimConfig(num_nodes=8, measure_cycles=20000).replace(injection_rate=0.05)
    a, b = generate_traffic(cfg), generate_traffic(cfg)
    assert np.array_equal(a.cycle, b.cycle) and np.array_equal(a.dst, b.dst)
    c = generate_traffic(cfg.replace(seed=2))
    assert not np.array_equal(a.cycle, c.cycle)


def test_generator_output_well_formed():
    cfg = SimConfig(num_nodes=8, measure_cycles=20000).replace(injection_rate=0.05, sigma=1.5)
    a = generate_traffic(cfg)
    assert np.all(np.diff(a.cycle) >= 0) and np.all(a.src != a.dst)
    assert a.cycle.min() >= 0 and a.cycle.max() < cfg.total_cycles
    # one packet per source per cycle at most
    keys = a.cycle * 8 + a.src
    assert len(np.unique(keys)) == len(keys)


def test_trace_roundtrip(tmp_path):
    path = trace_file(tmp_path, [(0, 1, 2), (0, 0, 3), (5, 2, 1)])
    c, s, d = load_trace(path, 10, 4)
    assert c.tolist() == [0, 0, 5] and s.tolist() == [0, 1, 2] and d.tolist() == [3, 2, 1]


@pytest.mark.parametrize("rows, message", [
    ([(12, 0, 1)], "outside"),
    ([(3, 0, 1), (2, 0, 1)], "not sorted"),
    ([(1, 0, 0)], "bad src/dst"),
    ([(1, 0, 9)], "bad src/dst"),
])
def test_trace_rejects_bad_rows(tmp_path, rows, message):
    with pytest.raises(ConfigError, match=message):
        load_trace(trace_file(tmp_path, rows), 10, 4)


def test_trace_header_and_missing(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ConfigError, match="header"):
        load_trace(p, 10, 4)
    with pytest.raises(FileNotFoundError):
        load_trace(tmp_path / "none.csv", 10, 4)


def test_destination_when_source_holds_all_mass():
    # the hot node itself must still reach someone
    s = DestinationSampler([0.0, 1.0, 0.0, 0.0])
    assert sorted({s.pick(1, u) for u in np.linspace(0, 0.999, 50)}) == [0, 2, 3]
    s = DestinationSampler([1.0, 1e-300, 0.0])
    assert {s.pick(0, u) for u in np.linspace(0, 0.999, 20)} == {1}


def test_generator_at_maximum_sigma():
    cfg = SimConfig(num_nodes=8, measure_cycles=5000).replace(injection_rate=0.05, sigma=np.sqrt(7))
    a = generate_traffic(cfg)
    assert np.all(a.src != a.dst) and a.dst.min() >= 0
