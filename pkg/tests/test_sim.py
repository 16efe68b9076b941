import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aoc.curves import LatencyRate
from aoc.service import MarkovOnOff, markov_from_stats
from aoc.sim import (AoiSampleSet, ChannelPath, EventTrace, empirical_quantile, error_flags, exceedance,
                     fluid_departure_curve, gen_arrivals, gen_markov_path, max_aoi, measure_aoi,
                     oracle_aoi, overflow_event, read_header, serve_fcfs, serve_priority, simulate,
                     underflow_event)
from aoc.traffic import PeriodicSource, PoissonSource

CH = markov_from_stats(0.9, 1.0, 8.0)


def random_path(g, horizon, n_int=None):
    n_int = n_int or int(g.integers(1, 12))
    starts = np.sort(g.uniform(0, horizon, n_int - 1))
    starts = np.unique(np.concatenate([[0.0], starts]))
    rates = np.where(g.random(starts.size) < 0.35, 0.0, g.uniform(0.3, 2.0, starts.size))
    return ChannelPath(starts, rates, horizon)


def random_instance(seed, n_max=50):
    g = np.random.default_rng(seed)
    n = int(g.integers(1, n_max + 1))
    arrivals = np.sort(g.uniform(0, 30, n))
    sizes = g.uniform(0.1, 2.0, n)
    # long always-on tail so every message departs
    path = random_path(g, 40.0)
    path = ChannelPath(np.append(path.starts, 40.0), np.append(path.rates, 1.0), 40.0 + sizes.sum() + 1)
    errors = g.random(n) < 0.2
    return arrivals, sizes, path, errors


def inf_formula(arrivals, sizes, path, t):
    """min over tau in arrivals, knots, 0 and t of A(tau) + S(t) - S(tau), with A left-continuous."""
    tau = np.concatenate([arrivals, path.knots, [0.0, t]])
    tau = tau[tau <= t]
    a = np.array([sizes[arrivals < x].sum() for x in tau])
    return float(np.min(a + path.work(t) - path.work(tau)))


# ---------------------------------------------------------------------------
# arrivals and paths


def test_periodic_arrivals():
    assert np.array_equal(gen_arrivals(PeriodicSource(1, 2), 7), [0, 2, 4, 6])
    assert np.array_equal(gen_arrivals(PeriodicSource(1, 2, phase=1), 7), [1, 3, 5])
    assert np.array_equal(gen_arrivals(PeriodicSource(1, 2), 6), [0, 2, 4])
    with pytest.raises(ValueError):
        gen_arrivals(PeriodicSource(1, 2), 0)


def test_poisson_arrivals_mean_gap():
    t = gen_arrivals(PoissonSource(1, 2), 2_000_000, seed=3)
    gaps = np.diff(t)
    assert gaps.size >= 990_000
    assert gaps.mean() == pytest.approx(2.0, rel=0.005)
    assert np.array_equal(t, gen_arrivals(PoissonSource(1, 2), 2_000_000, seed=3))


def test_markov_path_statistics():
    horizon = 1e4 * CH.beta
    p = gen_markov_path(CH, horizon, seed=5)
    assert p.on_fraction() == pytest.approx(CH.p_on, rel=0.01)
    assert set(np.unique(p.rates)) <= {0.0, CH.c}
    assert np.all(p.rates[1:] != p.rates[:-1])
    on_starts = p.starts[1:][p.rates[1:] > 0]
    cycles = np.diff(on_starts)
    assert cycles.mean() == pytest.approx(CH.beta, rel=0.05)
    assert p.knots[0] == 0 and p.knots[-1] == horizon


def test_markov_path_nearly_always_on():
    p = gen_markov_path(MarkovOnOff(1e6, 1e-3, 2.0), 1000.0, seed=1)
    assert p.on_fraction() > 0.999
    assert p.work(1000.0) == pytest.approx(2000.0, rel=1e-3)


def test_path_work_and_inverse():
    p = ChannelPath.from_intervals([(0, 1.0), (1, 0.0), (4, 2.0)], 10.0)
    assert p.work(0.5) == 0.5 and p.work(3.0) == 1.0 and p.work(5.0) == 3.0
    assert p.inverse(1.0) == 1.0
    assert p.inverse(2.0) == 4.5
    assert p.inverse(1e6) == math.inf
    assert p.work_between(0.5, 5) == 2.5
    with pytest.raises(ValueError):
        ChannelPath([1.0], [1.0], 5.0)
    with pytest.raises(ValueError):
        ChannelPath([0.0], [-1.0], 5.0)


# ---------------------------------------------------------------------------
# servers


def test_fcfs_no_queueing():
    a = gen_arrivals(PeriodicSource(1, 2), 50)
    tr = serve_fcfs(a, ChannelPath.constant(1.0, 100), 1.0)
    assert np.allclose(tr.t_departure, a + 1.0)
    tr = serve_fcfs(a, ChannelPath.constant(1.0, 100), 1.0, latency=0.5)
    assert np.allclose(tr.t_departure, a + 1.5)


def test_fcfs_off_interval_delays():
    p = ChannelPath.from_intervals([(0, 1.0), (1, 0.0), (4, 1.0)], 20.0)
    tr = serve_fcfs([1.5], p, 1.0)
    assert tr.t_departure[0] == pytest.approx(5.0)  # waits out the remaining 2.5 ms of off time
    tr = serve_fcfs([0.5], p, 1.0)
    assert tr.t_departure[0] == pytest.approx(4.5)


def test_fcfs_fixture_against_inf_formula():
    # three messages, a service gap on [2, 5)
    p = ChannelPath.from_intervals([(0, 1.0), (2, 0.0), (5, 1.0)], 30.0)
    a = np.array([0.0, 1.0, 1.5])
    sz = np.array([1.5, 1.0, 0.5])
    tr = serve_fcfs(a, p, sz)
    assert np.allclose(tr.t_departure, [1.5, 5.5, 6.0])
    cum = np.cumsum(sz)
    for td, c in zip(tr.t_departure, cum):
        assert inf_formula(a, sz, p, td) == pytest.approx(c)
        assert inf_formula(a, sz, p, td - 1e-6) < c


@pytest.mark.parametrize("seed", range(20))
def test_fcfs_random_against_inf_formula(seed):
    a, sz, p, _ = random_instance(seed)
    tr = serve_fcfs(a, p, sz)
    tr.check()
    cum = np.cumsum(sz)
    fluid = fluid_departure_curve(a, p, sz)
    for td, c in zip(tr.t_departure, cum):
        assert inf_formula(a, sz, p, td) == pytest.approx(c, abs=1e-9)
        assert float(fluid(td)) == pytest.approx(c, abs=1e-9)
    for t in np.random.default_rng(seed).uniform(0, p.horizon, 10):
        assert float(fluid(t)) == pytest.approx(inf_formula(a, sz, p, t), abs=1e-9)


def test_priority_single_flow_is_fcfs():
    a, sz, p, _ = random_instance(4)
    one = serve_priority([a], p, [sz])
    ref = serve_fcfs(a, p, sz)
    assert np.allclose(one.t_departure, ref.t_departure, rtol=0, atol=1e-12)


def test_priority_starvation():
    p = ChannelPath.constant(1.0, 100.0)
    hi = np.arange(0.0, 10.0, 1.0)  # saturates the channel on [0, 10)
    lo = np.array([0.5, 3.0])
    tr = serve_priority([hi, lo], p, 1.0)
    assert np.allclose(tr.for_flow(0).t_departure, hi + 1)
    assert np.allclose(tr.for_flow(1).t_departure, [11.0, 12.0])


def test_priority_preemption_resume():
    p = ChannelPath.constant(1.0, 100.0)
    tr = serve_priority([[1.0], [0.0]], p, [1.0, 2.0])
    # low flow served on [0,1) and [2,3)
    assert tr.for_flow(0).t_departure[0] == pytest.approx(2.0)
    assert tr.for_flow(1).t_departure[0] == pytest.approx(3.0)


@pytest.mark.parametrize("seed", range(15))
def test_priority_work_conservation(seed):
    g = np.random.default_rng(100 + seed)
    k = int(g.integers(2, 5))
    p = random_path(g, 60.0)
    p = ChannelPath(np.append(p.starts, 60.0), np.append(p.rates, 1.0), 500.0)
    flows = [np.sort(g.uniform(0, 40, int(g.integers(1, 15)))) for _ in range(k)]
    sizes = [g.uniform(0.2, 1.5, f.size) for f in flows]
    tr = serve_priority(flows, p, sizes)
    tr.check()
    merged = np.concatenate(flows)
    order = np.argsort(merged, kind="stable")
    ref = serve_fcfs(merged[order], p, np.concatenate(sizes)[order])
    assert tr.t_departure.max() == pytest.approx(ref.t_departure.max(), abs=1e-9)
    for t in np.linspace(0, ref.t_departure.max() + 1, 300):
        work_pr = tr.size[tr.t_departure <= t].sum()
        work_ref = ref.size[ref.t_departure <= t].sum()
        assert abs(work_pr - work_ref) <= (k - 1) * 1.5 + 1e-9
        assert work_pr <= tr.size[tr.t_arrival < t].sum() + 1e-9


# ---------------------------------------------------------------------------
# measurement


def test_measure_aoi_deterministic_steady_state():
    for w, c in [(2.0, 1.0), (5.0, 2.0)]:
        a = gen_arrivals(PeriodicSource(1, w), 200)
        s = measure_aoi(serve_fcfs(a, ChannelPath.constant(c, 400), 1.0))
        assert np.allclose(s.aoi[1:], w + 1.0 / c)
        assert np.allclose(s.delay, 1.0 / c)


def test_measure_aoi_single_message():
    s = measure_aoi(EventTrace([0], [0.0], [1.0], [1.5], [False]))
    assert s.count == 1 and s.aoi[0] == 1.5 and s.delay[0] == 1.5 and s.t[0] == 1.5
    # age counts from the origin before the first informative departure
    s = measure_aoi(EventTrace([0], [2.0], [1.0], [3.0], [False]))
    assert s.aoi[0] == 3.0 and s.delay[0] == 1.0
    with pytest.raises(ValueError):
        measure_aoi(EventTrace([], [], [], [], []))


def test_measure_aoi_errors_never_informative():
    tr = EventTrace([0] * 4, [0.0, 2.0, 4.0, 6.0], [1.0] * 4, [1.0, 3.0, 5.0, 7.0], [False, True, True, False])
    s = measure_aoi(tr)
    assert np.array_equal(s.t, [1.0, 7.0])
    assert np.array_equal(s.aoi, [1.0, 7.0])
    assert s.delays.size == 4


@pytest.mark.parametrize("seed", range(100))
def test_measure_aoi_matches_oracle(seed):
    a, sz, p, errors = random_instance(1000 + seed)
    tr = serve_fcfs(a, p, sz, errors=errors)
    if errors.all():
        return
    s = measure_aoi(tr)
    A = tr.arrival_curve()
    D = tr.departure_curve(informative=True)
    for t, peak in zip(s.t, s.aoi):
        assert oracle_aoi(A, D, float(t)) == pytest.approx(peak, abs=1e-9)
    ok = ~errors
    for td, ta in zip(tr.t_departure[ok], a[ok]):
        assert oracle_aoi(A, D, float(td), side="right") == pytest.approx(td - ta, abs=1e-9)
    assert np.all(s.aoi >= s.delay - 1e-12)


def test_oracle_zero_delay_and_causality():
    A = EventTrace([0] * 3, [1.0, 2.0, 3.0], [1.0] * 3, [1.0, 2.0, 3.0], [False] * 3).arrival_curve()
    assert oracle_aoi(A, A, 2.5) == pytest.approx(0.5)
    from aoc.curves import PwlCurve
    ramp = PwlCurve([0.0], [0.0], [1.0])
    assert oracle_aoi(ramp, ramp, 3.0) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        oracle_aoi(ramp, PwlCurve([0.0], [0.0], [2.0]), 3.0)


def test_max_aoi_deterministic():
    a = gen_arrivals(PeriodicSource(1, 3), 30)
    tr = serve_fcfs(a, ChannelPath.constant(1.0, 60), 1.0)
    assert max_aoi(tr.arrival_curve(), tr.departure_curve(), 25.0) == pytest.approx(4.0)


def test_error_flags():
    f = error_flags(200_000, 0.3, seed=2)
    assert f.mean() == pytest.approx(0.3, abs=0.005)
    f = error_flags(200_000, 0.6, seed=2, max_run=2)
    runs = np.diff(np.flatnonzero(np.diff(np.concatenate([[0], f.astype(int), [0]]))))[::2]
    assert runs.max() <= 2
    assert not error_flags(10, 0.0).any()
    with pytest.raises(ValueError):
        error_flags(10, 1.0)


# ---------------------------------------------------------------------------
# quantiles


def test_quantile_examples():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert empirical_quantile(np.arange(1, 101), 0.99) == 100
        for q in (0.01, 0.5, 0.999):
            assert empirical_quantile(np.full(50, 3.25), q) == 3.25
    with pytest.raises(ValueError):
        empirical_quantile([], 0.5)
    with pytest.raises(ValueError):
        empirical_quantile([1.0], 1.0)


def test_quantile_warns_on_few_samples():
    with pytest.warns(RuntimeWarning):
        empirical_quantile(np.arange(1000), 0.99)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        empirical_quantile(np.arange(10_000), 0.99)


def test_quantile_exponential():
    x = np.random.default_rng(9).exponential(2.0, 1_000_000)
    assert empirical_quantile(x, 0.999) == pytest.approx(-2.0 * math.log(1e-3), rel=0.05)
    assert exceedance(x, [0.0])[0] == 1.0
    assert exceedance(x, [-2.0 * math.log(0.01)])[0] == pytest.approx(0.01, rel=0.05)


# ---------------------------------------------------------------------------
# envelope events


def test_underflow_event():
    p = ChannelPath.from_intervals([(0, 1.0), (2, 0.0), (5, 1.0)], 10.0)
    # worst window [2, 5): r * 3 - 0 service
    assert underflow_event(p, 1.0, 2.9)
    assert not underflow_event(p, 1.0, 3.0)


def test_overflow_event():
    a = [0.0, 0.1, 0.2, 5.0]
    # tau = 0: three arrivals in [0, 0.3) against 0.3 of rate
    assert overflow_event(a, 1.0, 1.0, 2.6, 0.3)
    assert not overflow_event(a, 1.0, 1.0, 2.8, 0.3)
    assert not overflow_event(a, 1.0, 1.0, 0.0, 6.0)
    assert not overflow_event([], 1.0, 1.0, 0.0, 6.0)


# ---------------------------------------------------------------------------
# driver, reproducibility and csv


@settings(max_examples=25)
@given(st.integers(0, 2**31), st.sampled_from([1.5, 2.0, 4.0]), st.integers(0, 3), st.floats(0, 0.4))
def test_simulate_invariants(seed, w_per_flow, m, p_error):
    # total load (m + 1) / w stays below the mean channel rate
    w = w_per_flow * (m + 1)
    tr, s = simulate(PeriodicSource(1, w), CH, 300, seed=seed, m=m, p_error=p_error)
    tr.check()
    done = tr.completed()
    assert done.size.sum() <= tr.size.sum()
    assert np.all(s.aoi >= s.delay - 1e-12)
    assert np.all(s.aoi >= 0) and np.all(s.delays >= 0)
    assert s.count >= 1


def test_simulate_reproducible():
    a_tr, a_s = simulate(PeriodicSource(1, 4), CH, 2000, seed=11, m=2)
    b_tr, b_s = simulate(PeriodicSource(1, 4), CH, 2000, seed=11, m=2)
    for x, y in ((a_tr.t_arrival, b_tr.t_arrival), (a_tr.t_departure, b_tr.t_departure), (a_s.aoi, b_s.aoi)):
        assert np.array_equal(x, y)
    _, c_s = simulate(PeriodicSource(1, 4), CH, 2000, seed=12, m=2)
    assert not np.array_equal(a_s.aoi[:100], c_s.aoi[:100])


def test_simulate_sample_count_and_poisson():
    _, s = simulate(PeriodicSource(1, 2), CH, 10_000, seed=1)
    assert s.count >= 10_000
    _, s = simulate(PoissonSource(1, 4), LatencyRate(1.0, 0.5), 5000, seed=2)
    assert s.count >= 5000
    assert np.all(s.delays >= 1.5 - 1e-12)


def test_trace_csv_round_trip(tmp_path):
    tr, s = simulate(PeriodicSource(1, 3), CH, 200, seed=4, p_error=0.1)
    tr.to_csv(tmp_path / "t.csv", seed=4, scenario_id="abc")
    back = EventTrace.from_csv(tmp_path / "t.csv")
    for f in ("flow", "t_arrival", "size", "t_departure", "error"):
        assert np.array_equal(getattr(back, f), getattr(tr, f))
    assert read_header(tmp_path / "t.csv") == {"scenario": "abc", "seed": "4"}
    s.to_csv(tmp_path / "s.csv", scenario_id="abc")
    sb = AoiSampleSet.from_csv(tmp_path / "s.csv")
    assert np.array_equal(sb.aoi, s.aoi) and np.array_equal(sb.t, s.t) and sb.seed == 4
