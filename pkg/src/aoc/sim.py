"""Trace-level fluid queueing simulator and AoI measurement.

The server is simulated exactly in continuous time.  A channel sample path
``S(t)`` (cumulative service offered) is piecewise linear; FCFS service is
computed in the *work domain*: message ``n`` arriving at ``T_A(n)`` sees work
coordinate ``a_n = S(T_A(n))``, finishes at work coordinate
``s_n = max(s_{n-1}, a_n) + l_n`` and departs at ``S^{-1}(s_n)``.  Everything
is vectorised, so 10^6 departures take well under a second.
"""
from __future__ import annotations

import csv
import dataclasses
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .curves import LatencyRate, PwlCurve
from .service import MarkovOnOff
from .traffic import PeriodicSource, PoissonSource

INF = math.inf


def _rng(seed=None, rng=None):
    return rng if rng is not None else np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# arrivals and channel paths


def gen_arrivals(src, horizon, seed=None, rng=None):
    """Arrival times in ``[0, horizon)``.

    Periodic: ``phase + n w``.  Poisson: iid exponential gaps of mean ``w``
    starting from 0.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if isinstance(src, PeriodicSource):
        n = int(math.ceil((horizon - src.phase) / src.w))
        t = src.phase + src.w * np.arange(max(n, 0), dtype=float)
        return t[t < horizon]
    if isinstance(src, PoissonSource):
        g = _rng(seed, rng)
        chunks, last = [], 0.0
        size = int(horizon / src.w * 1.05) + 64
        while last < horizon:
            t = last + np.cumsum(g.exponential(src.w, size))
            chunks.append(t)
            last = t[-1]
        t = np.concatenate(chunks)
        return t[t < horizon]
    raise TypeError(f"unknown source {type(src).__name__}")


class ChannelPath:
    """Piecewise-constant rate process tiling ``[0, horizon]``.

    ``starts[i]`` is the beginning of interval ``i`` and ``rates[i]`` its rate.
    Service beyond ``horizon`` is not defined: work that cannot be completed
    inside the path maps to departure time ``inf``.
    """

    def __init__(self, starts, rates, horizon, seed=None):
        starts = np.asarray(starts, dtype=float)
        rates = np.asarray(rates, dtype=float)
        if starts.size == 0 or starts.size != rates.size:
            raise ValueError("starts and rates must be non-empty and equally long")
        if starts[0] != 0 or np.any(np.diff(starts) <= 0) or starts[-1] >= horizon:
            raise ValueError("interval starts must begin at 0, increase and end before the horizon")
        if np.any(rates < 0):
            raise ValueError("rates must be non-negative")
        self.starts, self.rates, self.horizon, self.seed = starts, rates, float(horizon), seed
        self.knots = np.append(starts, self.horizon)
        self.cum = np.concatenate([[0.0], np.cumsum(rates * np.diff(self.knots))])

    @classmethod
    def constant(cls, rate, horizon):
        return cls([0.0], [rate], horizon)

    @classmethod
    def from_intervals(cls, intervals, horizon):
        """From ``[(start, rate), ...]``."""
        starts, rates = zip(*intervals)
        return cls(starts, rates, horizon)

    def work(self, t):
        """Cumulative service ``S(0, t)``."""
        return np.interp(t, self.knots, self.cum)

    def work_between(self, s, t):
        return self.work(t) - self.work(s)

    def inverse(self, y):
        """``inf{t : S(t) >= y}``; ``inf`` beyond the end of the path."""
        y = np.asarray(y, dtype=float)
        k = np.searchsorted(self.cum, y, side="left")
        kk = np.clip(k - 1, 0, self.rates.size - 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = self.knots[kk] + (y - self.cum[kk]) / self.rates[kk]
        t = np.where(k == 0, 0.0, t)
        t = np.where(k > self.rates.size, INF, t)
        return float(t) if t.ndim == 0 else t

    def on_fraction(self):
        return float(np.sum(np.diff(self.knots)[self.rates > 0]) / self.horizon)

    def to_curve(self):
        return PwlCurve.from_points(self.knots, self.cum, final_slope=0.0)


def gen_markov_path(ch, horizon, seed=None, rng=None):
    """Sample path of the on-off channel with stationary initial state."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    g = _rng(seed, rng)
    on = bool(g.random() < ch.p_on)
    # even chunk length: every chunk starts in the initial state
    n = 2 * (int(1.1 * horizon / ch.beta) + 8)
    means = np.empty(n)
    means[0::2] = 1.0 / ch.mu if on else 1.0 / ch.lam
    means[1::2] = 1.0 / ch.lam if on else 1.0 / ch.mu
    chunks, total = [], 0.0
    while total < horizon:
        h = g.exponential(means)
        chunks.append(h)
        total += h.sum()
    starts = np.concatenate([[0.0], np.cumsum(np.concatenate(chunks))[:-1]])
    starts = starts[starts < horizon]
    state = np.zeros(starts.size, dtype=bool)
    state[0::2] = on
    state[1::2] = not on
    return ChannelPath(starts, np.where(state, ch.c, 0.0), horizon, seed)


def markov_work_samples(ch, t, n, seed=None, rng=None):
    """``S(0, t)`` for ``n`` independent stationary channel paths (vectorised)."""
    g = _rng(seed, rng)
    on = g.random(n) < ch.p_on
    clock = np.zeros(n)
    work = np.zeros(n)
    active = np.ones(n, dtype=bool)
    while active.any():
        idx = np.flatnonzero(active)
        hold = g.exponential(np.where(on[idx], 1.0 / ch.mu, 1.0 / ch.lam))
        dt = np.minimum(hold, t - clock[idx])
        work[idx] += np.where(on[idx], ch.c * dt, 0.0)
        clock[idx] += hold
        on[idx] = ~on[idx]
        active[idx] = clock[idx] < t
    return work


# ---------------------------------------------------------------------------
# traces


@dataclass
class EventTrace:
    """Per-message records; message ``n`` of the trace is row ``n``."""

    flow: np.ndarray
    t_arrival: np.ndarray
    size: np.ndarray
    t_departure: np.ndarray
    error: np.ndarray

    def __post_init__(self):
        self.flow = np.asarray(self.flow, dtype=int)
        self.t_arrival = np.asarray(self.t_arrival, dtype=float)
        self.size = np.asarray(self.size, dtype=float)
        self.t_departure = np.asarray(self.t_departure, dtype=float)
        self.error = np.asarray(self.error, dtype=bool)
        n = self.t_arrival.size
        if not all(a.size == n for a in (self.flow, self.size, self.t_departure, self.error)):
            raise ValueError("trace columns must have equal length")

    def __len__(self):
        return self.t_arrival.size

    @property
    def n(self):
        return np.arange(1, len(self) + 1)

    def for_flow(self, flow):
        m = self.flow == flow
        return EventTrace(self.flow[m], self.t_arrival[m], self.size[m], self.t_departure[m],
                          self.error[m])

    def completed(self):
        """Messages that departed inside the simulated horizon."""
        m = np.isfinite(self.t_departure)
        return EventTrace(self.flow[m], self.t_arrival[m], self.size[m], self.t_departure[m],
                          self.error[m])

    @np.errstate(invalid="ignore")
    def check(self):
        """Raise if causality, positive sizes or per-flow FCFS order fail."""
        if np.any(self.size <= 0):
            raise AssertionError("non-positive message size")
        if np.any(self.t_departure < self.t_arrival):
            raise AssertionError("departure before arrival")
        for f in np.unique(self.flow):
            m = self.flow == f
            if np.any(np.diff(self.t_arrival[m]) < 0) or np.any(np.diff(self.t_departure[m]) < 0):
                raise AssertionError(f"flow {f} is not FCFS")
        return True

    # cumulative functions -------------------------------------------------

    def arrival_curve(self, flow=None):
        tr = self if flow is None else self.for_flow(flow)
        return _step_curve(tr.t_arrival, tr.size)

    def departure_curve(self, flow=None, informative=False):
        """Packetized departure curve; with ``informative`` the curve only jumps
        at error-free departures, to the cumulative size up to that message."""
        tr = (self if flow is None else self.for_flow(flow)).completed()
        if not informative:
            return _step_curve(tr.t_departure, tr.size)
        order = np.argsort(tr.t_arrival, kind="stable")
        cum = np.cumsum(tr.size[order])
        ok = ~tr.error[order]
        td = tr.t_departure[order][ok]
        levels = cum[ok]
        if td.size == 0:
            return PwlCurve([0.0], [0.0], [0.0])
        # use the levels directly: re-summing their differences would drift from A by an ulp
        ut, last = np.unique(td[::-1], return_index=True)
        return PwlCurve(ut, levels[::-1][last], np.zeros(ut.size))

    # csv ------------------------------------------------------------------

    COLUMNS = ("n", "flow", "t_arrival_ms", "size_kb", "t_departure_ms", "error")

    def to_csv(self, path, seed=None, scenario_id=None, timestamp=None):
        with open(path, "w", newline="") as fh:
            _write_header(fh, seed, scenario_id, timestamp)
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for row in zip(self.n, self.flow, self.t_arrival, self.size, self.t_departure, self.error):
                w.writerow([row[0], row[1], _fmt(row[2]), _fmt(row[3]), _fmt(row[4]), int(row[5])])

    @classmethod
    def from_csv(cls, path):
        rows = _read_rows(path)
        if not rows:
            return cls([], [], [], [], [])
        cols = list(zip(*rows))
        return cls(np.array(cols[1], dtype=int), np.array(cols[2], dtype=float),
                   np.array(cols[3], dtype=float), np.array(cols[4], dtype=float),
                   np.array(cols[5], dtype=int).astype(bool))


def _step_curve(times, sizes):
    """Left-continuous step function jumping by ``sizes`` after ``times``."""
    times = np.asarray(times, dtype=float)
    sizes = np.asarray(sizes, dtype=float)
    if times.size == 0:
        return PwlCurve([0.0], [0.0], [0.0])
    order = np.argsort(times, kind="stable")
    t, s = times[order], sizes[order]
    ut, first = np.unique(t, return_index=True)
    cum = np.cumsum(s)
    last = np.append(first[1:], t.size) - 1
    return PwlCurve(ut, cum[last], np.zeros(ut.size))


def _fmt(x):
    return repr(float(x))


def _write_header(fh, seed, scenario_id, timestamp):
    if scenario_id is not None:
        fh.write(f"# scenario: {scenario_id}\n")
    if seed is not None:
        fh.write(f"# seed: {seed}\n")
    if timestamp is not None:
        fh.write(f"# created: {timestamp}\n")


def _read_rows(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    next(reader, None)
    return [r for r in reader if r]


def read_header(path):
    """Comment-header entries ``# key: value`` of a CSV written by this module."""
    out = {}
    with open(path) as fh:
        for ln in fh:
            if not ln.startswith("#"):
                break
            key, _, val = ln[1:].partition(":")
            out[key.strip()] = val.strip()
    return out


# ---------------------------------------------------------------------------
# servers


def _fcfs_work(a, sizes):
    """Finishing work coordinates of a fluid FCFS queue fed at work points ``a``."""
    cum = np.cumsum(sizes)
    prev = cum - sizes
    return cum + np.maximum.accumulate(a - prev)


def serve_fcfs(arrivals, path, sizes=1.0, packetized=True, errors=None, latency=0.0, flow=0):
    """FCFS fluid server driven by ``path``; messages depart when their last
    bit is served, plus a constant ``latency``.

    Whole-message departures make the output packetized automatically; the
    ``packetized`` flag is kept on the trace for :func:`fluid_departure_curve`,
    which yields the bit-level departure curve instead.
    """
    t_a = np.asarray(arrivals, dtype=float)
    if np.any(np.diff(t_a) < 0):
        raise ValueError("arrivals must be sorted")
    sz = np.broadcast_to(np.asarray(sizes, dtype=float), t_a.shape).copy()
    s = _fcfs_work(path.work(t_a), sz)
    t_d = path.inverse(s) + latency
    err = np.zeros(t_a.size, dtype=bool) if errors is None else np.asarray(errors, dtype=bool)
    return EventTrace(np.full(t_a.size, flow), t_a, sz, np.atleast_1d(t_d), err)


class _Leftover:
    """Work left to lower priorities: ``g(u) = u - (work of a fluid FCFS queue
    fed at work points a)``, with ``g`` flat while that queue is busy."""

    def __init__(self, a, sizes):
        if a.size == 0:
            self.bs = self.be = self.c0 = np.zeros(0)
            return
        f = _fcfs_work(a, sizes)
        start = f - sizes
        new = np.concatenate([[True], start[1:] > f[:-1]])
        idx = np.flatnonzero(new)
        self.bs = start[idx]
        self.be = f[np.append(idx[1:], f.size) - 1]
        # busy work completed before each busy period
        self.c0 = np.concatenate([[0.0], np.cumsum(self.be - self.bs)[:-1]])

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.bs.size == 0:
            return u
        j = np.searchsorted(self.bs, u, side="right") - 1
        jj = np.clip(j, 0, None)
        busy = self.c0[jj] + np.clip(np.minimum(u, self.be[jj]) - self.bs[jj], 0.0, None)
        return np.where(j < 0, u, u - busy)

    def inverse(self, s):
        """``inf{u : g(u) >= s}``."""
        s = np.asarray(s, dtype=float)
        if self.bs.size == 0:
            return s
        k = np.searchsorted(self.bs - self.c0, s, side="left")
        total = np.concatenate([[0.0], np.cumsum(self.be - self.bs)])
        return s + total[k]


def serve_priority(flows: Sequence, path, sizes=1.0, errors=None):
    """Fluid preemptive-resume static priority; ``flows[0]`` has highest priority.

    ``sizes`` is a scalar or one size (array) per flow; ``errors`` optionally
    one flag array per flow.
    """
    if len(flows) == 0:
        raise ValueError("need at least one flow")
    per_size = sizes if isinstance(sizes, (list, tuple)) else [sizes] * len(flows)
    cols = []
    hi_a, hi_l = np.zeros(0), np.zeros(0)
    for k, arr in enumerate(flows):
        t_a = np.asarray(arr, dtype=float)
        if np.any(np.diff(t_a) < 0):
            raise ValueError("arrivals must be sorted")
        sz = np.broadcast_to(np.asarray(per_size[k], dtype=float), t_a.shape).copy()
        a = path.work(t_a)
        g = _Leftover(hi_a, hi_l)
        s = _fcfs_work(g(a), sz)
        t_d = np.atleast_1d(path.inverse(g.inverse(s)))
        no_err = errors is None or errors[k] is None
        err = np.zeros(t_a.size, dtype=bool) if no_err else np.asarray(errors[k], dtype=bool)
        cols.append((np.full(t_a.size, k), t_a, sz, t_d, err))
        # merge this flow into the higher-priority aggregate (work-domain arrivals)
        order = np.argsort(np.concatenate([hi_a, a]), kind="stable")
        hi_a = np.concatenate([hi_a, a])[order]
        hi_l = np.concatenate([hi_l, sz])[order]
    return EventTrace(*(np.concatenate(c) for c in zip(*cols)))


def fluid_departure_curve(arrivals, path, sizes=1.0):
    """Bit-level departure curve of a FCFS fluid server (partial service counts)."""
    t_a = np.asarray(arrivals, dtype=float)
    sz = np.broadcast_to(np.asarray(sizes, dtype=float), t_a.shape).copy()
    a = path.work(t_a)
    g = _Leftover(a, sz)
    t_end = float(path.inverse(_fcfs_work(a, sz)[-1])) if t_a.size else 0.0
    t_end = min(t_end, path.horizon)
    cand = np.concatenate([[0.0, t_end], path.knots[path.knots < t_end],
                           np.atleast_1d(path.inverse(g.bs)), np.atleast_1d(path.inverse(g.be))])
    cand = np.unique(cand[np.isfinite(cand) & (cand >= 0) & (cand <= t_end)])
    u = path.work(cand)
    served = u - g(u)
    return PwlCurve.from_points(cand, served, final_slope=0.0) if cand.size > 1 else \
        PwlCurve([0.0], [0.0], [0.0])


# ---------------------------------------------------------------------------
# message errors


def error_flags(n, p_error, seed=None, rng=None, max_run=None):
    """iid error flags with probability ``p_error``; runs of consecutive errors
    are cut at ``max_run`` (the next message is forced error-free)."""
    if not 0 <= p_error < 1:
        raise ValueError("p_error must lie in [0, 1)")
    flags = _rng(seed, rng).random(n) < p_error
    if max_run is not None:
        run = 0
        last = -2
        for i in np.flatnonzero(flags):
            run = run + 1 if i == last + 1 else 1
            last = i
            if run > max_run:
                flags[i] = False
                run, last = 0, -2
    return flags


# ---------------------------------------------------------------------------
# measurement


@dataclass
class AoiSampleSet:
    """Peak AoI just before each informative departure, and per-message delays.

    ``t``/``aoi``/``delay`` are aligned per informative departure;
    ``delays`` holds ``T_D - T_A`` of every departed message of the flow.
    """

    t: np.ndarray
    aoi: np.ndarray
    delay: np.ndarray
    delays: np.ndarray
    seed: Optional[int] = None

    @property
    def count(self):
        return int(self.aoi.size)

    def drop(self, k):
        """Discard the first ``k`` peak samples (warm-up from the empty start)."""
        return dataclasses.replace(self, t=self.t[k:], aoi=self.aoi[k:], delay=self.delay[k:])

    def aoi_quantile(self, q):
        return empirical_quantile(self.aoi, q)

    def delay_quantile(self, q):
        return empirical_quantile(self.delays, q)

    def to_csv(self, path, seed=None, scenario_id=None, timestamp=None):
        with open(path, "w", newline="") as fh:
            _write_header(fh, self.seed if seed is None else seed, scenario_id, timestamp)
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t_ms", "aoi_ms", "delay_ms"))
            for row in zip(self.t, self.aoi, self.delay):
                w.writerow([_fmt(x) for x in row])

    @classmethod
    def from_csv(cls, path):
        rows = _read_rows(path)
        a = np.array(rows, dtype=float).reshape(-1, 3)
        seed = read_header(path).get("seed")
        return cls(a[:, 0], a[:, 1], a[:, 2], a[:, 2], None if seed is None else int(seed))


def measure_aoi(trace, flow=0, seed=None):
    """Peak AoI ``T_D(k) - T_A(j)`` at each informative departure ``k``, where
    ``j`` is the previous informative message.  Before the first informative
    departure the age counts from time 0, so that sample is ``T_D(k)``."""
    tr = trace.for_flow(flow).completed()
    if len(tr) == 0:
        raise ValueError(f"no departed messages for flow {flow}")
    order = np.argsort(tr.t_departure, kind="stable")
    td, ta, err = tr.t_departure[order], tr.t_arrival[order], tr.error[order]
    ok = ~err
    td_i, ta_i = td[ok], ta[ok]
    ref = np.concatenate([[0.0], ta_i[:-1]])
    return AoiSampleSet(t=td_i, aoi=td_i - ref, delay=td_i - ta_i, delays=td - ta, seed=seed)


def oracle_aoi(A, D, t, side="left"):
    """``sup{d in [0, t] : D(t) - A(t - d) <= 0}`` by direct evaluation.

    ``side="right"`` uses ``D(t+)`` (the age just after a departure).  The
    infimum ``inf{s : A(s) >= D(t)}`` is located by scanning the breakpoints
    of ``A`` and bisecting inside the bracketing segment.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    y = float(D(t) if side == "left" else D.right(t))
    a_now = float(A(t) if side == "left" else A.right(t))
    if y > a_now + 1e-9 * max(1.0, abs(a_now)):
        raise ValueError("causality violated: D(t) > A(t)")
    if y <= 0:
        return float(t)
    pts = np.concatenate([[0.0], A.t[(A.t > 0) & (A.t < t)], [t]])
    for i in range(1, pts.size):
        lo, hi = pts[i - 1], pts[i]
        if float(A.right(lo)) >= y:
            return float(t - lo)
        if float(A(hi)) >= y:
            # A is continuous on (lo, hi]; bisect for the first s with A(s) >= y
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                if float(A(mid)) >= y:
                    hi = mid
                else:
                    lo = mid
            return float(t - hi)
    # only reachable for side="right" with the jump at t itself
    return 0.0


def max_aoi(A, D, t_end):
    """Largest age on ``[0, t_end]``.

    The age drops only where ``D`` jumps or crosses a level of ``A`` at one of
    its breakpoints, so the supremum is a left limit at one of those epochs.
    """
    levels = np.concatenate([A(A.t), A.right(A.t)])
    cross = np.atleast_1d(D.pinv_upper(levels))
    cand = np.concatenate([D.t, cross, [t_end]])
    cand = np.unique(cand[np.isfinite(cand) & (cand >= 0) & (cand <= t_end)])
    return max(oracle_aoi(A, D, float(c)) for c in cand)


def virtual_delay(A, D, t):
    """``inf{v >= 0 : D(t + v) >= A(t+)}``: delay of the last bit arrived by ``t``."""
    y = float(A.right(t))
    return max(float(D.pinv_lower(y)) - t, 0.0)


def max_virtual_delay(A, D):
    return max(virtual_delay(A, D, float(c)) for c in A.t)


def empirical_quantile(samples, q):
    """Order-statistic quantile rounded up (conservative)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty sample set")
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    if (1.0 - q) * x.size < 100:
        warnings.warn(f"only {(1.0 - q) * x.size:.1f} expected exceedances; quantile {q} is unreliable",
                      RuntimeWarning, stacklevel=2)
    return float(np.quantile(x, q, method="higher"))


def exceedance(samples, levels):
    """Empirical ``P[X > level]`` for each level."""
    x = np.sort(np.asarray(samples, dtype=float))
    lv = np.asarray(levels, dtype=float)
    return 1.0 - np.searchsorted(x, lv, side="right") / x.size


# ---------------------------------------------------------------------------
# envelope checks on sample paths


def underflow_event(path, r, b):
    """``exists tau <= T: S(tau, T) < r (T - tau) - b`` with ``T = path.horizon``."""
    x = r * path.knots - path.cum
    return bool(np.max(x[-1] - np.minimum.accumulate(x)) > b)


def underflow_frequency(ch, r, b, n_paths, horizon, seed=None):
    g = np.random.default_rng(seed)
    hits = sum(underflow_event(gen_markov_path(ch, horizon, rng=g), r, b) for _ in range(n_paths))
    return hits / n_paths


def overflow_event(arrivals, size, r, b, t):
    """``exists tau <= t: A(tau, t) > r (t - tau) + b`` for arrivals in ``[0, t)``."""
    ta = np.asarray(arrivals, dtype=float)
    ta = ta[ta < t]
    if ta.size == 0:
        return False
    count = size * np.arange(ta.size, 0, -1)
    return bool(np.max(count - r * (t - ta)) > b)


def overflow_frequency(src, r, b, n_paths, horizon, seed=None):
    g = np.random.default_rng(seed)
    hits = sum(overflow_event(gen_arrivals(src, horizon, rng=g), src.l, r, b, horizon)
               for _ in range(n_paths))
    return hits / n_paths


# ---------------------------------------------------------------------------
# scenario driver


def simulate(source, service, samples, seed=0, m=0, p_error=0.0, max_run=None, horizon=None):
    """Simulate ``source`` (plus ``m`` higher-priority copies with random phase)
    until about ``samples`` informative departures of the tagged flow.

    Returns ``(trace, sample_set)``; the tagged flow has id ``m``.
    """
    g = np.random.default_rng(seed)
    if horizon is None:
        horizon = (samples / max(1.0 - p_error, 1e-3) + 2) * source.w * 1.02 + 10.0
    if isinstance(source, PeriodicSource):
        srcs = [dataclasses.replace(source, phase=float(g.uniform(0, source.w))) if m else source
                for _ in range(m + 1)]
    else:
        srcs = [source] * (m + 1)
    arrivals = [gen_arrivals(s, horizon, rng=g) for s in srcs]
    # leave room for the backlog at the end of the arrival window
    path_end = horizon * 1.25 + 100.0
    if isinstance(service, MarkovOnOff):
        path = gen_markov_path(service, path_end, rng=g)
        latency = 0.0
    elif isinstance(service, LatencyRate):
        path = ChannelPath.constant(service.rate, path_end)
        latency = service.latency
    else:
        raise TypeError(f"unsupported service {type(service).__name__}")
    errs = [error_flags(a.size, p_error, rng=g, max_run=max_run) if p_error > 0 else None
            for a in arrivals]
    if m == 0:
        trace = serve_fcfs(arrivals[0], path, source.l, errors=errs[0], latency=latency)
    else:
        trace = serve_priority(arrivals, path, source.l, errors=errs)
        trace.t_departure = trace.t_departure + latency
    return trace, measure_aoi(trace, flow=m, seed=seed)
