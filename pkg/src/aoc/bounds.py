"""Statistical age-of-information and virtual-delay bounds.

An MGF envelope ``(sigma(theta), rho(theta))`` is turned into a statistical
latency-rate curve through the sampling-interval/union-bound/Chernoff chain;
the free parameters ``theta``, ``r`` and ``tau0`` (and, for random arrivals,
the split of the risk budget) are then optimised numerically.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import gammainccinv

from . import curves
from .curves import LatencyRate
from .service import MarkovOnOff, leftover_service, markov_envelope
from .traffic import PeriodicSource, PoissonSource, periodic_envelope, poisson_rho

NAN = math.nan
INF = math.inf

# theta grid of the optimiser: log-spaced over [THETA_SPAN * theta_hi, theta_hi]
THETA_POINTS = 64
THETA_SPAN = 1e-6


@dataclass(frozen=True)
class RiskBudget:
    """Total violation probability and, for random arrivals, its split into
    the upper-envelope part ``upper`` and the lower-envelope part ``lower``."""

    epsilon: float
    upper: Optional[float] = None
    lower: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if (self.upper is None) != (self.lower is None):
            raise ValueError("give both parts of the split or neither")
        if self.upper is not None:
            if not (self.upper > 0 and self.lower > 0):
                raise ValueError("split components must be positive")
            if not math.isclose(self.upper + self.lower, self.epsilon, rel_tol=1e-9):
                raise ValueError("split components must sum to epsilon")

    @classmethod
    def split(cls, epsilon, upper):
        return cls(epsilon, upper, epsilon - upper)


@dataclass(frozen=True)
class BoundParams:
    theta: float
    r: float
    tau0: float
    b: float = NAN


@dataclass(frozen=True)
class BoundResult:
    """Bound on the AoI (``delta_eps``) and on the virtual delay (``v_eps``).

    ``breakdown`` holds the (congestion, idle, latency) terms; ``delta_eps`` is
    ``congestion + idle + latency`` when ``composition == "sum"`` and
    ``max(congestion, idle) + latency`` when it is ``"max"``.
    """

    delta_eps: float
    v_eps: float
    params: BoundParams
    feasible: bool
    breakdown: tuple = (INF, INF, INF)
    composition: str = "sum"
    epsilon: float = NAN
    w: float = NAN
    m: int = 0
    budget: Optional[RiskBudget] = field(default=None, compare=False)

    def composed(self):
        congestion, idle, latency = self.breakdown
        if self.composition == "sum":
            return idle + congestion + latency
        return max(congestion, idle) + latency


def _infeasible(epsilon=NAN, w=NAN, m=0, params=None):
    return BoundResult(INF, INF, params or BoundParams(NAN, NAN, NAN), False,
                       epsilon=epsilon, w=w, m=m)


# ---------------------------------------------------------------------------
# burst parameters


def _b(theta, gap, sigma, r, tau0, log_eps):
    floor = r * tau0 + sigma
    return max(-(math.log(theta * gap * tau0) + log_eps) / theta + floor, floor)


def _check_common(theta, tau0, eps):
    if not theta > 0:
        raise ValueError("theta must be positive")
    if not tau0 > 0:
        raise ValueError("tau0 must be positive")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")


def b_underflow(theta, rho, sigma, r, tau0, eps):
    """Burst of the statistical service curve ``[r t - b]+`` with underflow
    probability ``eps``; never below ``r tau0 + sigma``."""
    _check_common(theta, tau0, eps)
    if not 0 < r < rho:
        raise ValueError("infeasible: need 0 < r < rho(theta)")
    return _b(theta, rho - r, sigma, r, tau0, math.log(eps))


def b_overflow(theta, rho, sigma, r, tau0, eps_upper):
    """Burst of the statistical arrival envelope ``r t + b`` with overflow
    probability ``eps_upper``; never below ``r tau0 + sigma``."""
    _check_common(theta, tau0, eps_upper)
    if not r > rho:
        raise ValueError("infeasible: need r > rho(theta)")
    return _b(theta, r - rho, sigma, r, tau0, math.log(eps_upper))


def optimal_tau0(theta, gap, r, log_eps):
    """Sampling interval minimising the (clamped) burst.

    The unclamped burst is convex in ``tau0`` with minimum at ``1/(theta r)``;
    the clamp ``b >= r tau0 + sigma`` binds beyond ``1/(theta gap eps)``.
    """
    tau_star = 1.0 / (theta * r)
    log_tau_c = -math.log(theta * gap) - log_eps
    if math.log(tau_star) <= log_tau_c:
        return tau_star
    return math.exp(log_tau_c)


# ---------------------------------------------------------------------------
# assembled bounds


def aoi_bound_periodic_service(src, env, params, eps, eta=0, m=0):
    """Periodic updates over a service with MGF envelope ``env``.

    ``delta = (eta + 1) w + (b + l) / r`` and ``v = (b + 2 l) / r``; infeasible
    unless ``l/w <= r < rho(theta)``.
    """
    theta, r, tau0 = params.theta, params.r, params.tau0
    rho = env.rho(theta)
    if not (src.l / src.w <= r < rho) or not (theta > 0 and tau0 > 0):
        return _infeasible(eps, src.w, m, params)
    sigma = env.sigma(theta)
    try:
        b = b_underflow(theta, rho, sigma, r, tau0, eps)
    except (ValueError, OverflowError):
        return _infeasible(eps, src.w, m, params)
    congestion = b / r
    latency = src.l / r
    idle = (eta + 1) * src.w
    delta = idle + congestion + latency
    v = (b + 2.0 * src.l) / r
    if not (math.isfinite(delta) and math.isfinite(v)):
        return _infeasible(eps, src.w, m, params)
    return BoundResult(delta, v, BoundParams(theta, r, tau0, b), True,
                       (congestion, idle, latency), "sum", eps, src.w, m)


def poisson_lower_u_eta(w, eps_lower, eta=0):
    """Time within which at least ``eta + 1`` Poisson arrivals occur w.p. ``1 - eps_lower``."""
    if eta == 0:
        return -w * math.log(eps_lower)
    return w * float(gammainccinv(eta + 1, eps_lower))


def aoi_bound_random_arrivals(src, c, t0, budget, params, eta=0):
    """Poisson updates over a latency-rate server ``c [t - t0]+``.

    ``delta = max((b + eta l)/c, u) + t0`` with ``b`` from the overflow profile
    at ``budget.upper`` and ``u`` from the lower envelope at ``budget.lower``.
    """
    if budget.upper is None:
        raise ValueError("random arrivals need a split risk budget")
    theta, r, tau0 = params.theta, params.r, params.tau0
    if not theta > 0:
        return _infeasible(budget.epsilon, src.w, 0, params)
    try:
        rho = poisson_rho(src, theta)
    except OverflowError:
        return _infeasible(budget.epsilon, src.w, 0, params)
    if not (rho < r <= c) or not tau0 > 0:
        return _infeasible(budget.epsilon, src.w, 0, params)
    b = b_overflow(theta, rho, 0.0, r, tau0, budget.upper)
    congestion = (b + eta * src.l) / c
    idle = poisson_lower_u_eta(src.w, budget.lower, eta)
    latency = t0
    delta = max(congestion, idle) + latency
    v = b / c + t0
    return BoundResult(delta, v, BoundParams(theta, r, tau0, b), True,
                       (congestion, idle, latency), "max", budget.epsilon, src.w, 0, budget)


def worst_case_periodic(src, service, eta=0):
    """Deterministic bound for periodic updates over a latency-rate server
    including the packetizer; ``epsilon`` plays no role."""
    pkt = curves.packetize_transform(service, src.l)
    upper = curves.Staircase(src.l, src.w, "ceil")
    lower = curves.Staircase(src.l, src.w, "floor")
    if upper.long_run_rate > pkt.long_run_rate:
        return _infeasible(w=src.w)
    congestion, idle = curves.aoi_deviation_parts(pkt, upper, lower, eta * src.l)
    delta = max(congestion, idle) + 0.0
    v = curves.horizontal_deviation(upper, pkt)
    return BoundResult(delta, v, BoundParams(NAN, service.rate, NAN, NAN), bool(np.isfinite(delta)),
                       (congestion, idle, 0.0), "max", NAN, src.w, 0)


# ---------------------------------------------------------------------------
# optimisation


def _workers(workers):
    if workers is not None:
        return max(int(workers), 1)
    env = os.environ.get("AOC_THREADS")
    return max(int(env), 1) if env else 1


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _theta_ceiling(rho, target, theta_max=INF):
    """Largest theta with ``rho(theta) > target`` for decreasing ``rho``;
    ``None`` when even ``theta -> 0`` fails."""
    lo = 1e-9
    if not rho(lo) > target:
        return None
    hi = 1.0
    while rho(hi) > target:
        hi *= 2.0
        if hi > theta_max or hi > 1e12:
            return min(hi, theta_max)
    lo = min(lo, hi / 2)
    return brentq(lambda th: rho(th) - target, lo, hi, xtol=1e-14 * hi, rtol=1e-14)


def _argmin(evals):
    # deterministic reduction: value, then lexicographic (theta, r, tau0)
    return min(evals, key=lambda e: (e[0], e[1], e[2], e[3]))


def _search_theta(inner, theta_hi, workers):
    grid = np.geomspace(THETA_SPAN * theta_hi, theta_hi, THETA_POINTS)
    evals = _map(inner, list(grid), workers)
    best = _argmin(evals)
    if not math.isfinite(best[0]):
        return best
    i = next(k for k, e in enumerate(evals) if e == best)
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(lambda x: inner(math.exp(x))[0], bounds=(math.log(lo), math.log(hi)),
                          method="bounded", options={"xatol": 1e-10})
    refined = inner(math.exp(res.x))
    return _argmin([best, refined])


def _optimize_periodic(src, service_env, eps, m=0, eta=0, workers=None):
    env = leftover_service(service_env, periodic_envelope(src), m)
    l, r_min = src.l, src.l / src.w
    log_eps = math.log(eps)
    theta_hi = _theta_ceiling(env.rho, r_min, env.theta_max)
    if theta_hi is None:
        return _infeasible(eps, src.w, m)

    def inner(theta):
        theta = float(theta)
        rho = env.rho(theta)
        if not rho > r_min:
            return (INF, theta, NAN, NAN)
        sigma = env.sigma(theta)

        def obj(r):
            gap = rho - r
            if not gap > 0:
                return INF
            tau0 = optimal_tau0(theta, gap, r, log_eps)
            return (_b(theta, gap, sigma, r, tau0, log_eps) + l) / r

        res = minimize_scalar(obj, bounds=(r_min, rho), method="bounded",
                              options={"xatol": 1e-12 * rho, "maxiter": 500})
        r = min([(obj(r_min), r_min), (float(res.fun), float(res.x))])[1]
        return (obj(r), theta, r, optimal_tau0(theta, rho - r, r, log_eps))

    best = _search_theta(inner, theta_hi, _workers(workers))
    if not math.isfinite(best[0]):
        return _infeasible(eps, src.w, m)
    _, theta, r, tau0 = best
    return aoi_bound_periodic_service(src, env, BoundParams(theta, r, tau0), eps, eta, m)


def priority_aoi_bound(src, channel, m, eps, eta=0, workers=None):
    """AoI bound of the flow ranked ``m + 1`` behind ``m`` iid periodic flows
    that share a Markov on-off channel under static priority."""
    if m < 0:
        raise ValueError("m must be non-negative")
    return _optimize_periodic(src, markov_envelope(channel), eps, m, eta, workers)


def _poisson_theta_ceiling(src, r):
    rho = lambda th: poisson_rho(src, th)
    return brentq(lambda th: rho(th) - r, 1e-12, _theta_bracket(rho, r), xtol=1e-15, rtol=1e-14)


def _overflow_search(src, r, log_eu, theta_c, workers):
    def inner(theta):
        theta = float(theta)
        gap = r - poisson_rho(src, theta)
        if not gap > 0:
            return (INF, theta, r, NAN)
        tau0 = optimal_tau0(theta, gap, r, log_eu)
        return (_b(theta, gap, 0.0, r, tau0, log_eu), theta, r, tau0)
    return _search_theta(inner, theta_c, workers)


def min_overflow_burst(src, r, eps_upper, workers=None):
    """Smallest burst ``b`` of a Poisson envelope ``r t + b`` with overflow
    probability ``eps_upper``; returns ``BoundParams`` (theta, r, tau0, b)."""
    if not src.l / src.w < r:
        raise ValueError("infeasible: need r > l / w")
    if not 0 < eps_upper < 1:
        raise ValueError("eps_upper must lie in (0, 1)")
    theta_c = _poisson_theta_ceiling(src, r)
    b, theta, _, tau0 = _overflow_search(src, r, math.log(eps_upper), theta_c, _workers(workers))
    return BoundParams(theta, r, tau0, b)


def _optimize_random_arrivals(src, c, t0, eps, eta=0, workers=None):
    # with r = c the burst is smallest: both its unclamped and clamped forms decrease in r
    if not src.l / src.w < c:
        return _infeasible(eps, src.w)
    theta_c = _poisson_theta_ceiling(src, c)
    n_workers = _workers(workers)
    r = c

    def best_b(log_eu):
        return _overflow_search(src, r, log_eu, theta_c, n_workers)

    def terms(x):
        bb = best_b(x)
        congestion = (bb[0] + eta * src.l) / c
        lower = eps - math.exp(x)
        idle = poisson_lower_u_eta(src.w, lower, eta)
        return congestion, idle, bb

    log_eps = math.log(eps)
    lo, hi = log_eps - 600.0, log_eps + math.log1p(-1e-9)
    c_lo, i_lo, _ = terms(lo)
    c_hi, i_hi, _ = terms(hi)
    if c_lo <= i_lo:
        xs = [lo]
    elif c_hi >= i_hi:
        xs = [hi]
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            cm, im, _ = terms(mid)
            if cm > im:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-13 * max(1.0, abs(lo)):
                break
        xs = [lo, 0.5 * (lo + hi), hi]

    best = None
    for x in xs:
        congestion, idle, bb = terms(x)
        val = max(congestion, idle)
        if best is None or val < best[0]:
            best = (val, x, bb)
    _, x, bb = best
    budget = RiskBudget.split(eps, math.exp(x))
    params = BoundParams(bb[1], bb[2], bb[3])
    return aoi_bound_random_arrivals(src, c, t0, budget, params, eta)


def _theta_bracket(rho, target):
    hi = 1.0
    while rho(hi) < target:
        hi *= 2.0
    return hi


def optimize_bound(scenario, w=None, epsilon=None, m=None, workers=None):
    """Smallest AoI bound for one ``(w, epsilon, m)`` point of ``scenario``.

    Deterministic in the scenario; ``workers`` (default ``AOC_THREADS`` or 1)
    only changes how the theta grid is evaluated.
    """
    w = scenario.w_grid[0] if w is None else w
    eps = scenario.epsilons[0] if epsilon is None else epsilon
    m = scenario.m_values[0] if m is None else m
    src = scenario.at(w)
    service = scenario.service
    eta = scenario.loss.run_cap if scenario.loss is not None else 0

    if isinstance(service, LatencyRate):
        if m:
            raise ValueError("priority analysis needs a markov_onoff service")
        if isinstance(src, PeriodicSource):
            res = worst_case_periodic(src, service, eta)
            return BoundResult(res.delta_eps, res.v_eps, res.params, res.feasible, res.breakdown,
                               res.composition, eps, src.w, 0)
        t0 = service.latency + src.l / service.rate
        return _optimize_random_arrivals(src, service.rate, t0, eps, eta, workers)

    if isinstance(service, MarkovOnOff):
        if isinstance(src, PoissonSource):
            raise ValueError("Poisson updates over a markov_onoff channel are not supported")
        return priority_aoi_bound(src, service, m, eps, eta, workers)

    raise TypeError(f"unsupported service {type(service).__name__}")
