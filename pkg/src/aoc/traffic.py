"""Arrival models: periodic and Poisson update sources.

Units are kb and ms throughout, so a rate of 1 kb/ms equals 1 Mb/s.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .curves import PwlCurve, Staircase

# keeps exp(theta * l) inside double range
_EXP_LIMIT = 700.0


@dataclass(frozen=True)
class PeriodicSource:
    l: float
    w: float
    phase: float = 0.0

    def __post_init__(self):
        if not (self.l > 0 and self.w > 0):
            raise ValueError("packet length and update interval must be positive")
        if not 0 <= self.phase < self.w:
            raise ValueError("phase must lie in [0, w)")

    @property
    def mean_rate(self):
        return self.l / self.w


@dataclass(frozen=True)
class PoissonSource:
    l: float
    w: float

    def __post_init__(self):
        if not (self.l > 0 and self.w > 0):
            raise ValueError("packet length and mean inter-arrival time must be positive")

    @property
    def mean_rate(self):
        return self.l / self.w


@dataclass(frozen=True)
class MgfEnvelope:
    """``(sigma(theta), rho(theta))`` exponential-moment envelope.

    For arrivals ``E[exp(theta A(s,t))] <= exp(theta (rho (t-s) + sigma))``; for
    a service process the dual lower bound with ``-theta``.
    """

    sigma: Callable[[float], float]
    rho: Callable[[float], float]
    theta_max: float = math.inf
    kind: str = "arrival"

    def feasible(self, theta):
        """Per-theta feasibility: a usable envelope needs ``rho(theta) > 0``."""
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        ok = np.array([self.rho(float(x)) > 0 for x in th])
        return bool(ok[0]) if np.ndim(theta) == 0 else ok


@dataclass(frozen=True)
class LowerEnvelopeStep:
    """Statistical lower arrival envelope ``1{t > u} (l_min + loss_shift)``."""

    u: float
    l_min: float
    loss_shift: float = 0.0

    def __post_init__(self):
        if not (self.u > 0 and self.l_min > 0):
            raise ValueError("u and l_min must be positive")
        if self.loss_shift < 0:
            raise ValueError("loss_shift must be non-negative")

    def curve(self):
        return PwlCurve([self.u], [self.l_min + self.loss_shift], [0.0])


def _check_theta(theta):
    if not theta > 0:
        raise ValueError("theta must be positive")


def periodic_envelopes(src):
    """Deterministic upper and lower envelopes ``l ceil(t/w)`` and ``l floor(t/w)``."""
    return Staircase(src.l, src.w, "ceil"), Staircase(src.l, src.w, "floor")


def poisson_rho(src, theta):
    _check_theta(theta)
    return math.expm1(theta * src.l) / (theta * src.w)


def poisson_envelope(src):
    return MgfEnvelope(sigma=lambda theta: 0.0, rho=lambda theta: poisson_rho(src, theta),
                       theta_max=_EXP_LIMIT / src.l, kind="arrival")


def _log_mix(x, z):
    """``ln(1 + x (e^z - 1))`` for ``x`` in ``[0, 1]`` without overflow."""
    if z < 30.0:
        return math.log1p(x * math.expm1(z))
    if x <= 0:
        return 0.0
    if x >= 1:
        return z
    return float(np.logaddexp(math.log1p(-x), math.log(x) + z))


def periodic_mgf_log(src, theta, t):
    """``ln E[exp(theta A(s, s+t))]`` for a periodic source with uniform random phase."""
    if t < 0:
        raise ValueError("t must be non-negative")
    q = t / src.w
    k = math.floor(q)
    z = theta * src.l
    return z * k + _log_mix(q - k, z)


def periodic_sigma(src, theta):
    """Burst parameter of a uniformly phased periodic source at rate ``l/w``.

    The objective ``ln(1 + x(e^z - 1))/theta - l x`` over the phase fraction
    ``x`` is concave, so its maximiser is the stationary point clipped to
    ``[0, 1]``.
    """
    _check_theta(theta)
    z = theta * src.l
    if z > _EXP_LIMIT:
        x = 1.0 / z
    else:
        x = 1.0 / z - 1.0 / math.expm1(z)
    x = min(max(x, 0.0), 1.0)
    return max(_log_mix(x, z) / theta - src.l * x, 0.0)


def periodic_envelope(src):
    rate = src.l / src.w
    return MgfEnvelope(sigma=lambda theta: periodic_sigma(src, theta), rho=lambda theta: rate,
                       theta_max=_EXP_LIMIT / src.l, kind="arrival")


def poisson_lower_u(src, eps_lower):
    """Time ``u`` with ``P[no arrival within u] = eps_lower``."""
    if not 0 < eps_lower < 1:
        raise ValueError("eps_lower must lie in (0, 1)")
    return -src.w * math.log(eps_lower)


def poisson_lower_envelope(src, eps_lower, loss_shift=0.0):
    return LowerEnvelopeStep(poisson_lower_u(src, eps_lower), src.l, loss_shift)


def aggregate_iid(env, m):
    """Envelope of ``m`` independent copies of a flow."""
    if m < 0:
        raise ValueError("m must be non-negative")
    return MgfEnvelope(sigma=lambda theta: m * env.sigma(theta), rho=lambda theta: m * env.rho(theta),
                       theta_max=env.theta_max, kind=env.kind)
