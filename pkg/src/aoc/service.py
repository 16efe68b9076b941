"""Service models: Markov on-off channel, leftover service under priority
scheduling, and the message-loss extension of the worst-case bound."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .curves import LatencyRate
from .traffic import MgfEnvelope


@dataclass(frozen=True)
class MarkovOnOff:
    """Two-state channel: rate ``c`` when on, 0 when off.

    ``lam`` is the off->on rate and ``mu`` the on->off rate (both 1/ms).
    """

    lam: float
    mu: float
    c: float

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0 and self.c > 0):
            raise ValueError("lam, mu and c must be positive")

    @property
    def p_on(self):
        return self.lam / (self.lam + self.mu)

    @property
    def gamma(self):
        """Mean rate in kb/ms."""
        return self.c * self.p_on

    @property
    def beta(self):
        """Mean duration of one on/off cycle in ms."""
        return 1.0 / self.lam + 1.0 / self.mu


def markov_from_stats(p_on, gamma, beta):
    """Channel with the given on-probability, mean rate and burstiness."""
    if not 0 < p_on < 1:
        raise ValueError("p_on must lie in (0, 1)")
    if not (gamma > 0 and beta > 0):
        raise ValueError("gamma and beta must be positive")
    total = 1.0 / (p_on * (1.0 - p_on) * beta)
    return MarkovOnOff(lam=p_on * total, mu=(1.0 - p_on) * total, c=gamma / p_on)


def markov_rho(ch, theta):
    """Effective capacity of the on-off channel.

    Uses ``2 lam c / (a + d)`` with ``a = lam + mu + theta c`` and
    ``d = sqrt((lam - mu - theta c)^2 + 4 lam mu)``, which equals
    ``(a - d) / (2 theta)`` but does not cancel for large ``theta``.
    """
    th = np.asarray(theta, dtype=float)
    if np.any(th <= 0):
        raise ValueError("theta must be positive")
    a = ch.lam + ch.mu + th * ch.c
    d = np.sqrt((ch.lam - ch.mu - th * ch.c) ** 2 + 4.0 * ch.lam * ch.mu)
    rho = 2.0 * ch.lam * ch.c / (a + d)
    return float(rho) if np.ndim(theta) == 0 else rho


def markov_envelope(ch):
    return MgfEnvelope(sigma=lambda theta: 0.0, rho=lambda theta: markov_rho(ch, theta),
                       kind="service")


def leftover_service(sv, cross, m):
    """Service left to the next priority after ``m`` iid higher-priority flows.

    ``rho`` may turn non-positive for some ``theta``; :meth:`MgfEnvelope.feasible`
    reports that per ``theta``.
    """
    if m < 0:
        raise ValueError("m must be non-negative")
    if m == 0:
        return sv
    return MgfEnvelope(sigma=lambda theta: sv.sigma(theta) + m * cross.sigma(theta),
                       rho=lambda theta: sv.rho(theta) - m * cross.rho(theta),
                       theta_max=min(sv.theta_max, cross.theta_max), kind="service")


@dataclass(frozen=True)
class LossModel:
    """At most ``eta`` consecutive erroneous messages (worst case), or a run
    length ``eta_eps`` exceeded with probability at most ``eps``."""

    eta: int = 0
    eta_eps: Optional[int] = None
    eps: Optional[float] = None

    def __post_init__(self):
        if self.eta < 0 or (self.eta_eps is not None and self.eta_eps < 0):
            raise ValueError("run-length caps must be non-negative")

    @property
    def run_cap(self):
        return self.eta if self.eta_eps is None else self.eta_eps


def loss_worstcase_aoi(w, l, c, eta):
    """``(eta + 1) w + l / c`` for periodic updates over a rate-``c`` server."""
    if c < l / w:
        raise ValueError("unstable: c < l / w")
    if eta < 0:
        raise ValueError("eta must be non-negative")
    return (eta + 1) * w + l / c


def iid_run_cap(p_error, eps):
    """Smallest ``eta`` with ``P[more than eta consecutive errors] <= eps`` for
    iid message errors of probability ``p_error``."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if p_error <= 0:
        return 0
    if p_error >= 1:
        raise ValueError("p_error must be < 1")
    return max(int(math.ceil(math.log(eps) / math.log(p_error) - 1e-12)) - 1, 0)


def latency_rate_server(rate, latency=0.0):
    return LatencyRate(rate, latency)
