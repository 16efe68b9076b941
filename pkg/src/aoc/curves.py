"""Piecewise-linear cumulative curves and the min-plus operators built on them.

All curves are non-decreasing, left-continuous and vanish for ``t <= 0``.
Times are in ms and amounts in kb.  Three concrete carriers exist:

* :class:`PwlCurve` -- explicit breakpoints, jumps allowed, an optional
  unbounded final slope (used for pure-delay elements).
* :class:`Staircase` -- ``shift + step * k(t)`` with ``k`` a ceil or floor count
  of periods; evaluated lazily so horizons can be arbitrarily long.
* :class:`LatencyRate` -- ``rate * max(0, t - latency)``.

The deviation operators (:func:`aoi_deviation`, :func:`horizontal_deviation`)
are evaluated exactly: the sup of a piecewise-affine function is attained at
one of finitely many candidate points (breakpoints of one curve and the
places where it crosses the breakpoint levels of the other), so no grid is
involved.
"""
from __future__ import annotations

import math

import numpy as np

INF = math.inf

# relative snapping applied to t / width before rounding to whole periods
_SNAP = 1e-12


def _snap(q):
    q = np.asarray(q, dtype=float)
    r = np.round(q)
    close = np.abs(q - r) <= _SNAP * np.maximum(1.0, np.abs(q))
    return np.where(close, r, q)


def _out(x, like):
    return float(x) if np.ndim(like) == 0 else x


class Curve:
    """Interface shared by all cumulative curves."""

    #: asymptotic slope, used for stability checks
    long_run_rate = 0.0
    #: after this time the curve is affine or purely periodic
    last_breakpoint = 0.0
    #: period of the repeating part (0 when there is none)
    period = 0.0

    def __call__(self, t):
        raise NotImplementedError

    def right(self, t):
        """Right limit ``f(t+)``."""
        raise NotImplementedError

    def slope_after(self, t):
        """Slope of the affine piece that starts at ``t``."""
        raise NotImplementedError

    def breakpoints(self, horizon):
        """Sorted times in ``[0, horizon]`` where slope or value jumps (incl. 0)."""
        raise NotImplementedError

    def pinv_upper(self, y):
        """``sup{t >= 0 : f(t) <= y}``; ``-inf`` for ``y < 0``."""
        raise NotImplementedError

    def pinv_lower(self, y):
        """``inf{t >= 0 : f(t) >= y}``; ``0`` for ``y <= 0``."""
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError

    def levels(self, y_max):
        """Values (left and right limits) taken at breakpoints, up to ``y_max``."""
        t_end = self.pinv_upper(y_max)
        if not np.isfinite(t_end):
            t_end = self.last_breakpoint
        bp = self.breakpoints(max(t_end, 0.0))
        vals = np.concatenate([np.atleast_1d(self(bp)), np.atleast_1d(self.right(bp))])
        vals = vals[np.isfinite(vals) & (vals <= y_max)]
        return np.unique(vals)


class PwlCurve(Curve):
    """Piecewise-linear curve given by its breakpoints.

    ``t[i]`` are strictly increasing breakpoint times (``t[0] >= 0``),
    ``values[i]`` the right limit ``f(t[i]+)`` and ``slopes[i]`` the slope on
    ``(t[i], t[i+1]]``.  The last slope applies up to infinity and may be
    ``inf``.  ``f(t) = 0`` for ``t <= t[0]``; at a breakpoint the curve takes
    its left limit.
    """

    def __init__(self, t, values, slopes):
        t = np.asarray(t, dtype=float).ravel()
        v = np.asarray(values, dtype=float).ravel()
        s = np.asarray(slopes, dtype=float).ravel()
        if not (t.size == v.size == s.size) or t.size == 0:
            raise ValueError("t, values and slopes must be non-empty and equally long")
        if t[0] < 0 or np.any(np.diff(t) <= 0):
            raise ValueError("breakpoint times must be >= 0 and strictly increasing")
        if np.any(s < 0) or np.any(np.isinf(s[:-1])) or np.any(np.isnan(s)):
            raise ValueError("slopes must be >= 0; only the final slope may be infinite")
        if np.any(~np.isfinite(v)) or v[0] < 0:
            raise ValueError("values must be finite and non-negative")
        left = np.concatenate([[0.0], v[:-1] + s[:-1] * np.diff(t)])
        if np.any(v < left - 1e-12 * np.maximum(1.0, np.abs(left))):
            raise ValueError("curve must be non-decreasing")
        self.t, self.values, self.slopes = t, v, s
        self.last_breakpoint = float(t[-1])
        self.long_run_rate = float(s[-1])

    @classmethod
    def from_points(cls, t, y, final_slope=0.0):
        """Continuous curve through ``(t, y)`` points, extended with ``final_slope``."""
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        slopes = np.append(np.diff(y) / np.diff(t), final_slope)
        return cls(t, y, slopes)

    def __call__(self, x):
        xa = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.t, xa, side="left") - 1
        i = np.clip(idx, 0, None)
        d = xa - self.t[i]
        with np.errstate(invalid="ignore"):
            val = self.values[i] + np.where(d > 0, self.slopes[i] * d, 0.0)
        val = np.where(idx < 0, 0.0, val)
        return _out(val, x)

    def right(self, x):
        xa = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.t, xa, side="right") - 1
        i = np.clip(idx, 0, None)
        d = xa - self.t[i]
        with np.errstate(invalid="ignore"):
            val = np.where(
                d > 0, self.values[i] + self.slopes[i] * d,
                np.where(np.isinf(self.slopes[i]), INF, self.values[i]))
        val = np.where(idx < 0, 0.0, val)
        return _out(val, x)

    def slope_after(self, x):
        xa = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.t, xa, side="right") - 1
        val = np.where(idx < 0, 0.0, self.slopes[np.clip(idx, 0, None)])
        return _out(val, x)

    def breakpoints(self, horizon):
        return np.unique(np.concatenate([[0.0], self.t[self.t <= horizon]]))

    def _pinv_upper(self, y):
        if y < 0:
            return -INF
        n = self.t.size
        for i in range(n):
            v, s = self.values[i], self.slopes[i]
            if v > y:
                return float(self.t[i])
            if s == 0:
                continue
            x = self.t[i] + (y - v) / s
            if i == n - 1 or x < self.t[i + 1]:
                return float(x)
        return INF

    def _pinv_lower(self, y):
        if y <= 0:
            return 0.0
        n = self.t.size
        for i in range(n):
            v, s = self.values[i], self.slopes[i]
            if v >= y:
                return float(self.t[i])
            if s > 0:
                x = self.t[i] + (y - v) / s
                if i == n - 1 or x <= self.t[i + 1]:
                    return float(x)
        return INF

    @np.errstate(over="ignore")
    def pinv_upper(self, y):
        if np.ndim(y) == 0:
            return self._pinv_upper(float(y))
        return np.array([self._pinv_upper(float(v)) for v in np.ravel(y)]).reshape(np.shape(y))

    @np.errstate(over="ignore")
    def pinv_lower(self, y):
        if np.ndim(y) == 0:
            return self._pinv_lower(float(y))
        return np.array([self._pinv_lower(float(v)) for v in np.ravel(y)]).reshape(np.shape(y))

    def to_dict(self):
        return {
            "kind": "pwl",
            "t": self.t.tolist(),
            "values": self.values.tolist(),
            "slopes": [("inf" if math.isinf(s) else s) for s in self.slopes.tolist()],
        }

    def __repr__(self):
        return f"PwlCurve(t={self.t.tolist()}, values={self.values.tolist()}, slopes={self.slopes.tolist()})"


class Staircase(Curve):
    """``shift + step * k(t)`` for ``t > 0`` with ``k = ceil(t/width)`` or the
    left-continuous floor count ``ceil(t/width) - 1``."""

    def __init__(self, step, width, rounding="ceil", shift=0.0):
        if step <= 0 or width <= 0:
            raise ValueError("step and width must be positive")
        if rounding not in ("ceil", "floor"):
            raise ValueError("rounding must be 'ceil' or 'floor'")
        if shift < 0:
            raise ValueError("shift must be non-negative")
        self.step, self.width = float(step), float(width)
        self.rounding, self.shift = rounding, float(shift)
        self._off = 0 if rounding == "ceil" else 1
        self.long_run_rate = self.step / self.width
        self.period = self.width
        self.last_breakpoint = 0.0

    def __call__(self, x):
        xa = np.asarray(x, dtype=float)
        k = np.ceil(_snap(xa / self.width)) - self._off
        val = np.where(xa > 0, self.shift + self.step * k, 0.0)
        return _out(val, x)

    def right(self, x):
        xa = np.asarray(x, dtype=float)
        k = np.floor(_snap(xa / self.width)) + 1 - self._off
        val = np.where(xa >= 0, self.shift + self.step * k, 0.0)
        return _out(val, x)

    def slope_after(self, x):
        return _out(np.zeros_like(np.asarray(x, dtype=float)), x)

    def breakpoints(self, horizon):
        n = int(np.floor(_snap(max(horizon, 0.0) / self.width)))
        return self.width * np.arange(n + 1, dtype=float)

    def pinv_upper(self, y):
        ya = np.asarray(y, dtype=float)
        k = np.floor(_snap((ya - self.shift) / self.step))
        # f(t) <= y  <=>  count(t) <= k  <=>  t <= (k + off) * width
        val = (k + self._off) * self.width
        first = self.shift + self.step * (1 - self._off)  # f(0+)
        val = np.where(ya < first, 0.0, val)
        val = np.where(ya < 0, -INF, val)
        return _out(val, y)

    def pinv_lower(self, y):
        ya = np.asarray(y, dtype=float)
        k = np.ceil(_snap((ya - self.shift) / self.step))
        val = (k - 1 + self._off) * self.width
        first = self.shift + self.step * (1 - self._off)
        val = np.where(ya <= first, 0.0, val)
        return _out(val, y)

    def to_dict(self):
        return {"kind": "staircase", "step": self.step, "width": self.width,
                "rounding": self.rounding, "shift": self.shift}

    def __repr__(self):
        return f"Staircase(step={self.step}, width={self.width}, rounding={self.rounding!r}, shift={self.shift})"


class LatencyRate(Curve):
    """``rate * max(0, t - latency)``."""

    def __init__(self, rate, latency=0.0):
        if not rate > 0 or not np.isfinite(rate):
            raise ValueError("rate must be positive and finite")
        if latency < 0:
            raise ValueError("latency must be non-negative")
        self.rate, self.latency = float(rate), float(latency)
        self.long_run_rate = self.rate
        self.last_breakpoint = self.latency

    def __call__(self, x):
        xa = np.asarray(x, dtype=float)
        return _out(self.rate * np.maximum(0.0, xa - self.latency), x)

    right = __call__

    def slope_after(self, x):
        xa = np.asarray(x, dtype=float)
        return _out(np.where(xa >= self.latency, self.rate, 0.0), x)

    def breakpoints(self, horizon):
        pts = [0.0] + ([self.latency] if self.latency <= horizon else [])
        return np.unique(np.array(pts))

    def pinv_upper(self, y):
        ya = np.asarray(y, dtype=float)
        val = np.where(ya < 0, -INF, self.latency + np.maximum(ya, 0.0) / self.rate)
        return _out(val, y)

    def pinv_lower(self, y):
        ya = np.asarray(y, dtype=float)
        val = np.where(ya <= 0, 0.0, self.latency + ya / self.rate)
        return _out(val, y)

    def to_pwl(self):
        if self.latency == 0:
            return PwlCurve([0.0], [0.0], [self.rate])
        return PwlCurve([0.0, self.latency], [0.0, 0.0], [0.0, self.rate])

    def to_dict(self):
        return {"kind": "latency_rate", "rate": self.rate, "latency": self.latency}

    def __repr__(self):
        return f"LatencyRate(rate={self.rate}, latency={self.latency})"


def zero_curve():
    return PwlCurve([0.0], [0.0], [0.0])


def pure_delay(latency):
    """Burst-delay element: 0 up to ``latency``, infinite afterwards."""
    return PwlCurve([latency], [0.0], [INF])


def curve_from_dict(d):
    kind = d.get("kind")
    if kind == "pwl":
        slopes = [INF if s in ("inf", "Infinity") else s for s in d["slopes"]]
        return PwlCurve(d["t"], d["values"], slopes)
    if kind == "staircase":
        return Staircase(d["step"], d["width"], d.get("rounding", "ceil"), d.get("shift", 0.0))
    if kind == "latency_rate":
        return LatencyRate(d["rate"], d.get("latency", 0.0))
    raise ValueError(f"unknown curve kind: {kind!r}")


def evaluate(curve, t):
    """Left-continuous value of ``curve`` at ``t`` (0 for ``t <= 0``)."""
    return curve(t)


def pseudo_inverse(curve, y, side="upper"):
    if side == "upper":
        return curve.pinv_upper(y)
    if side == "lower":
        return curve.pinv_lower(y)
    raise ValueError("side must be 'upper' or 'lower'")


# ---------------------------------------------------------------------------
# min-plus convolution


def _lower_envelope(alphas, betas, length):
    """Lower envelope of lines ``a + b x`` on ``[0, length]``.

    Returns a list of ``(x, value_at_x, slope)`` pieces starting at ``x = 0``.
    """
    order = np.lexsort((betas, alphas))
    cur = order[0]
    x = 0.0
    pieces = [(0.0, alphas[cur], betas[cur])]
    while True:
        a0, b0 = alphas[cur], betas[cur]
        best_x, best = INF, None
        for k in range(len(alphas)):
            if betas[k] >= b0:
                continue
            xc = float(alphas[k] - a0) / float(b0 - betas[k])
            if xc < x:
                xc = x
            if xc < best_x or (xc == best_x and best is not None and betas[k] < betas[best]):
                best_x, best = xc, k
        if best is None or best_x >= length:
            return pieces
        cur, x = best, best_x
        val = alphas[cur] + betas[cur] * x
        if pieces[-1][0] == x:
            pieces[-1] = (x, val, betas[cur])
        else:
            pieces.append((x, val, betas[cur]))


def _snap_to(x, pts):
    """Move entries of ``x`` that differ from a point of ``pts`` only by
    rounding onto that point (``pts`` sorted)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if pts.size == 0:
        return x
    i = np.clip(np.searchsorted(pts, x), 1, pts.size - 1) if pts.size > 1 else np.zeros(x.size, int)
    cand = np.stack([pts[i - 1], pts[i]]) if pts.size > 1 else pts[i][None, :]
    near = cand[np.argmin(np.abs(cand - x), axis=0), np.arange(x.size)]
    close = np.abs(near - x) <= 1e-12 * np.maximum(1.0, np.abs(near))
    return np.where(close, near, x)


def min_plus_conv(f, g, horizon):
    """Exact ``(f ⊗ g)(t) = inf_{0<=s<=t} f(s) + g(t-s)`` on ``[0, horizon]``.

    Beyond the horizon the result continues with its last slope.  Split
    points within a relative 1e-12 of a breakpoint are treated as that
    breakpoint, so breakpoints of the inputs must be further apart than that.
    """
    if not horizon > 0 or not np.isfinite(horizon):
        raise ValueError("horizon must be positive and finite")
    fa = f.breakpoints(horizon)
    gb = g.breakpoints(horizon)
    grid = np.unique((fa[:, None] + gb[None, :]).ravel())
    grid = grid[grid < horizon]
    ends = np.append(grid[1:], horizon)

    ts, vs, ss = [], [], []
    for p, q in zip(grid, ends):
        a = fa[fa <= p]
        b = gb[gb <= p]
        ga = np.maximum(_snap_to(p - a, gb), 0.0)
        fb = np.maximum(_snap_to(p - b, fa), 0.0)
        al = np.concatenate([np.atleast_1d(f(a)) + np.atleast_1d(g.right(ga)),
                             np.atleast_1d(f.right(fb)) + np.atleast_1d(g(b))])
        be = np.concatenate([np.atleast_1d(g.slope_after(ga)),
                             np.atleast_1d(f.slope_after(fb))])
        ok = np.isfinite(al) & np.isfinite(be)
        if not ok.any():
            # infinite from here on
            ts.append(p)
            vs.append(float(min_plus_value(f, g, p)))
            ss.append(INF)
            break
        for x, val, slope in _lower_envelope(al[ok], be[ok], q - p):
            tt = p + x
            if ts and tt <= ts[-1] + 1e-12 * max(1.0, abs(tt)):
                # coincides with the previous piece up to rounding: supersede it
                vs[-1], ss[-1] = max(val, vs[-1]), slope
                continue
            ts.append(tt)
            vs.append(val)
            ss.append(slope)
    return _simplify(ts, vs, ss)


def min_plus_value(f, g, t):
    """Pointwise ``(f ⊗ g)(t)`` from the candidate split points."""
    if t <= 0:
        return 0.0
    fa = f.breakpoints(t)
    gb = g.breakpoints(t)
    c1 = np.atleast_1d(f(fa)) + np.atleast_1d(g(t - fa))
    c2 = np.atleast_1d(f(t - gb)) + np.atleast_1d(g(gb))
    return float(min(c1.min(), c2.min()))


def _simplify(ts, vs, ss):
    t = [ts[0]]
    v = [vs[0]]
    s = [ss[0]]
    for ti, vi, si in zip(ts[1:], vs[1:], ss[1:]):
        left = v[-1] + s[-1] * (ti - t[-1]) if np.isfinite(s[-1]) else INF
        if si == s[-1] and np.isclose(vi, left, rtol=1e-12, atol=1e-12):
            continue
        t.append(ti)
        v.append(vi)
        s.append(si)
    return PwlCurve(t, v, s)


# ---------------------------------------------------------------------------
# deviations


def default_horizon(service, upper_env, threshold=0.0):
    """Horizon after which the deviation search can stop.

    Past the last non-periodic breakpoint of both curves and the time where
    the upper envelope reaches the service curve's final level, the objective
    repeats with non-positive drift; ten periods beyond that suffice.
    """
    level = service.right(service.last_breakpoint)
    start = max(service.last_breakpoint, upper_env.last_breakpoint)
    if np.isfinite(level):
        reach = upper_env.pinv_lower(level - threshold)
        if np.isfinite(reach):
            start = max(start, reach)
    period = max(service.period, upper_env.period)
    return start + (10.0 * period if period > 0 else 1.0)


def _sup_shift(g, f, thr, horizon, side):
    """``sup_{0<=t<=horizon} f^side(g(t) + thr) - t`` evaluated exactly."""
    y_top = g.right(horizon) + thr
    cand = [g.breakpoints(horizon), np.array([horizon])]
    lv = f.levels(y_top) - thr
    if lv.size:
        cand.append(np.atleast_1d(g.pinv_lower(lv)))
        cand.append(np.atleast_1d(g.pinv_upper(lv)))
    t = np.concatenate(cand)
    t = np.unique(t[np.isfinite(t) & (t >= 0) & (t <= horizon)])

    y = np.atleast_1d(g(t)) + thr
    y_plus = np.atleast_1d(g.right(t)) + thr
    if side == "upper":
        at = np.atleast_1d(f.pinv_upper(y))
        after = np.atleast_1d(f.pinv_upper(y_plus))
    else:
        at = np.atleast_1d(f.pinv_lower(y))
        rising = np.atleast_1d(g.slope_after(t)) > 0
        # approaching y+ from above turns the lower inverse into the upper one
        after = np.where(rising, np.atleast_1d(f.pinv_upper(y_plus)),
                         np.atleast_1d(f.pinv_lower(y_plus)))
    return float(max(np.max(at - t), np.max(after - t)))


def _check_horizon(horizon):
    if horizon is not None and not horizon > 0:
        raise ValueError("horizon must be positive")


def aoi_deviation(service, upper_env, lower_env, loss_threshold=0.0, horizon=None):
    """Worst-case age-of-information bound of a service curve.

    Returns ``sup{d >= 0 : min(I1(d), I2(d)) <= loss_threshold}`` with

    ``I1(d) = inf_{s >= d} service(s) - upper_env(s - d)`` and
    ``I2(d) = inf_{0 <= s < d} service(s) + lower_env(d - s)``,

    or ``inf`` when the bound does not exist.
    """
    x1, x2 = aoi_deviation_parts(service, upper_env, lower_env, loss_threshold, horizon)
    out = max(x1, x2, 0.0)
    return out if np.isfinite(out) else INF


def aoi_deviation_parts(service, upper_env, lower_env, loss_threshold=0.0, horizon=None):
    """The two terms ``(x1, x2)`` of :func:`aoi_deviation`: the delay set by the
    upper envelope and the idle time set by the lower envelope (each >= 0)."""
    _check_horizon(horizon)
    if loss_threshold < 0:
        raise ValueError("loss_threshold must be non-negative")
    if upper_env.long_run_rate > service.long_run_rate:
        return INF, INF
    thr = float(loss_threshold)
    h = horizon if horizon is not None else default_horizon(service, upper_env, thr)

    # upper-envelope part: sup_s service^upper(upper_env(s) + thr) - s
    x1 = _sup_shift(upper_env, service, thr, h, "upper")

    # lower-envelope part: sup over s with service(s) <= thr of s + lower_env^upper(thr - service(s))
    s_max = service.pinv_upper(thr)
    if not np.isfinite(s_max):
        return INF, INF
    cand = [service.breakpoints(s_max), np.array([s_max])]
    lv = thr - lower_env.levels(thr)
    lv = lv[lv >= 0]
    if lv.size:
        cand.append(np.atleast_1d(service.pinv_lower(lv)))
        cand.append(np.atleast_1d(service.pinv_upper(lv)))
    s = np.concatenate(cand)
    s = np.unique(s[np.isfinite(s) & (s >= 0) & (s <= s_max)])
    rem = thr - np.atleast_1d(service(s))
    x2 = np.max(s + np.atleast_1d(lower_env.pinv_upper(rem)))
    rem_plus = thr - np.atleast_1d(service.right(s))
    rising = np.atleast_1d(service.slope_after(s)) > 0
    # service rising after s: the remaining budget approaches rem_plus from below
    after = np.where(rising, np.atleast_1d(lower_env.pinv_lower(np.maximum(rem_plus, 0.0))),
                     np.atleast_1d(lower_env.pinv_upper(rem_plus)))
    valid = np.where(rising, rem_plus > 0, rem_plus >= 0)
    if valid.any():
        x2 = max(x2, np.max((s + after)[valid]))

    x1 = max(x1, 0.0) if np.isfinite(x1) else INF
    x2 = max(float(x2), 0.0) if np.isfinite(x2) else INF
    return x1, x2


def horizontal_deviation(upper_env, service, horizon=None):
    """Worst-case virtual delay: ``sup_t inf{v >= 0 : upper_env(t) <= service(t + v)}``."""
    _check_horizon(horizon)
    if upper_env.long_run_rate > service.long_run_rate:
        return INF
    h = horizon if horizon is not None else default_horizon(service, upper_env)
    out = max(_sup_shift(upper_env, service, 0.0, h, "lower"), 0.0)
    return out if np.isfinite(out) else INF


def packetize_transform(service, l_max):
    """Service curve of a fluid server followed by a packetizer: ``[S - l_max]+``."""
    if l_max < 0:
        raise ValueError("l_max must be non-negative")
    if l_max == 0:
        return service
    if isinstance(service, LatencyRate):
        return LatencyRate(service.rate, service.latency + l_max / service.rate)
    if isinstance(service, PwlCurve):
        x0 = service.pinv_upper(l_max)
        if not np.isfinite(x0):
            return zero_curve()
        later = service.t[service.t > x0]
        ts = np.concatenate([[x0], later])
        slopes = np.atleast_1d(service.slope_after(ts))
        vals = np.atleast_1d(service.right(ts)) - l_max
        vals = np.where(np.isinf(slopes) & ~np.isfinite(vals), 0.0, vals)
        if np.isinf(slopes[0]):
            vals[0] = 0.0
        return PwlCurve(ts, np.maximum(vals, 0.0), slopes)
    raise TypeError(f"cannot packetize a {type(service).__name__}")
