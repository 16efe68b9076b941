"""Statistical age bound over a bursty on-off channel, checked by simulation.

The channel is on 90% of the time, delivers 1 kb/ms on average and has a
mean on-off cycle of 8 ms.  For each update interval the optimiser picks
(theta, r, tau0); the bound is then compared with the empirical quantile of
the simulated peak age.
"""
import numpy as np

from aoc.bounds import optimize_bound
from aoc.presets import MARKOV_CHANNEL
from aoc.scenario import scenario_from_dict
from aoc.sim import exceedance, simulate

eps = 1e-3
sc = scenario_from_dict({"id": "demo", "source": {"type": "periodic", "l_kb": 1.0, "w_ms": [2, 4, 8, 16]},
                         "service": MARKOV_CHANNEL, "epsilon": eps})

print(f"{'w':>4} {'bound':>8} {'sim q':>8} {'V bound':>8} {'sim q':>8}   theta      r      tau0")
for i, w in enumerate(sc.w_grid):
    res = optimize_bound(sc, w=w)
    _, s = simulate(sc.at(w), sc.service, 300_000, seed=10 + i)
    s = s.drop(1)
    p = res.params
    print(f"{w:4g} {res.delta_eps:8.3f} {s.aoi_quantile(1 - eps):8.3f} {res.v_eps:8.3f} "
          f"{s.delay_quantile(1 - eps):8.3f}   {p.theta:.4f} {p.r:.4f} {p.tau0:.3f}")

# tail of the peak age at w = 2: the bound for each eps against the empirical exceedance
w = 2.0
_, s = simulate(sc.at(w), sc.service, 1_000_000, seed=99)
s = s.drop(1)
print(f"\ntail at w={w:g}")
for e in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5):
    b = optimize_bound(sc, w=w, epsilon=e).delta_eps
    print(f"eps={e:.0e}: bound {b:7.3f}, empirical P[peak > bound] = {exceedance(s.aoi, [b])[0]:.1e}")
print("simulated peaks: mean", np.round(s.aoi.mean(), 3), "max", np.round(s.aoi.max(), 3))
