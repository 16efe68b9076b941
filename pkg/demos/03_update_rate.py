"""Choosing the update rate for random (Poisson) updates.

Updating too often congests the server, updating too rarely leaves the
receiver waiting.  The bound is the larger of a congestion term b/c and an
idle term u, and its minimum over w marks the best update interval.
"""
import numpy as np

from aoc.bounds import optimize_bound
from aoc.presets import log_grid
from aoc.scenario import scenario_from_dict

grid = log_grid(0.5, 64, per_octave=4)
sc = scenario_from_dict({"id": "demo", "source": {"type": "poisson", "l_kb": 1.0, "w_ms": grid},
                         "service": {"type": "latency_rate", "rate": 1.0, "latency": 0.0},
                         "epsilon": [1e-3, 1e-6, 1e-9]})

for eps in sc.epsilons:
    rows = [(w, optimize_bound(sc, w=w, epsilon=eps)) for w in grid]
    vals = np.array([r.delta_eps for _, r in rows])
    k = int(np.argmin(vals))
    print(f"eps={eps:.0e}: best w = {grid[k]:.3f} ms with bound {vals[k]:.2f} ms")
    for w, r in rows[k - 2:k + 3]:
        congestion, idle, t0 = r.breakdown
        print(f"   w={w:7.3f}  congestion {congestion:8.2f}  idle {idle:8.2f}  + {t0:g}  -> {r.delta_eps:8.2f}")
    print(f"   w=64: {vals[-1]:.1f} ms (idle waiting dominates, about -w ln eps)")
    print(f"   w<=1: {'infeasible' if not rows[0][1].feasible else vals[0]} (load l/w >= c)")
