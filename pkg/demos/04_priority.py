"""Age of a low-priority source behind m higher-priority copies.

All m + 1 sources send 1 kb every w ms over the on-off channel; the tagged
source only gets the leftover service.  Small w leaves nothing over, so the
bound is infinite; as w grows the curves approach the single-source bound.
A short simulation checks one point.
"""
from aoc.bounds import optimize_bound
from aoc.presets import preset
from aoc.sim import simulate

sc = preset("fig6")
eps = sc.epsilons[0]
cols = [w for w in sc.w_grid if w in (4.0, 8.0, 16.0, 32.0, 45.254833995939045, 64.0)]
print("bound (ms) by w; 'inf' means no stable parameter choice")
print("      " + "".join(f"{w:>10.3g}" for w in cols))
for m in sc.m_values:
    vals = [optimize_bound(sc, w=w, m=m).delta_eps for w in cols]
    print(f"m={m:<3d} " + "".join(f"{v:10.2f}" for v in vals))

w, m, e = 64.0, 10, 1e-2
res = optimize_bound(sc, w=w, epsilon=e, m=m)
_, s = simulate(sc.at(w), sc.service, 100_000, seed=5, m=m)
s = s.drop(1)
print(f"\nw={w:g}, m={m}, eps={e:g}: bound {res.delta_eps:.2f} ms, "
      f"simulated quantile {s.aoi_quantile(1 - e):.2f} ms over {s.count} samples")
