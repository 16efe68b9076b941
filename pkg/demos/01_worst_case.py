"""Worst-case age over a latency-rate server.

Periodic updates of size l every w ms cross a server that offers c kb/ms
after a latency t0.  The min-plus deviation gives the worst-case age
w + t0 (plus one interval per tolerated loss), and a simulation with an
always-on channel attains it.  The last part shows why whole-message
delivery matters: the same backlog yields a larger peak age when a
message only counts once its last bit is through.
"""
import numpy as np

from aoc.curves import LatencyRate, Staircase, aoi_deviation, packetize_transform
from aoc.sim import ChannelPath, fluid_departure_curve, max_aoi, max_virtual_delay, serve_fcfs, simulate
from aoc.traffic import PeriodicSource

l, c, t0 = 1.0, 1.0, 0.5

print("worst-case age, S = c[t - t0]+")
print(f"{'w':>6} {'eta':>4} {'bound':>8} {'(eta+1)w+t0':>12}")
for w in (2.0, 4.0, 8.0):
    up, lo = Staircase(l, w, "ceil"), Staircase(l, w, "floor")
    for eta in (0, 2):
        d = aoi_deviation(LatencyRate(c, t0), up, lo, eta * l)
        print(f"{w:6g} {eta:4d} {d:8.3f} {(eta + 1) * w + t0:12.3f}")

# with the packetizer the latency grows by l/c, which the simulator reproduces
print("\nsimulated peak age on an always-on channel (first sample is warm-up)")
for w in (2.0, 4.0, 8.0):
    pkt = packetize_transform(LatencyRate(c, 0.0), l)
    bound = aoi_deviation(pkt, Staircase(l, w, "ceil"), Staircase(l, w, "floor"))
    _, s = simulate(PeriodicSource(l, w), LatencyRate(c, 0.0), 10_000, seed=1)
    s = s.drop(1)
    print(f"w={w:g}: bound {bound:.3f}, simulated peaks in [{s.aoi.min():.6f}, {s.aoi.max():.6f}]")

# one channel outage, two messages: 2 kb at t=0 and 1 kb at t=2
path = ChannelPath.from_intervals([(0.0, 1.0), (1.0, 0.0), (4.0, 1.0)], 20.0)
arrivals, sizes = np.array([0.0, 2.0]), np.array([2.0, 1.0])
tr = serve_fcfs(arrivals, path, sizes)
A = tr.arrival_curve()
t_end = float(tr.t_departure[-1])
fluid = fluid_departure_curve(arrivals, path, sizes)
print("\noutage example: departures", tr.t_departure)
print(f"max age  whole messages {max_aoi(A, tr.departure_curve(), t_end):g}, "
      f"bit level {max_aoi(A, fluid, t_end):g}")
print(f"max delay whole messages {max_virtual_delay(A, tr.departure_curve()):g}, "
      f"bit level {max_virtual_delay(A, fluid):g}")
