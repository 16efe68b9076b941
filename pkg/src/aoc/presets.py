"""Parameter sets of the standard figures (Markov channel, Poisson/latency-rate,
priority scheduling)."""
from __future__ import annotations

import numpy as np

from .scenario import scenario_from_dict

MARKOV_CHANNEL = {"type": "markov_onoff", "p_on": 0.9, "gamma_kbps_ms": 1.0, "beta_ms": 8.0}


def log_grid(lo, hi, per_octave=4):
    """Log-spaced grid with ``per_octave`` points per doubling, endpoints included."""
    n = int(round(np.log2(hi / lo) * per_octave)) + 1
    return [float(lo * 2.0 ** (k / per_octave)) for k in range(n)]


def preset_dict(name, seed=0):
    if name == "fig3":
        return {"id": "fig3", "source": {"type": "periodic", "l_kb": 1.0, "w_ms": log_grid(1, 64)},
                "service": dict(MARKOV_CHANNEL), "epsilon": [1e-3, 1e-6, 1e-9], "m": 0}
    if name == "fig4":
        return {"id": "fig4", "source": {"type": "periodic", "l_kb": 1.0, "w_ms": [2.0, 4.0, 8.0, 16.0]},
                "service": dict(MARKOV_CHANNEL), "epsilon": [1e-3], "m": 0,
                "sim": {"samples": 1_000_000, "seed": seed}}
    if name == "fig5":
        return {"id": "fig5", "source": {"type": "poisson", "l_kb": 1.0, "w_ms": log_grid(0.5, 64)},
                "service": {"type": "latency_rate", "rate": 1.0, "latency": 0.0},
                "epsilon": [1e-6], "m": 0}
    if name == "fig6":
        return {"id": "fig6", "source": {"type": "periodic", "l_kb": 1.0, "w_ms": log_grid(1, 64)},
                "service": dict(MARKOV_CHANNEL), "epsilon": [1e-6], "m": [0, 10, 20, 30]}
    raise KeyError(name)


PRESETS = ("fig3", "fig4", "fig5", "fig6")


def preset(name, seed=0):
    return scenario_from_dict(preset_dict(name, seed))
