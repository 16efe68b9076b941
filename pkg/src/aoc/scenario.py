"""Experiment descriptions and their JSON form.

Example::

    {
      "id": "fig3",
      "source": {"type": "periodic", "l_kb": 1, "w_ms": [2, 4, 8]},
      "service": {"type": "markov_onoff", "p_on": 0.9, "gamma_kbps_ms": 1, "beta_ms": 8},
      "epsilon": [1e-3, 1e-6],
      "m": 0,
      "loss": {"eta": 0},
      "sim": {"samples": 100000, "seed": 1, "p_error": 0.0}
    }

``w_ms``, ``epsilon`` and ``m`` accept a number or a non-empty list.  A
latency-rate service is ``{"type": "latency_rate", "rate": c, "latency": t0}``.
"""
from __future__ import annotations

import dataclasses
import itertools
import json
from dataclasses import dataclass
from typing import Optional, Union

import jsonschema

from .curves import LatencyRate
from .service import LossModel, MarkovOnOff, markov_from_stats
from .traffic import PeriodicSource, PoissonSource


class ScenarioError(ValueError):
    """Malformed scenario; the message names the offending field."""


_num_or_list = {
    "oneOf": [
        {"type": "number", "exclusiveMinimum": 0},
        {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
    ]
}

SCHEMA = {
    "type": "object",
    "required": ["id", "source", "service", "epsilon"],
    "additionalProperties": False,
    "properties": {
        "id": {"type": "string", "minLength": 1},
        "source": {
            "type": "object",
            "required": ["type", "l_kb", "w_ms"],
            "additionalProperties": False,
            "properties": {
                "type": {"enum": ["periodic", "poisson"]},
                "l_kb": {"type": "number", "exclusiveMinimum": 0},
                "w_ms": _num_or_list,
            },
        },
        "service": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["type", "p_on", "gamma_kbps_ms", "beta_ms"],
                    "additionalProperties": False,
                    "properties": {
                        "type": {"const": "markov_onoff"},
                        "p_on": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                        "gamma_kbps_ms": {"type": "number", "exclusiveMinimum": 0},
                        "beta_ms": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
                {
                    "type": "object",
                    "required": ["type", "rate"],
                    "additionalProperties": False,
                    "properties": {
                        "type": {"const": "latency_rate"},
                        "rate": {"type": "number", "exclusiveMinimum": 0},
                        "latency": {"type": "number", "minimum": 0},
                    },
                },
            ]
        },
        "epsilon": {
            "oneOf": [
                {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                {"type": "array", "minItems": 1,
                 "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
            ]
        },
        "m": {
            "oneOf": [
                {"type": "integer", "minimum": 0},
                {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 0}},
            ]
        },
        "loss": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eta": {"type": "integer", "minimum": 0},
                "eta_eps": {"type": "integer", "minimum": 0},
                "eps": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "samples": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "horizon_ms": {"type": "number", "exclusiveMinimum": 0},
                "p_error": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            },
        },
    },
}


@dataclass(frozen=True)
class SimSpec:
    samples: int = 100_000
    seed: int = 0
    horizon_ms: Optional[float] = None
    p_error: float = 0.0


@dataclass(frozen=True)
class Scenario:
    id: str
    source: Union[PeriodicSource, PoissonSource]
    service: Union[LatencyRate, MarkovOnOff]
    w_grid: tuple
    epsilons: tuple
    m_values: tuple = (0,)
    loss: Optional[LossModel] = None
    sim: Optional[SimSpec] = None

    def at(self, w):
        """Source with update interval ``w``."""
        return dataclasses.replace(self.source, w=float(w))

    def points(self):
        """All ``(w, epsilon, m)`` combinations, in file order."""
        return list(itertools.product(self.w_grid, self.epsilons, self.m_values))

    def to_dict(self):
        src = self.source
        d = {
            "id": self.id,
            "source": {"type": "periodic" if isinstance(src, PeriodicSource) else "poisson",
                       "l_kb": src.l, "w_ms": list(self.w_grid)},
            "epsilon": list(self.epsilons),
            "m": list(self.m_values),
        }
        if isinstance(self.service, MarkovOnOff):
            ch = self.service
            d["service"] = {"type": "markov_onoff", "p_on": ch.p_on, "gamma_kbps_ms": ch.gamma,
                            "beta_ms": ch.beta}
        else:
            d["service"] = {"type": "latency_rate", "rate": self.service.rate,
                            "latency": self.service.latency}
        if self.loss is not None:
            d["loss"] = {k: v for k, v in dataclasses.asdict(self.loss).items() if v is not None}
        if self.sim is not None:
            d["sim"] = {k: v for k, v in dataclasses.asdict(self.sim).items() if v is not None}
        return d


def _as_tuple(x):
    return tuple(x) if isinstance(x, list) else (x,)


def _field(error):
    path = ".".join(str(p) for p in error.absolute_path)
    return path or "<root>"


def scenario_from_dict(d):
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(d), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ScenarioError(f"invalid field '{_field(err)}': {err.message}")

    src = d["source"]
    w_grid = tuple(float(w) for w in _as_tuple(src["w_ms"]))
    cls = PeriodicSource if src["type"] == "periodic" else PoissonSource
    source = cls(l=float(src["l_kb"]), w=w_grid[0])

    sv = d["service"]
    if sv["type"] == "markov_onoff":
        service = markov_from_stats(sv["p_on"], sv["gamma_kbps_ms"], sv["beta_ms"])
    else:
        service = LatencyRate(sv["rate"], sv.get("latency", 0.0))

    loss = None
    if "loss" in d:
        ld = d["loss"]
        if "eta_eps" in ld and "eps" not in ld:
            raise ScenarioError("invalid field 'loss.eps': required together with eta_eps")
        loss = LossModel(eta=ld.get("eta", 0), eta_eps=ld.get("eta_eps"), eps=ld.get("eps"))

    sim = SimSpec(**d["sim"]) if "sim" in d else None
    return Scenario(id=d["id"], source=source, service=service, w_grid=w_grid,
                    epsilons=tuple(float(e) for e in _as_tuple(d["epsilon"])),
                    m_values=tuple(int(m) for m in _as_tuple(d.get("m", 0))),
                    loss=loss, sim=sim)


def load_scenario(path):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"malformed JSON at line {exc.lineno}: {exc.msg}") from exc
    return scenario_from_dict(d)


def dump_scenario(scenario, path):
    with open(path, "w") as fh:
        json.dump(scenario.to_dict(), fh, indent=2)
        fh.write("\n")
