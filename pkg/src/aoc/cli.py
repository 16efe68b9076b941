"""Command line front end: ``aoc bound|simulate|compare|preset|sweep``.

Exit codes: 0 success, 1 a simulated quantile exceeded its bound, 2 input error.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import logging
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .bounds import optimize_bound
from .presets import PRESETS, log_grid, preset_dict
from .scenario import ScenarioError, SimSpec, dump_scenario, load_scenario, scenario_from_dict
from .sim import exceedance, simulate

log = logging.getLogger("aoc")

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT = 0, 1, 2

BOUND_COLUMNS = ("scenario", "w_ms", "epsilon", "m", "delta_eps_ms", "v_eps_ms",
                 "theta", "r", "tau0", "b", "feasible")
COMPARE_COLUMNS = ("scenario", "w_ms", "epsilon", "m", "delta_eps_ms", "v_eps_ms",
                   "sim_aoi_quantile_ms", "sim_delay_quantile_ms", "samples", "dominance", "runtime_s")


class InputError(Exception):
    pass


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        return repr(float(x))
    return str(x)


def _parse(x):
    if x in ("true", "false"):
        return x == "true"
    for conv in (int, float):
        try:
            return conv(x)
        except ValueError:
            pass
    return x


def write_csv(path, columns, rows, meta=None):
    """RFC-4180 CSV with optional ``# key: value`` header comments."""
    with open(path, "w", newline="") as fh:
        for k, v in (meta or {}).items():
            if v is not None:
                fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def read_csv(path):
    """Rows of a CSV written by :func:`write_csv` as dicts with parsed values."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    return reader.fieldnames, [{k: _parse(v) for k, v in r.items()} for r in reader]


def _meta(args, scenario_id, seed=None):
    meta = {"scenario": scenario_id, "seed": seed}
    if not args.deterministic:
        meta["created"] = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    return meta


def _threads():
    env = os.environ.get("AOC_THREADS")
    try:
        return max(int(env), 1) if env else 1
    except ValueError:
        raise InputError(f"AOC_THREADS must be an integer, got {env!r}")


def _bound_row(scenario, point):
    w, eps, m = point
    res = optimize_bound(scenario, w=w, epsilon=eps, m=m, workers=1)
    p = res.params
    return {"scenario": scenario.id, "w_ms": float(w), "epsilon": float(eps), "m": int(m),
            "delta_eps_ms": float(res.delta_eps), "v_eps_ms": float(res.v_eps),
            "theta": float(p.theta), "r": float(p.r), "tau0": float(p.tau0), "b": float(p.b),
            "feasible": bool(res.feasible)}


def compute_bounds(scenario, points=None):
    """One row per ``(w, epsilon, m)``; points run concurrently (``AOC_THREADS``),
    rows come back in scenario order."""
    points = scenario.points() if points is None else points
    n = _threads()
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            return list(pool.map(lambda p: _bound_row(scenario, p), points))
    return [_bound_row(scenario, p) for p in points]


def _curves(rows, key="delta_eps_ms"):
    """Group rows into x/y curves labelled by epsilon and m."""
    out = {}
    for r in rows:
        label = f"{key.split('_')[0]}_eps{r['epsilon']:g}_m{r['m']}"
        out.setdefault(label, []).append((r["w_ms"], r[key]))
    return out


def write_plot_data(out_dir, curves):
    for label, pts in curves.items():
        write_csv(os.path.join(out_dir, f"plot_{label}.csv"), ("x", "y"),
                  [{"x": float(x), "y": float(y)} for x, y in pts])


# ---------------------------------------------------------------------------
# commands


def cmd_bound(scenario, args):
    rows = compute_bounds(scenario)
    write_csv(os.path.join(args.out, "bounds.csv"), BOUND_COLUMNS, rows, _meta(args, scenario.id))
    bad = sum(not r["feasible"] for r in rows)
    log.info("%d bound rows written, %d infeasible", len(rows), bad)
    return EXIT_OK, rows


def _sim_spec(scenario, args):
    sim = scenario.sim or SimSpec()
    seed = args.seed if args.seed is not None else sim.seed
    return sim, seed


def _run_sims(scenario, args):
    sim, seed = _sim_spec(scenario, args)
    eta = scenario.loss.run_cap if scenario.loss is not None else None
    results = {}
    for i, (w, m) in enumerate(dict.fromkeys((w, m) for w, _, m in scenario.points())):
        t0 = time.perf_counter()
        trace, samples = simulate(scenario.at(w), scenario.service, sim.samples, seed=seed + i, m=m,
                                  p_error=sim.p_error, max_run=eta, horizon=sim.horizon_ms)
        samples = samples.drop(1)
        if samples.count == 0:
            raise InputError(f"simulation at w={w} produced no samples")
        results[(w, m)] = (trace, samples, time.perf_counter() - t0, seed + i)
        log.info("simulated w=%g m=%d: %d samples in %.2fs", w, m, samples.count, results[(w, m)][2])
    return results


def _quantiles(samples, eps, w, m):
    """Peak-AoI and delay ``1 - eps`` quantiles; reliability warnings go to the log."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        q = samples.aoi_quantile(1.0 - eps), samples.delay_quantile(1.0 - eps)
    for msg in dict.fromkeys(str(c.message) for c in caught):
        log.warning("w=%g m=%d: %s", w, m, msg)
    return q


def cmd_simulate(scenario, args):
    results = _run_sims(scenario, args)
    rows = []
    for (w, m), (trace, samples, _, seed) in results.items():
        tag = f"w{w:g}_m{m}"
        samples.to_csv(os.path.join(args.out, f"samples_{tag}.csv"), seed=seed, scenario_id=scenario.id,
                       timestamp=_meta(args, scenario.id).get("created"))
        if args.trace:
            trace.to_csv(os.path.join(args.out, f"trace_{tag}.csv"), seed=seed, scenario_id=scenario.id,
                         timestamp=_meta(args, scenario.id).get("created"))
        for eps in scenario.epsilons:
            q_aoi, q_delay = _quantiles(samples, eps, w, m)
            rows.append({"scenario": scenario.id, "w_ms": float(w), "epsilon": float(eps), "m": int(m),
                         "aoi_quantile_ms": q_aoi, "delay_quantile_ms": q_delay,
                         "samples": samples.count})
    cols = ("scenario", "w_ms", "epsilon", "m", "aoi_quantile_ms", "delay_quantile_ms", "samples")
    write_csv(os.path.join(args.out, "sim_summary.csv"), cols, rows,
              _meta(args, scenario.id, _sim_spec(scenario, args)[1]))
    return EXIT_OK, rows


def cmd_compare(scenario, args):
    bounds = {(r["w_ms"], r["epsilon"], r["m"]): r for r in compute_bounds(scenario)}
    results = _run_sims(scenario, args)
    rows = []
    for w, eps, m in scenario.points():
        b = bounds[(float(w), float(eps), int(m))]
        _, samples, runtime, _ = results[(w, m)]
        q_aoi, q_delay = _quantiles(samples, eps, w, m)
        ok = bool(b["delta_eps_ms"] >= q_aoi and b["v_eps_ms"] >= q_delay)
        rows.append({"scenario": scenario.id, "w_ms": float(w), "epsilon": float(eps), "m": int(m),
                     "delta_eps_ms": b["delta_eps_ms"], "v_eps_ms": b["v_eps_ms"],
                     "sim_aoi_quantile_ms": q_aoi, "sim_delay_quantile_ms": q_delay,
                     "samples": samples.count, "dominance": ok,
                     "runtime_s": 0.0 if args.deterministic else round(runtime, 3)})
        if not ok:
            log.error("bound violated at w=%g eps=%g m=%d: %.4g < %.4g or %.4g < %.4g", w, eps, m,
                      b["delta_eps_ms"], q_aoi, b["v_eps_ms"], q_delay)
    write_csv(os.path.join(args.out, "compare.csv"), COMPARE_COLUMNS, rows,
              _meta(args, scenario.id, _sim_spec(scenario, args)[1]))
    # empirical tail of the peak AoI per simulated point
    for (w, m), (_, samples, _, _) in results.items():
        x = np.unique(np.quantile(samples.aoi, np.linspace(0.0, 1.0, 201), method="higher"))
        tail = [{"aoi_ms": float(v), "exceedance": float(p)} for v, p in zip(x, exceedance(samples.aoi, x))]
        write_csv(os.path.join(args.out, f"tail_w{w:g}_m{m}.csv"), ("aoi_ms", "exceedance"), tail,
                  _meta(args, scenario.id))
    code = EXIT_OK if all(r["dominance"] for r in rows) else EXIT_VIOLATION
    return code, rows


def cmd_sweep(scenario, args):
    lo = args.w_min if args.w_min is not None else min(scenario.w_grid)
    hi = args.w_max if args.w_max is not None else max(scenario.w_grid)
    if not 0 < lo < hi:
        raise InputError("sweep needs 0 < w-min < w-max")
    grid = log_grid(lo, hi, args.per_octave)
    points = [(w, e, m) for w in grid for e in scenario.epsilons for m in scenario.m_values]
    rows = compute_bounds(scenario, points)
    write_csv(os.path.join(args.out, "sweep.csv"), BOUND_COLUMNS, rows, _meta(args, scenario.id))
    write_plot_data(args.out, _curves(rows))
    return EXIT_OK, rows


def cmd_preset(name, args):
    if name not in PRESETS:
        raise InputError(f"unknown preset '{name}' (choose from {', '.join(PRESETS)})")
    seed = args.seed if args.seed is not None else 0
    scenario = scenario_from_dict(preset_dict(name, seed))
    dump_scenario(scenario, os.path.join(args.out, "scenario.json"))
    if name == "fig4":
        code, rows = cmd_compare(scenario, args)
        curves = _curves(rows)
        curves.update(_curves(rows, "sim_aoi_quantile_ms"))
    else:
        code, rows = cmd_bound(scenario, args)
        curves = _curves(rows)
        if name in ("fig3", "fig6"):
            curves.update(_curves(rows, "v_eps_ms"))
    write_plot_data(args.out, curves)
    return code, rows


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="aoc", description="Age-of-information bounds and simulation.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--scenario", required=True, help="scenario JSON file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        sp.add_argument("--deterministic", action="store_true",
                        help="omit timestamps and runtimes so outputs are byte-reproducible")
        sp.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("bound", help="analytic bounds per (w, epsilon, m)"))
    sp = sub.add_parser("simulate", help="simulate and report empirical quantiles")
    common(sp)
    sp.add_argument("--trace", action="store_true", help="also write the full event trace")
    sp = sub.add_parser("compare", help="bounds against simulated quantiles")
    common(sp)
    sp.set_defaults(trace=False)
    sp = sub.add_parser("sweep", help="bounds over a log-spaced w grid")
    common(sp)
    sp.add_argument("--w-min", type=float, default=None)
    sp.add_argument("--w-max", type=float, default=None)
    sp.add_argument("--per-octave", type=int, default=4)
    sp = sub.add_parser("preset", help="reproduce a figure parameter set")
    sp.add_argument("name", help=", ".join(PRESETS))
    common(sp, scenario=False)
    sp.set_defaults(trace=False)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="aoc: %(levelname)s: %(message)s")
    try:
        os.makedirs(args.out, exist_ok=True)
        if args.command == "preset":
            code, _ = cmd_preset(args.name, args)
            return code
        scenario = load_scenario(args.scenario)
        cmd = {"bound": cmd_bound, "simulate": cmd_simulate, "compare": cmd_compare,
               "sweep": cmd_sweep}[args.command]
        code, _ = cmd(scenario, args)
        return code
    except (ScenarioError, InputError) as exc:
        print(f"aoc: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"aoc: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"aoc: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
