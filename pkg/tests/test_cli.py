import json
import logging
import math
import subprocess
import sys

import pytest

import aoc.cli
from aoc.bounds import BoundParams, BoundResult
from aoc.cli import EXIT_INPUT, EXIT_OK, EXIT_VIOLATION, main, read_csv
from aoc.presets import MARKOV_CHANNEL, log_grid, preset
from aoc.scenario import ScenarioError, dump_scenario, load_scenario, scenario_from_dict


def write(tmp_path, d, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d) if not isinstance(d, str) else d)
    return str(p)


def markov(w, eps, samples=20_000, seed=3, **extra):
    d = {"id": "mk", "source": {"type": "periodic", "l_kb": 1, "w_ms": w},
         "service": dict(MARKOV_CHANNEL), "epsilon": eps, "sim": {"samples": samples, "seed": seed}}
    d.update(extra)
    return d


DET = {"id": "det", "source": {"type": "periodic", "l_kb": 1, "w_ms": [2, 4, 8]},
       "service": {"type": "latency_rate", "rate": 2.0, "latency": 0.75}, "epsilon": 1e-3,
       "sim": {"samples": 500, "seed": 1}}


# ---------------------------------------------------------------------------
# scenario files


def test_scenario_round_trip(tmp_path):
    sc = scenario_from_dict(markov([2, 4], [1e-3, 1e-6], m=[0, 5], loss={"eta": 1}))
    dump_scenario(sc, tmp_path / "x.json")
    assert load_scenario(tmp_path / "x.json") == sc
    assert sc.points()[:3] == [(2.0, 1e-3, 0), (2.0, 1e-3, 5), (2.0, 1e-6, 0)]


@pytest.mark.parametrize("patch,field", [
    ({"epsilon": 1.5}, "epsilon"),
    ({"source": {"type": "periodic", "l_kb": -1, "w_ms": 2}}, "source"),
    ({"source": {"type": "periodic", "l_kb": 1, "w_ms": []}}, "source.w_ms"),
    ({"m": -1}, "m"),
    ({"sim": {"samples": 0}}, "sim.samples"),
    ({"bogus": 1}, "<root>"),
])
def test_scenario_errors_name_field(patch, field):
    d = markov(2, 1e-3)
    d.update(patch)
    with pytest.raises(ScenarioError, match=field.replace(".", r"\.")):
        scenario_from_dict(d)


def test_presets_load():
    assert preset("fig3").w_grid[0] == 1.0 and preset("fig3").w_grid[-1] == 64.0
    assert 32.0 in preset("fig3").w_grid
    assert log_grid(1, 8, 2) == [1.0, 2 ** 0.5, 2.0, 2 ** 1.5, 4.0, 2 ** 2.5, 8.0]
    assert preset("fig6").m_values == (0, 10, 20, 30)


# ---------------------------------------------------------------------------
# bound


def test_bound_deterministic_closed_form(tmp_path):
    out = tmp_path / "o"
    assert main(["bound", "--scenario", write(tmp_path, DET), "--out", str(out)]) == EXIT_OK
    cols, rows = read_csv(out / "bounds.csv")
    assert tuple(cols) == aoc.cli.BOUND_COLUMNS
    for r in rows:
        assert r["delta_eps_ms"] == pytest.approx(r["w_ms"] + 0.5 + 0.75, rel=1e-12)
        assert r["feasible"] is True


def test_bound_malformed_json(tmp_path, capsys):
    assert main(["bound", "--scenario", write(tmp_path, "{not json"), "--out", str(tmp_path)]) == EXIT_INPUT
    d = markov(2, 1e-3)
    d["service"] = {"type": "markov_onoff", "p_on": 2.0, "gamma_kbps_ms": 1, "beta_ms": 8}
    assert main(["bound", "--scenario", write(tmp_path, d), "--out", str(tmp_path)]) == EXIT_INPUT
    assert "service" in capsys.readouterr().err
    d = markov(2, 1e-3)
    d["source"]["w_ms"] = "two"
    assert main(["bound", "--scenario", write(tmp_path, d), "--out", str(tmp_path)]) == EXIT_INPUT
    assert "source.w_ms" in capsys.readouterr().err


def test_bound_missing_file_and_bad_args(tmp_path):
    assert main(["bound", "--scenario", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == EXIT_INPUT
    assert main(["bound"]) == EXIT_INPUT
    assert main(["frobnicate"]) == EXIT_INPUT


def test_bound_unsupported_combination(tmp_path):
    d = dict(DET, m=3)
    assert main(["bound", "--scenario", write(tmp_path, d), "--out", str(tmp_path)]) == EXIT_INPUT


def test_bound_infeasible_rows_are_marked(tmp_path):
    out = tmp_path / "o"
    d = markov([0.5, 4], 1e-3)
    assert main(["bound", "--scenario", write(tmp_path, d), "--out", str(out)]) == EXIT_OK
    _, rows = read_csv(out / "bounds.csv")
    assert rows[0]["feasible"] is False and math.isinf(rows[0]["delta_eps_ms"])
    assert rows[1]["feasible"] is True


def test_bound_monotone_in_epsilon(tmp_path):
    out = tmp_path / "o"
    assert main(["preset", "fig3", "--out", str(out), "--deterministic"]) == EXIT_OK
    _, rows = read_csv(out / "bounds.csv")
    by_w = {}
    for r in rows:
        by_w.setdefault(r["w_ms"], {})[r["epsilon"]] = r["delta_eps_ms"]
    for vals in by_w.values():
        assert vals[1e-9] >= vals[1e-6] >= vals[1e-3]
    assert (out / "plot_delta_eps1e-06_m0.csv").exists()
    assert (out / "plot_v_eps1e-06_m0.csv").exists()


def test_fig3_matches_fig6_m0(tmp_path):
    assert main(["preset", "fig3", "--out", str(tmp_path / "a"), "--deterministic"]) == EXIT_OK
    assert main(["preset", "fig6", "--out", str(tmp_path / "b"), "--deterministic"]) == EXIT_OK
    _, a = read_csv(tmp_path / "a" / "bounds.csv")
    _, b = read_csv(tmp_path / "b" / "bounds.csv")
    fa = {r["w_ms"]: r["delta_eps_ms"] for r in a if r["epsilon"] == 1e-6}
    fb = {r["w_ms"]: r["delta_eps_ms"] for r in b if r["m"] == 0}
    assert fa == fb


def test_threads_do_not_change_output(tmp_path, monkeypatch):
    sc = write(tmp_path, markov(log_grid(1, 16, 2), [1e-3, 1e-6]))
    assert main(["bound", "--scenario", sc, "--out", str(tmp_path / "a"), "--deterministic"]) == EXIT_OK
    monkeypatch.setenv("AOC_THREADS", "4")
    assert main(["bound", "--scenario", sc, "--out", str(tmp_path / "b"), "--deterministic"]) == EXIT_OK
    assert (tmp_path / "a" / "bounds.csv").read_bytes() == (tmp_path / "b" / "bounds.csv").read_bytes()
    monkeypatch.setenv("AOC_THREADS", "many")
    assert main(["bound", "--scenario", sc, "--out", str(tmp_path / "c")]) == EXIT_INPUT


def test_csv_byte_round_trip(tmp_path):
    out = tmp_path / "o"
    assert main(["bound", "--scenario", write(tmp_path, markov([2, 8], 1e-3)), "--out", str(out),
                 "--deterministic"]) == EXIT_OK
    cols, rows = read_csv(out / "bounds.csv")
    aoc.cli.write_csv(tmp_path / "again.csv", cols, rows, {"scenario": "mk"})
    assert (tmp_path / "again.csv").read_bytes() == (out / "bounds.csv").read_bytes()


def test_timestamp_header(tmp_path):
    out = tmp_path / "o"
    assert main(["bound", "--scenario", write(tmp_path, DET), "--out", str(out)]) == EXIT_OK
    assert "# created:" in (out / "bounds.csv").read_text()


# ---------------------------------------------------------------------------
# simulate


def test_simulate_deterministic_constant_peak(tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--scenario", write(tmp_path, DET), "--out", str(out), "--deterministic"]) == EXIT_OK
    from aoc.sim import AoiSampleSet
    for w in (2, 4, 8):
        s = AoiSampleSet.from_csv(out / f"samples_w{w}_m0.csv")
        assert s.count >= 500
        assert s.aoi == pytest.approx([w + 0.5 + 0.75] * s.count, rel=1e-12)


def test_simulate_same_seed_identical(tmp_path):
    sc = write(tmp_path, markov(4, 1e-2, samples=5000, m=1))
    args = ["simulate", "--scenario", sc, "--deterministic", "--trace"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    for name in ("samples_w4_m1.csv", "trace_w4_m1.csv", "sim_summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert main(args + ["--out", str(tmp_path / "c"), "--seed", "99"]) == EXIT_OK
    assert (tmp_path / "a" / "samples_w4_m1.csv").read_bytes() != (tmp_path / "c" / "samples_w4_m1.csv").read_bytes()


def test_simulate_low_samples_warns(tmp_path, caplog):
    sc = write(tmp_path, markov(4, 1e-3, samples=2000))
    with caplog.at_level(logging.WARNING, logger="aoc"):
        assert main(["simulate", "--scenario", sc, "--out", str(tmp_path / "o")]) == EXIT_OK
    assert any("unreliable" in r.getMessage() for r in caplog.records)


def test_simulate_empty_output(tmp_path):
    # a single departure inside the horizon is discarded as warm-up
    d = markov(4, 1e-3)
    d["sim"] = {"samples": 1, "seed": 0, "horizon_ms": 0.5}
    assert main(["simulate", "--scenario", write(tmp_path, d), "--out", str(tmp_path / "o")]) == EXIT_INPUT
    # tagged flow starved by higher priorities
    d = markov(1.5, 1e-3, samples=100, m=3)
    assert main(["compare", "--scenario", write(tmp_path, d), "--out", str(tmp_path / "p")]) == EXIT_INPUT


# ---------------------------------------------------------------------------
# compare


def test_compare_dominance(tmp_path):
    out = tmp_path / "o"
    sc = write(tmp_path, markov([2, 8], 1e-2, samples=20_000))
    assert main(["compare", "--scenario", sc, "--out", str(out), "--deterministic"]) == EXIT_OK
    cols, rows = read_csv(out / "compare.csv")
    assert tuple(cols) == aoc.cli.COMPARE_COLUMNS
    assert all(r["dominance"] is True for r in rows)
    assert all(r["runtime_s"] == 0.0 for r in rows)
    _, tail = read_csv(out / "tail_w2_m0.csv")
    p = [r["exceedance"] for r in tail]
    assert all(a >= b for a, b in zip(p, p[1:]))


def test_compare_violation_exit_code(tmp_path, monkeypatch):
    def tiny(scenario, w=None, epsilon=None, m=None, workers=None):
        return BoundResult(0.5, 0.5, BoundParams(1.0, 1.0, 1.0, 0.0), True, epsilon=epsilon, w=w)
    monkeypatch.setattr(aoc.cli, "optimize_bound", tiny)
    sc = write(tmp_path, markov(4, 1e-2, samples=5000))
    assert main(["compare", "--scenario", sc, "--out", str(tmp_path / "o")]) == EXIT_VIOLATION
    _, rows = read_csv(tmp_path / "o" / "compare.csv")
    assert rows[0]["dominance"] is False


# ---------------------------------------------------------------------------
# sweep and presets


def test_sweep(tmp_path):
    out = tmp_path / "o"
    sc = write(tmp_path, markov(2, [1e-3, 1e-6]))
    assert main(["sweep", "--scenario", sc, "--out", str(out), "--w-min", "1", "--w-max", "16",
                 "--per-octave", "2", "--deterministic"]) == EXIT_OK
    _, rows = read_csv(out / "sweep.csv")
    assert len(rows) == 9 * 2
    _, pts = read_csv(out / "plot_delta_eps0.001_m0.csv")
    assert [p["x"] for p in pts] == log_grid(1, 16, 2)
    assert main(["sweep", "--scenario", sc, "--out", str(out), "--w-min", "4", "--w-max", "2"]) == EXIT_INPUT


def test_preset_unknown(tmp_path):
    assert main(["preset", "fig9", "--out", str(tmp_path)]) == EXIT_INPUT


def test_preset_fig5_interior_minimum(tmp_path):
    out = tmp_path / "o"
    assert main(["preset", "fig5", "--out", str(out), "--deterministic"]) == EXIT_OK
    _, rows = read_csv(out / "bounds.csv")
    vals = [r["delta_eps_ms"] for r in rows]
    i = vals.index(min(vals))
    assert 0 < i < len(vals) - 1
    assert load_scenario(out / "scenario.json").id == "fig5"


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "aoc", "bound", "--scenario", write(tmp_path, DET),
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "o" / "bounds.csv").exists()
