import csv
import json

import pytest

from ezmfg.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main


def run(tmp_path, text, *extra, name="case"):
    cfg = tmp_path / f"{name}.toml"
    cfg.write_text(text)
    out = tmp_path / f"out-{name}"
    code = main(["--config", str(cfg), "--out", str(out), *extra])
    return code, out


def summary(out):
    return json.loads((out / "summary.json").read_text())


def no_nan(out):
    for f in out.iterdir():
        text = f.read_text().lower()
        assert "nan" not in text and "inf" not in text.replace("info", ""), f.name


def read_csv(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def test_bundled_equilibrium(tmp_path):
    out = tmp_path / "o"
    assert main(["--config", "test2", "--out", str(out)]) == EXIT_OK
    eq = json.loads((out / "equilibrium.json").read_text())
    assert set(eq) >= {"r_star", "K", "N", "residual", "iterations"}
    assert eq["r_star"] == pytest.approx(0.0246, abs=5e-3)
    s = summary(out)
    assert s["status"] == "ok" and s["exit_code"] == 0 and s["invariants_passed"]
    assert s["derived"]["theta"] == pytest.approx(1.5)
    assert s["simulation_config"]["rng"] == "PCG64"
    rows = read_csv(out / "values.csv")
    assert list(rows[0]) == ["x", "v1", "v2", "c1", "c2", "s1", "s2"]
    assert len(rows) == 2001
    meta = (out / "measure.csv").read_text().splitlines()[0]
    assert meta.startswith("#") and all(k in meta for k in ("mu1=", "mu2=", "xhat="))
    assert list(read_csv(out / "measure.csv")[0]) == ["x", "g1", "g2", "G1", "G2"]
    no_nan(out)


def test_crra_rate(tmp_path):
    out = tmp_path / "o"
    assert main(["--config", "crra", "--out", str(out)]) == EXIT_OK
    eq = json.loads((out / "equilibrium.json").read_text())
    assert eq["r_star"] == pytest.approx(0.027942, abs=1e-3)


def test_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["--config", "test2", "--mode", "solve-fpk", "--out", str(d)]) == EXIT_OK
    for name in ("values.csv", "measure.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_csv_digits(tmp_path):
    code, out = run(tmp_path, "[run]\nmode = \"solve-hjb\"\nr = 0.02\n")
    assert code == EXIT_OK
    row = read_csv(out / "values.csv")[1000]
    assert any(len(v.replace("-", "").replace(".", "").lstrip("0")) >= 15 for v in row.values())


def test_gamma_half_is_config_error(tmp_path):
    code, out = run(tmp_path, "[model]\ngamma = 0.5\n")
    assert code == EXIT_CONFIG
    s = summary(out)
    assert s["status"] == "config_error" and "gamma" in s["error"]


def test_unknown_key_is_config_error(tmp_path):
    code, out = run(tmp_path, "[grid]\nnn = 10\n")
    assert code == EXIT_CONFIG
    assert "nn" in summary(out)["error"]


def test_unknown_section_is_config_error(tmp_path):
    code, _ = run(tmp_path, "[gird]\nn = 10\n")
    assert code == EXIT_CONFIG


def test_empty_sweep_is_config_error(tmp_path):
    code, out = run(tmp_path, "[run]\nmode = \"sweep-r\"\n[sweep]\nr = []\n")
    assert code == EXIT_CONFIG
    assert not (out / "sweep.csv").exists()


def test_strict_rejects_high_gamma_psi(tmp_path):
    out = tmp_path / "o"
    assert main(["--config", "test3", "--strict", "--out", str(out)]) == EXIT_CONFIG
    assert summary(out)["status"] == "config_error"


def test_solver_failure_exit(tmp_path):
    code, out = run(tmp_path, "[run]\nmode = \"solve-hjb\"\nr = 0.02\n[solver]\nmax_iter = 1\n")
    assert code == EXIT_SOLVER
    assert summary(out)["status"] == "solver_failure"


def test_escaping_policy_is_solver_failure(tmp_path):
    # the saving policy never turns negative on this grid, so the invariant check stops the run
    code, out = run(tmp_path, "[run]\nmode = \"solve-fpk\"\nr = 0.045\n")
    assert code == EXIT_SOLVER
    s = summary(out)
    assert "s2_turns_negative" in s["error"]
    assert s["invariants_passed"] is False


def test_sweep_order_and_error_rows(tmp_path):
    code, out = run(tmp_path, "[run]\nmode = \"sweep-r\"\n[sweep]\nr = [0.03, 0.01, 0.045, 0.02]\n")
    assert code == EXIT_OK
    rows = read_csv(out / "sweep.csv")
    assert list(rows[0]) == ["r", "K_supply", "K_demand", "s2_at_xlow", "xhat", "mu1", "error"]
    assert [float(r["r"]) for r in rows] == [0.03, 0.01, 0.045, 0.02]
    bad = rows[2]
    assert bad["error"].startswith("NoCrossing") and bad["K_supply"] == ""
    assert float(bad["s2_at_xlow"]) > 0
    assert all(r["error"] == "" for r in (rows[1], rows[3]))
    assert float(rows[1]["K_supply"]) < float(rows[3]["K_supply"])
    assert summary(out)["sweep"]["failed_rows"] >= 1
    no_nan(out)


def test_sweep_on_wide_grid_increases(tmp_path):
    text = "[grid]\nx_max = 200.0\nn = 10000\n[run]\nmode = \"sweep-r\"\n[sweep]\nr = [0.01, 0.02, 0.03, 0.04, 0.045]\n"
    code, out = run(tmp_path, text)
    assert code == EXIT_OK
    rows = read_csv(out / "sweep.csv")
    K = [float(r["K_supply"]) for r in rows]
    assert all(r["error"] == "" for r in rows)
    assert all(a < b for a, b in zip(K, K[1:]))
    Kd = [float(r["K_demand"]) for r in rows]
    assert all(a > b for a, b in zip(Kd, Kd[1:]))


def test_sweep_at_equilibrium_clears(tmp_path):
    out = tmp_path / "eq"
    assert main(["--config", "test2", "--out", str(out)]) == EXIT_OK
    r = json.loads((out / "equilibrium.json").read_text())["r_star"]
    code, sw = run(tmp_path, f"[run]\nmode = \"sweep-r\"\n[sweep]\nr = [{r!r}]\n")
    assert code == EXIT_OK
    row = read_csv(sw / "sweep.csv")[0]
    assert float(row["K_supply"]) == pytest.approx(float(row["K_demand"]), rel=1e-4)


def test_json_output_format(tmp_path):
    code, out = run(tmp_path, "[run]\nmode = \"solve-fpk\"\nr = 0.02\n[output]\nformat = \"json\"\n")
    assert code == EXIT_OK
    m = json.loads((out / "measure.json").read_text())
    assert {"x", "g1", "g2", "G1", "G2"} <= set(m["columns"] if "columns" in m else m)


def test_simulate_and_seed_override(tmp_path):
    text = "[run]\nmode = \"simulate\"\nr = 0.02\n[simulate]\nn_agents = 500\nt_end = 5.0\nburn_in = 1.0\n"
    code, out = run(tmp_path, text, "--seed", "7")
    assert code == EXIT_OK
    rows = read_csv(out / "simulate.csv")
    assert len(rows) == 500 and list(rows[0]) == ["agent_id", "wealth", "state"]
    s = summary(out)
    assert s["simulation_config"]["seed"] == 7
    assert s["simulation"]["rng"] == "PCG64"
    no_nan(out)


def test_bad_simulation_step_is_config_error(tmp_path):
    code, _ = run(tmp_path, "[run]\nmode = \"simulate\"\nr = 0.02\n[simulate]\ndt = 0.5\n")
    assert code == EXIT_CONFIG


def test_validate_asymptotics(tmp_path):
    code, out = run(tmp_path, "[run]\nmode = \"validate-asymptotics\"\nr = 0.0249\n")
    assert code == EXIT_OK
    rep = json.loads((out / "asymptotics.json").read_text())
    assert set(rep) == {"far_field", "decay_ratio", "boundary_layer"}
    inv = summary(out)["invariants"]["asymptotics"]
    assert inv["far_field"] and inv["decay_ratio"] and inv["boundary_layer"]
    no_nan(out)


def test_help_lists_keys(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for key in ("[model]", "gamma", "[grid]", "clustering", "[sweep]", "test2", "exit codes"):
        assert key in text


def test_missing_config_file(tmp_path):
    out = tmp_path / "o"
    assert main(["--config", str(tmp_path / "nope.toml"), "--out", str(out)]) == EXIT_CONFIG
    assert (out / "summary.json").exists()
