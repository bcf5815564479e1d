import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from stochavg import cli, io


def write(tmp_path, name, data):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


def run(*argv):
    return cli.main([str(a) for a in argv])


AVG = {"model": {"name": "coupled_oscillators"}, "grids": {"M_w": 16, "M_phi": 8, "h_grid": {"points": 3}}}


def test_average_default_oscillators(tmp_path, capsys):
    out = tmp_path / "avg"
    assert run("average", "--config", write(tmp_path, "a.yaml", AVG), "--out", out, "--threads", 1) == 0
    header, data = io.read_csv(out / "coefficients.csv")
    assert np.abs(data[:, header.index("A12")]).max() <= 1e-8
    ell = io.read_json(out / "ellipticity.json")
    assert ell["verdict"] == "elliptic"
    manifest = io.read_json(out / "manifest.json")
    assert manifest["config"]["model"]["name"] == "coupled_oscillators"
    assert set(manifest["artifacts"]) == {"coefficients.csv", "ellipticity.json"}
    assert "ellipticity: elliptic" in capsys.readouterr().out


def test_average_zero_perturbation_is_degenerate(tmp_path):
    cfg = {**AVG, "model": {"name": "coupled_oscillators", "params": {"amplitudes": [0, 0]}}}
    out = tmp_path / "zero"
    assert run("average", "--config", write(tmp_path, "z.yaml", cfg), "--out", out) == 0
    _, data = io.read_csv(out / "coefficients.csv")
    assert np.all(data[:, 2:] == 0)
    assert io.read_json(out / "ellipticity.json")["verdict"] == "degenerate"


def test_missing_model_name(tmp_path, capsys):
    code = run("average", "--config", write(tmp_path, "m.yaml", {"grids": {"M_w": 16}}), "--out", tmp_path / "x")
    assert code == 2 and "model.name" in capsys.readouterr().err


def test_unknown_key_is_an_error(tmp_path, capsys):
    code = run("average", "--config", write(tmp_path, "u.yaml", {**AVG, "gridz": {}}), "--out", tmp_path / "x")
    assert code == 2 and "gridz" in capsys.readouterr().err
    code = run("average", "--config", write(tmp_path, "v.yaml", {"grids": {"Mw": 16}}), "--out", tmp_path / "x")
    assert code == 2 and "grids.Mw" in capsys.readouterr().err


def test_unknown_model_parameter(tmp_path, capsys):
    cfg = {"model": {"name": "coupled_oscillators", "params": {"amplitude": 1}}}
    assert run("average", "--config", write(tmp_path, "p.yaml", cfg), "--out", tmp_path / "x") == 2
    assert "amplitude" in capsys.readouterr().err


def test_eps_ladder_must_decrease(tmp_path):
    cfg = {"analysis": {"eps_ladder": [0.1, 0.2]}}
    assert run("compare", "--config", write(tmp_path, "l.yaml", cfg), "--out", tmp_path / "x") == 2


def test_simulate_step_rule_exit_code(tmp_path, capsys):
    code = run("simulate", "--model", "coupled_oscillators", "--eps", 0.5, "--dt", 0.1, "--T", 1, "--paths", 4,
               "--out", tmp_path / "s")
    assert code == 3
    err = capsys.readouterr().err
    assert "substep rule" in err and "simulate coupled_oscillators" in err


def test_simulate_same_seed_byte_identical(tmp_path):
    args = ["simulate", "--model", "coupled_oscillators", "--eps", 0.2, "--T", 0.1, "--paths", 6, "--seed", 17]
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--out", tmp_path / "b", "--threads", 3) == 0
    assert (tmp_path / "a/ensemble.csv").read_bytes() == (tmp_path / "b/ensemble.csv").read_bytes()
    assert run(*args[:-1], 18, "--out", tmp_path / "c") == 0
    assert (tmp_path / "a/ensemble.csv").read_bytes() != (tmp_path / "c/ensemble.csv").read_bytes()


def test_replay_from_manifest(tmp_path):
    args = ["simulate", "--model", "coupled_oscillators", "--eps", 0.2, "--T", 0.1, "--paths", 4, "--seed", 5]
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run("simulate", "--config", tmp_path / "a/manifest.json", "--out", tmp_path / "b") == 0
    assert (tmp_path / "a/ensemble.csv").read_bytes() == (tmp_path / "b/ensemble.csv").read_bytes()


def test_limit_identity_variance_file(tmp_path):
    cfg = {"simulation": {"generator": {"A": [[1, 0], [0, 1]], "B": [0, 0]}, "h0": [0, 0], "dt": 0.01, "T": 1,
                          "n_paths": 4000}}
    out = tmp_path / "lim"
    assert run("simulate", "--limit", "--config", write(tmp_path, "l.yaml", cfg), "--out", out, "--seed", 2) == 0
    vc = io.read_json(out / "variance_check.json")
    assert np.allclose(vc["expected_covariance"], np.eye(2))
    assert np.all(np.abs(vc["variance_z"]) <= 3)


def test_limit_from_average_output(tmp_path):
    avg = tmp_path / "avg"
    assert run("average", "--config", write(tmp_path, "a.yaml", AVG), "--out", avg) == 0
    cfg = {"simulation": {"generator": {"coefficients": str(avg)}, "h0": [1, 1], "dt": 0.01, "T": 0.5,
                          "n_paths": 20}}
    assert run("simulate", "--limit", "--config", write(tmp_path, "g.yaml", cfg), "--out", tmp_path / "l") == 0
    m = io.read_json(tmp_path / "l/ensemble.manifest.json")
    assert m["config"]["limit"] is True


@pytest.mark.parametrize("model, cols", [("landau_lifshitz", "path_id,t,x1,x2,x3,G_avg"),
                                         ("double_well_openbook", "path_id,t,h1,h2,page")])
def test_simulate_other_models(tmp_path, model, cols):
    out = tmp_path / model
    assert run("simulate", "--model", model, "--eps", 0.2, "--T", 0.05, "--paths", 2, "--out", out) == 0
    assert (out / "ensemble.csv").read_text().splitlines()[0] == cols


def test_compare_self_and_errors(tmp_path, capsys):
    cfg = {"simulation": {"generator": {"A": [[1]], "B": [0]}, "h0": [0], "dt": 0.01, "T": 1, "n_paths": 50}}
    assert run("simulate", "--limit", "--config", write(tmp_path, "l.yaml", cfg), "--out", tmp_path / "l") == 0
    lim = str(tmp_path / "l")
    ok = {"analysis": {"ensembles": [lim], "limit_ensemble": lim, "checkpoints": [0.5, 1.0]}}
    assert run("compare", "--config", write(tmp_path, "c.yaml", ok), "--out", tmp_path / "c") == 0
    rep = io.read_json(tmp_path / "c/comparison.json")
    assert all(r["diff"] == 0 for r in rep["rows"]) and rep["passed"]
    assert (tmp_path / "c/comparison.txt").exists()
    bad_t = {"analysis": {"ensembles": [lim], "limit_ensemble": lim, "checkpoints": [0.537]}}
    assert run("compare", "--config", write(tmp_path, "d.yaml", bad_t), "--out", tmp_path / "d") == 2
    missing = {"analysis": {"ensembles": [str(tmp_path / "nope")], "limit_ensemble": lim}}
    assert run("compare", "--config", write(tmp_path, "e.yaml", missing), "--out", tmp_path / "e") == 2
    assert "missing" in capsys.readouterr().err


def test_resonance_irrational_and_rational(tmp_path, capsys):
    irr = {"resonance": {"omega": {"values": [1, 2 ** 0.5]}, "region": [[0, 1], [0, 1]], "K": 10}}
    assert run("resonance", "--config", write(tmp_path, "i.yaml", irr), "--out", tmp_path / "i") == 0
    assert io.read_json(tmp_path / "i/resonance.json")["per_k"] == []
    rat = {"resonance": {"omega": {"values": [1, 2]}, "region": [[0, 1], [0, 1]], "K": 10}}
    assert run("resonance", "--config", write(tmp_path, "r.yaml", rat), "--out", tmp_path / "r") == 0
    js = io.read_json(tmp_path / "r/resonance.json")
    assert js["total_fraction"] == 1.0 and js["warnings"]
    assert "warning" in capsys.readouterr().err


def test_openbook_frequencies_sum_to_one(tmp_path):
    cfg = {"openbook": {"paths_per_page": 30, "min_hits": 3, "distances": [0.1], "T_max": 8}}
    assert run("openbook", "--config", write(tmp_path, "o.yaml", cfg), "--out", tmp_path / "o", "--seed", 3) == 0
    js = io.read_json(tmp_path / "o/gluing.json")
    for f in js["reports"][0]["exit_frequencies"].values():
        assert sum(f) == pytest.approx(1.0, abs=1e-15)
    _, data = io.read_csv(tmp_path / "o/exit_frequencies.csv")
    assert data.shape == (3, 8)


def test_preset_routing(tmp_path, capsys):
    assert run("resonance", "--preset", "resonance-scan", "--out", tmp_path / "p") == 0
    assert io.read_json(tmp_path / "p/resonance-scan.json")["passed"] is True
    assert run("average", "--preset", "resonance-scan", "--out", tmp_path / "q") == 2
    assert run("average", "--preset", "no-such-preset", "--out", tmp_path / "q") == 2
    cfg = {"preset": {"options": {"n_polys": 2, "bogus": 1}}}
    assert run("average", "--preset", "cell-problem-oracle", "--config", write(tmp_path, "b.yaml", cfg),
               "--out", tmp_path / "q") == 2
    assert "bogus" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "stochavg", "resonance", "--preset", "resonance-scan",
                           "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert proc.returncode == 0 and "PASS" in proc.stdout
    json.loads((tmp_path / "m/manifest.json").read_text())
