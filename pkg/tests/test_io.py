import numpy as np
import pytest

from stochavg import io, simulate, systems
from stochavg.errors import ConfigError


def test_csv_round_trip_is_exact(tmp_path):
    rows = [(1, 0.1, 1 / 3), (2, -1e-300, np.pi)]
    path = io.write_csv(tmp_path / "a.csv", ["id", "x", "y"], rows)
    header, data = io.read_csv(path)
    assert header == ["id", "x", "y"]
    assert data[1, 1] == -1e-300 and data[0, 2] == 1 / 3
    raw = path.read_bytes()
    assert b"\r" not in raw and raw.startswith(b"id,x,y\n")


def test_json_handles_numpy_and_nonfinite(tmp_path):
    path = io.write_json(tmp_path / "m.json", {"a": np.arange(3), "b": np.float64(np.inf), "c": np.bool_(True)})
    assert io.read_json(path) == {"a": [0, 1, 2], "b": "inf", "c": True}


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        io.load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("a: [1, 2\n")
    with pytest.raises(ConfigError):
        io.load_config(bad)
    lst = tmp_path / "list.yaml"
    lst.write_text("- 1\n")
    with pytest.raises(ConfigError):
        io.load_config(lst)


def test_json_config_accepted(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"master_seed": 3, "simulation": {"eps": 0.1}}')
    assert io.load_config(p) == {"master_seed": 3, "simulation": {"eps": 0.1}}


def test_ensemble_round_trip(tmp_path):
    model = systems.coupled_oscillator_model(systems.trig_oscillator_spec())
    cfg = simulate.SimulationConfig(eps=0.2, dt=4e-4, T=0.04, n_paths=3, master_seed=1, record_dt=0.02)
    ens = simulate.simulate_fast_slow(model, cfg, [1.0, 1.0])
    io.write_ensemble(ens, tmp_path)
    back = io.read_ensemble(tmp_path)
    assert np.array_equal(back.H, ens.H) and np.array_equal(back.Phi, ens.Phi)
    assert np.array_equal(back.times, ens.times) and back.eps == ens.eps
    assert list(back.path_ids) == [0, 1, 2]
