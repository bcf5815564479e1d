"""Artifact persistence: CSV tables, JSON manifests and run configs."""
import json
import math
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError

FLOAT_FMT = "%.17g"


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return FLOAT_FMT % float(v)


def write_csv(path, header, rows):
    """UTF-8, LF line endings, header first; floats round-trip exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_config(path):
    """YAML or JSON mapping (JSON is valid YAML, so one parser serves both)."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML/JSON: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping at the top level")
    return data


# ---------------------------------------------------------------- ensembles

def ensemble_rows(ens):
    """Long format: one row per (path, recorded time)."""
    P, R, n = ens.H.shape
    cols = [np.repeat(ens.path_ids, R), np.tile(ens.times, P), *ens.H.reshape(-1, n).T]
    header = ["path_id", "t"] + [f"h{i + 1}" for i in range(n)]
    for name, arr in (("phi", ens.Phi), ("w", ens.W)):
        if arr is not None:
            cols += list(arr.reshape(P * R, -1).T)
            header += [f"{name}{i + 1}" for i in range(arr.shape[-1])]
    ids = cols[0].astype(np.int64)
    data = np.column_stack(cols[1:])
    return header, ((int(i), *row) for i, row in zip(ids, data))


def write_ensemble(ens, directory, stem="ensemble"):
    directory = Path(directory)
    header, rows = ensemble_rows(ens)
    csv_path = write_csv(directory / f"{stem}.csv", header, rows)
    manifest = {
        "artifact": csv_path.name, "config": ens.config, "eps": ens.eps,
        "master_seed": ens.master_seed, "n_paths": ens.n_paths,
        "path_seeds": "SeedSequence(master_seed, spawn_key=(path_id,)) -> Philox",
        "stop_times": ens.stop_times, "flags": ens.flags,
    }
    write_json(directory / f"{stem}.manifest.json", manifest)
    return csv_path


def read_ensemble(directory, stem="ensemble"):
    """Rebuild a :class:`PathEnsemble` (H and angles) from CSV + manifest."""
    from .simulate import PathEnsemble

    directory = Path(directory)
    header, data = read_csv(directory / f"{stem}.csv")
    manifest = read_json(directory / f"{stem}.manifest.json")
    ids = data[:, 0].astype(int)
    path_ids = np.unique(ids)
    P = path_ids.size
    R = data.shape[0] // P
    times = data[:R, 1]

    def block(prefix):
        idx = [i for i, h in enumerate(header) if h.startswith(prefix) and h[len(prefix):].isdigit()]
        return data[:, idx].reshape(P, R, len(idx)) if idx else None

    stop = manifest.get("stop_times")
    stop = None if stop is None else np.array([float(s) for s in stop])
    return PathEnsemble(times=times, H=block("h"), Phi=block("phi"), W=block("w"),
                        eps=manifest.get("eps"), master_seed=manifest.get("master_seed", 0),
                        path_ids=path_ids, stop_times=stop,
                        flags={k: np.asarray(v) if isinstance(v, list) else v
                               for k, v in manifest.get("flags", {}).items()},
                        config=manifest.get("config", {}))
