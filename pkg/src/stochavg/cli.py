"""Command-line front end.

``stochavg average|simulate|compare|resonance|openbook`` read an optional
YAML/JSON config, apply flag overrides, run the pipeline stage and write CSV
tables plus a ``manifest.json`` holding the resolved config and seed.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
import argparse
import copy
import inspect
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import analysis, averaging, io, presets, resonance, simulate, systems
from .errors import ConfigError, NumericalError

ANY = None  # leaf accepting any value
FREE = "free"  # mapping passed through to a builder that validates it

SCHEMA = {
    "model": {"name": ANY, "params": FREE},
    "grids": {"M_w": ANY, "M_phi": ANY, "fd_step": ANY, "h_axes": ANY,
              "h_grid": {"lower": ANY, "upper": ANY, "points": ANY}},
    "simulation": {"eps": ANY, "dt": ANY, "T": ANY, "n_paths": ANY, "record_dt": ANY, "h0": ANY,
                   "phi0": ANY, "w0": ANY, "x0": ANY, "x1_0": ANY, "x2_0": ANY, "scheme": ANY,
                   "c_sub": ANY, "c_step": ANY, "h_floor": ANY, "chunk_steps": ANY, "limit": ANY,
                   "generator": {"A": ANY, "B": ANY, "bounds": ANY, "coefficients": ANY}},
    "analysis": {"ensembles": ANY, "limit_ensemble": ANY, "eps_ladder": ANY, "test_functions": ANY,
                 "checkpoints": ANY, "slack": ANY},
    "resonance": {"omega": {"kind": ANY, "values": ANY, "base": ANY, "slope": ANY},
                  "region": ANY, "K": ANY, "grid": ANY, "tol": ANY, "ks": ANY},
    "openbook": {k: ANY for k in (*presets.OPENBOOK, "min_hits")},
    "preset": {"name": ANY, "options": FREE},
    "master_seed": ANY, "threads": ANY, "output": ANY,
}

MODEL_BUILDERS = {
    "coupled_oscillators": systems.trig_oscillator_spec,
    "double_well_openbook": systems.symmetric_double_well_system,
    "landau_lifshitz": systems.tilted_field_ll_spec,
}

# which subcommand runs which acceptance preset
PRESET_COMMAND = {
    "cell-problem-oracle": "average", "oscillator-coefficient-oracle": "average",
    "small-action-asymptotics": "average", "ellipticity": "average",
    "occupation-time": "simulate", "inaccessibility": "simulate",
    "oscillator-weak-convergence": "compare", "resonance-scan": "resonance",
    "openbook-splitting": "openbook",
}


class Stage:
    """Name of the pipeline stage in progress, quoted in failure messages."""

    def __init__(self):
        self.name = "startup"

    def __call__(self, name):
        self.name = name
        return self


# ------------------------------------------------------------------ config

def validate_config(cfg, schema=SCHEMA, prefix=""):
    if not isinstance(cfg, dict):
        raise ConfigError(f"{prefix or 'config'} must be a mapping")
    for key, val in cfg.items():
        path = f"{prefix}{key}"
        if key not in schema:
            raise ConfigError(f"unknown config key {path!r}")
        sub = schema[key]
        if isinstance(sub, dict):
            validate_config(val if val is not None else {}, sub, path + ".")
        elif sub == FREE and val is not None and not isinstance(val, dict):
            raise ConfigError(f"{path} must be a mapping")


def resolve_config(args):
    cfg = io.load_config(args.config) if args.config else {}
    if "command" in cfg and "config" in cfg:
        # a run manifest: replay its resolved config
        cfg = cfg["config"]
    validate_config(cfg)
    cfg = copy.deepcopy(cfg)
    for key in SCHEMA:
        if isinstance(SCHEMA[key], dict):
            cfg[key] = cfg.get(key) or {}
    if args.seed is not None:
        cfg["master_seed"] = args.seed
    # absent seed: plain commands use 0, presets keep their own defaults
    cfg.setdefault("master_seed", None)
    if args.threads is not None:
        cfg["threads"] = args.threads
    cfg.setdefault("threads", os.cpu_count() or 1)
    if args.out is not None:
        cfg["output"] = args.out
    cfg.setdefault("output", "stochavg-out")
    if getattr(args, "preset", None):
        cfg["preset"]["name"] = args.preset
    for flag, key in (("model", "name"),):
        if getattr(args, flag, None):
            cfg["model"][key] = getattr(args, flag)
    sim = cfg["simulation"]
    for flag, key in (("eps", "eps"), ("dt", "dt"), ("T", "T"), ("paths", "n_paths")):
        if getattr(args, flag, None) is not None:
            sim[key] = getattr(args, flag)
    if getattr(args, "limit", False):
        sim["limit"] = True
    ladder = cfg["analysis"].get("eps_ladder")
    if ladder is not None and any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ConfigError(f"analysis.eps_ladder must be strictly decreasing, got {ladder}")
    return cfg


def output_dir(cfg):
    out = Path(cfg["output"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from None
    return out


def _int(v, name):
    if isinstance(v, bool) or int(v) != v:
        raise ConfigError(f"{name} must be an integer, got {v!r}")
    return int(v)


def _seed(cfg, default):
    v = cfg.get("master_seed")
    return default if v is None else _int(v, "master_seed")


def build_model(cfg, allowed=None):
    section = cfg["model"]
    name = section.get("name")
    if not name:
        raise ConfigError("model.name is required (one of: " + ", ".join(systems.BUILTIN_MODELS) + ")")
    if name not in MODEL_BUILDERS:
        raise ConfigError(f"model.name: unknown model {name!r}; choose one of {', '.join(MODEL_BUILDERS)}")
    if allowed and name not in allowed:
        raise ConfigError(f"model.name: {name!r} is not supported here (supported: {', '.join(allowed)})")
    builder = MODEL_BUILDERS[name]
    params = section.get("params") or {}
    unknown = set(params) - set(inspect.signature(builder).parameters)
    if unknown:
        raise ConfigError(f"model.params: unknown parameter(s) {sorted(unknown)} for {name}")
    return name, builder(**params)


def h_axes(cfg, n=2):
    g = cfg["grids"]
    if g.get("h_axes") is not None:
        axes = [np.asarray(a, dtype=float) for a in g["h_axes"]]
    else:
        hg = g.get("h_grid") or {}
        lo = np.broadcast_to(np.asarray(hg.get("lower", 0.25), float), (n,))
        hi = np.broadcast_to(np.asarray(hg.get("upper", 2.0), float), (n,))
        pts = np.broadcast_to(np.asarray(hg.get("points", 8)), (n,))
        axes = [np.linspace(a, b, _int(k, "grids.h_grid.points")) for a, b, k in zip(lo, hi, pts)]
    if len(axes) != n or any(a.size < 2 or np.any(np.diff(a) <= 0) for a in axes):
        raise ConfigError(f"grids.h_axes must give {n} strictly increasing axes with >= 2 points")
    return axes


def finish(out, command, cfg, artifacts, extra=None):
    manifest = {"command": command, "config": cfg, "master_seed": cfg["master_seed"],
                "artifacts": sorted(str(Path(a).name) for a in artifacts)}
    manifest.update(extra or {})
    io.write_json(out / "manifest.json", manifest)


# ------------------------------------------------------------------ average

def averaged_table(cfg, threads):
    name, spec = build_model(cfg, allowed=("coupled_oscillators",))
    model = systems.coupled_oscillator_model(spec)
    g = cfg["grids"]
    M_w = _int(g.get("M_w", 32), "grids.M_w")
    M_phi = _int(g.get("M_phi", 8), "grids.M_phi")
    fd = float(g.get("fd_step", averaging.DEFAULT_FD_STEP))
    return averaging.averaged_coefficients(model, h_axes(cfg), M_w, M_phi, fd, threads=threads)


def read_coefficients(directory):
    directory = Path(directory)
    try:
        header, data = io.read_csv(directory / "coefficients.csv")
        meta = io.read_json(directory / "manifest.json")
    except OSError as exc:
        raise ConfigError(f"cannot read coefficient table in {directory}: {exc}") from None
    axes = [np.asarray(a, dtype=float) for a in meta["h_axes"]]
    n = len(axes)
    shape = tuple(a.size for a in axes)
    A = data[:, n: n + n * n].reshape(shape + (n, n))
    B = data[:, n + n * n:].reshape(shape + (n,))
    return averaging.AveragedCoefficients(axes, A, B, meta.get("coefficients", {}))


def cmd_average(cfg, stage):
    out = output_dir(cfg)
    stage("averaging")
    coeffs = averaged_table(cfg, cfg["threads"])
    stage("ellipticity")
    lam, where = averaging.check_uniform_ellipticity(coeffs)
    verdict = averaging.ellipticity_verdict(lam)
    stage("write artifacts")
    header, rows = averaging.coefficient_table(coeffs)
    csv = io.write_csv(out / "coefficients.csv", header, rows)
    ell = {"min_eigenvalue": lam, "location": where, "verdict": verdict, **coeffs.diagnostics()}
    rep = io.write_json(out / "ellipticity.json", ell)
    finish(out, "average", cfg, [csv, rep],
           {"h_axes": [a.tolist() for a in coeffs.h_axes], "coefficients": coeffs.metadata})
    print(f"coefficients: {csv}")
    print(f"ellipticity: {verdict} (min eigenvalue {lam:.6g} at h = {where.tolist()})")
    return 0


# ----------------------------------------------------------------- simulate

def _sim_config(cfg, eps=None, default_dt=None):
    s = cfg["simulation"]
    if eps is None and s.get("eps") is not None:
        eps = float(s["eps"])
    dt = s.get("dt")
    if dt is None:
        if default_dt is None:
            raise ConfigError("simulation.dt is required")
        dt = default_dt
    dt, T = float(dt), float(s.get("T", 1.0))
    record_dt = s.get("record_dt")
    record_dt = presets._aligned(T / 100, dt) if record_dt is None else float(record_dt)
    kw = {"dt": dt, "T": T, "n_paths": _int(s.get("n_paths", 1000), "simulation.n_paths"),
          "master_seed": _seed(cfg, 0), "record_dt": record_dt,
          "threads": _int(cfg["threads"], "threads")}
    if eps is not None:
        kw["eps"] = eps
    for key in ("c_sub", "h_floor", "scheme", "chunk_steps"):
        if s.get(key) is not None:
            kw[key] = s[key]
    return simulate.SimulationConfig(**kw)


def limit_generator(cfg, threads):
    gsec = cfg["simulation"].get("generator") or {}
    if gsec.get("coefficients"):
        return averaging.GeneratorSpec(read_coefficients(gsec["coefficients"]))
    if gsec.get("A") is not None:
        A = np.atleast_2d(np.asarray(gsec["A"], dtype=float))
        n = A.shape[0]
        B = gsec.get("B", [0.0] * n)
        bounds = gsec.get("bounds", [[-1e6, 1e6]] * n)
        if A.shape != (n, n) or len(B) != n or len(bounds) != n:
            raise ConfigError("simulation.generator: A must be n x n with n entries in B and bounds")
        return averaging.GeneratorSpec.constant(A, B, bounds)
    return averaging.GeneratorSpec(averaged_table(cfg, threads))


def variance_check(ens, gen, h0):
    """Sample mean and covariance at the final time against ``h0 + B T`` and
    ``A T`` (exact for constant coefficients)."""
    T = float(ens.times[-1])
    H = ens.H[:, -1]
    A, B = gen.coefficients(np.asarray(h0, dtype=float)[None])
    cov = np.atleast_2d(np.cov(H, rowvar=False))
    N = H.shape[0]
    var_se = np.sqrt(2.0 / (N - 1)) * np.diag(A[0]) * T
    return {"T": T, "n_paths": N, "mean": H.mean(axis=0), "expected_mean": np.asarray(h0) + B[0] * T,
            "covariance": cov, "expected_covariance": A[0] * T,
            "variance_z": (np.diag(cov) - np.diag(A[0]) * T) / np.where(var_se > 0, var_se, np.inf)}


def cmd_simulate(cfg, stage):
    out = output_dir(cfg)
    s = cfg["simulation"]
    artifacts, extra = [], {}
    if s.get("limit"):
        stage("limit coefficients")
        gen = limit_generator(cfg, cfg["threads"])
        h0 = s.get("h0", [1.0] * gen.n)
        stage("simulate limit diffusion")
        sc = _sim_config(cfg, default_dt=1e-3)
        ens = simulate.simulate_limit_diffusion(gen, sc, h0)
        stage("write artifacts")
        artifacts.append(io.write_ensemble(ens, out))
        if gen.coeffs.metadata.get("kind") == "constant":
            artifacts.append(io.write_json(out / "variance_check.json", variance_check(ens, gen, h0)))
        extra["out_of_grid"] = int(ens.flags["out_of_grid"].sum())
    else:
        stage("build model")
        name, obj = build_model(cfg)
        eps = float(s.get("eps", 0.1))
        c_step = float(s.get("c_step", 0.01))
        sc = _sim_config(cfg, eps=eps, default_dt=c_step * eps ** 2)
        stage("simulate " + name)
        if name == "coupled_oscillators":
            ens = simulate.simulate_fast_slow(systems.coupled_oscillator_model(obj), sc, s.get("h0", [1.0, 1.0]),
                                              s.get("phi0"), s.get("w0"))
            stage("write artifacts")
            artifacts.append(io.write_ensemble(ens, out))
            extra["floor_hits"] = int(np.sum(ens.flags.get("floor_hit", 0)))
        elif name == "landau_lifshitz":
            ens = simulate.simulate_landau_lifshitz(obj, sc, s.get("x0", [1.0, 0.0, 0.0]))
            stage("write artifacts")
            P, R, _ = ens.X.shape
            rows = np.column_stack([np.tile(ens.times, P), ens.X.reshape(-1, 3), ens.Gtilde.reshape(-1)])
            ids = np.repeat(np.arange(P), R)
            artifacts.append(io.write_csv(out / "ensemble.csv", ["path_id", "t", "x1", "x2", "x3", "G_avg"],
                                          ((int(i), *r) for i, r in zip(ids, rows))))
            extra["M_drift"] = ens.M_drift
        else:
            book = systems.build_openbook(obj.H2, classifier="sign")
            ens = simulate.simulate_openbook(obj, book, sc, s.get("x1_0", [1.0, 0.0]),
                                             s.get("x2_0", [0.0, 0.5]))
            stage("write artifacts")
            P, R, _ = ens.h.shape
            rows = np.column_stack([np.tile(ens.times, P), ens.h.reshape(-1, 2), ens.page.reshape(-1)])
            ids = np.repeat(np.arange(P), R)
            artifacts.append(io.write_csv(out / "ensemble.csv", ["path_id", "t", "h1", "h2", "page"],
                                          ((int(i), *r[:3], int(r[3])) for i, r in zip(ids, rows))))
            extra["binding_hits"] = int(ens.binding_hits.sum())
    finish(out, "simulate", cfg, artifacts, extra)
    print(f"ensemble: {artifacts[0]}")
    return 0


# ------------------------------------------------------------------ compare

def _load_ensemble(path):
    path = Path(path)
    if not (path / "ensemble.csv").exists() or not (path / "ensemble.manifest.json").exists():
        raise ConfigError(f"ensemble artifacts missing in {path}")
    return io.read_ensemble(path)


def cmd_compare(cfg, stage):
    out = output_dir(cfg)
    a = cfg["analysis"]
    if not a.get("ensembles") or not a.get("limit_ensemble"):
        raise ConfigError("analysis.ensembles and analysis.limit_ensemble are required")
    stage("load ensembles")
    ens = [_load_ensemble(p) for p in a["ensembles"]]
    limit = _load_ensemble(a["limit_ensemble"])
    n = limit.H.shape[-1]
    fs = analysis.standard_test_functions(n)
    if a.get("test_functions"):
        missing = [f for f in a["test_functions"] if f not in fs]
        if missing:
            raise ConfigError(f"analysis.test_functions: unknown {missing}; available {sorted(fs)}")
        fs = {k: fs[k] for k in a["test_functions"]}
    checkpoints = a.get("checkpoints") or [float(limit.times[-1])]
    stage("compare moments")
    rep = analysis.moment_compare(ens, limit, fs, checkpoints, float(a.get("slack", 1.0)))
    stage("write artifacts")
    js = io.write_json(out / "comparison.json", rep.to_json())
    txt = out / "comparison.txt"
    txt.write_text(rep.table() + "\n", encoding="utf-8")
    finish(out, "compare", cfg, [js, txt])
    print(rep.table())
    return 0


# ---------------------------------------------------------------- resonance

def frequency_map(cfg):
    sec = cfg["resonance"].get("omega") or {}
    kind = sec.get("kind", "constant" if "values" in sec else "model")
    if kind == "constant":
        if sec.get("values") is None:
            raise ConfigError("resonance.omega.values is required for kind 'constant'")
        return presets.constant_frequencies(sec["values"])
    if kind == "linear":
        base = np.asarray(sec.get("base"), dtype=float)
        slope = np.atleast_2d(np.asarray(sec.get("slope"), dtype=float))
        if base.ndim != 1 or slope.shape[0] != base.size:
            raise ConfigError("resonance.omega: 'slope' needs one row per entry of 'base'")
        return lambda H: base + np.asarray(H, dtype=float) @ slope.T
    if kind == "model":
        _, spec = build_model(cfg, allowed=("coupled_oscillators",))
        return lambda H: np.stack([spec.omega1(H[..., 0]), spec.omega2(H[..., 1])], axis=-1)
    raise ConfigError(f"resonance.omega.kind: unknown kind {kind!r} (constant, linear, model)")


def cmd_resonance(cfg, stage):
    out = output_dir(cfg)
    r = cfg["resonance"]
    stage("resonance scan")
    omega = frequency_map(cfg)
    region = r.get("region", [[0.25, 2.0], [0.25, 2.0]])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        scan = resonance.resonance_scan(omega, region, _int(r.get("K", 10), "resonance.K"),
                                        _int(r.get("grid", 32), "resonance.grid"),
                                        float(r.get("tol", 1e-12)), r.get("ks"))
    msgs = [str(w.message) for w in caught if issubclass(w.category, RuntimeWarning)]
    for m in msgs:
        print(f"warning: {m}", file=sys.stderr)
    stage("write artifacts")
    js = io.write_json(out / "resonance.json", {**scan.to_json(), "thin": scan.thin, "warnings": msgs})
    rows = [(*k, scan.fractions[k], len(scan.cells[k])) for k in sorted(scan.cells)]
    p = len(rows[0]) - 2 if rows else 0
    csv = io.write_csv(out / "resonance_fractions.csv",
                       [f"k{i + 1}" for i in range(p)] + ["fraction", "cells"], rows)
    finish(out, "resonance", cfg, [js, csv])
    print(f"resonant cells: {sum(len(c) for c in scan.cells.values())} "
          f"(fraction {scan.total_fraction:.6g} of {scan.grid}^{len(region)} cells)")
    return 0


# ----------------------------------------------------------------- openbook

def cmd_openbook(cfg, stage):
    out = output_dir(cfg)
    params = dict(cfg["openbook"])
    params.setdefault("seed", _seed(cfg, presets.OPENBOOK["seed"]))
    stage("open-book simulation")
    res = presets.openbook_splitting(params, threads=_int(cfg["threads"], "threads"))
    stage("write artifacts")
    rows = []
    for rep in res.data["reports"]:
        for k, c in rep["exit_counts"].items():
            f = rep["exit_frequencies"][k]
            rows.append((rep["start_distance"], int(k), *map(int, c), *f))
    csv = io.write_csv(out / "exit_frequencies.csv",
                       ["start_distance", "start_page", "n1", "n2", "n3", "p1", "p2", "p3"], rows)
    js = io.write_json(out / "gluing.json", {"checks": res.checks, "passed": res.passed, **res.data})
    finish(out, "openbook", cfg, [csv, js])
    print(res.summary())
    return 0


# ------------------------------------------------------------------ presets

def _options(cfg, fn, extra=()):
    opts = dict(cfg["preset"].get("options") or {})
    allowed = set(inspect.signature(fn).parameters) | set(extra)
    bad = set(opts) - allowed
    if bad:
        raise ConfigError(f"preset.options: unknown option(s) {sorted(bad)} for {cfg['preset']['name']}")
    return opts


def run_preset(name, cfg, stage):
    threads = _int(cfg["threads"], "threads")
    seed = None if cfg.get("master_seed") is None else _seed(cfg, None)

    def gen_from(opts):
        stage("limit coefficients")
        return presets.oscillator_generator(**(opts.pop("generator", None) or {}), threads=threads)[1]

    if name == "cell-problem-oracle":
        opts = _options(cfg, presets.cell_problem_oracle)
        if seed is not None:
            opts.setdefault("seed", seed)
        return presets.cell_problem_oracle(**opts)
    if name == "oscillator-coefficient-oracle":
        return presets.coefficient_oracle(**_options(cfg, presets.coefficient_oracle), threads=threads)
    if name == "small-action-asymptotics":
        return presets.small_action(**_options(cfg, presets.small_action))
    if name == "ellipticity":
        return presets.ellipticity(**_options(cfg, presets.ellipticity), threads=threads)
    if name == "resonance-scan":
        return presets.resonance_checks(**_options(cfg, presets.resonance_checks))
    if name == "openbook-splitting":
        params = dict(cfg["openbook"])
        if seed is not None:
            params.setdefault("seed", seed)
        stage("open-book simulation")
        return presets.openbook_splitting(params, threads=threads)
    if name == "occupation-time":
        opts = _options(cfg, presets.occupation, ("generator",))
        if seed is not None:
            opts.setdefault("seed", seed)
        gen = gen_from(opts)
        stage("occupation time")
        return presets.occupation(gen, **opts)
    if name == "inaccessibility":
        opts = _options(cfg, presets.inaccessibility, ("generator",))
        if seed is not None:
            opts.setdefault("seed", seed)
        gen = gen_from(opts)
        stage("inaccessibility")
        return presets.inaccessibility(gen, **opts)
    if name == "oscillator-weak-convergence":
        opts = _options(cfg, presets.weak_convergence_ensembles, ("generator",))
        if seed is not None:
            opts.setdefault("seed", seed)
        gen = gen_from(opts)
        stage("simulate ensembles")
        ens, limit, gen = presets.weak_convergence_ensembles(gen=gen, threads=threads, **opts)
        stage("compare moments")
        T = float(opts.get("T", 1.0))
        weak = presets.weak_convergence(ens, limit, T)
        mart = presets.martingale(ens, limit, gen, T)
        return presets.PresetResult(name, {**weak.checks, **mart.checks},
                                    {**weak.data, "martingale": mart.data})
    raise ConfigError(f"unknown preset {name!r}; choose one of {', '.join(presets.PRESETS)}")


def cmd_preset(command, cfg, stage):
    name = cfg["preset"]["name"]
    if name not in PRESET_COMMAND:
        raise ConfigError(f"preset.name: unknown preset {name!r}; choose one of {', '.join(PRESET_COMMAND)}")
    if PRESET_COMMAND[name] != command:
        raise ConfigError(f"preset {name!r} belongs to the {PRESET_COMMAND[name]!r} subcommand")
    out = output_dir(cfg)
    res = run_preset(name, cfg, stage)
    stage("write artifacts")
    js = io.write_json(out / f"{name}.json", {"name": name, "checks": res.checks, "passed": res.passed,
                                              "data": res.data})
    txt = out / f"{name}.txt"
    table = res.data.get("table")
    txt.write_text(res.summary() + ("\n" + table if table else "") + "\n", encoding="utf-8")
    finish(out, command, cfg, [js, txt], {"preset": name, "passed": res.passed})
    print(res.summary())
    return 0


COMMANDS = {"average": cmd_average, "simulate": cmd_simulate, "compare": cmd_compare,
            "resonance": cmd_resonance, "openbook": cmd_openbook}


# --------------------------------------------------------------------- main

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML or JSON run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", type=int, metavar="N", help="master seed (overrides config)")
    common.add_argument("--threads", type=int, metavar="N", help="worker threads (default: all cores)")
    common.add_argument("--preset", metavar="NAME", help="run a named acceptance preset")

    parser = argparse.ArgumentParser(prog="stochavg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("average", parents=[common], help="tabulate averaged coefficients")
    sim = sub.add_parser("simulate", parents=[common], help="simulate a path ensemble")
    sim.add_argument("--model", choices=systems.BUILTIN_MODELS)
    sim.add_argument("--eps", type=float)
    sim.add_argument("--dt", type=float)
    sim.add_argument("--T", type=float)
    sim.add_argument("--paths", type=int)
    sim.add_argument("--limit", action="store_true", help="simulate the limit diffusion instead")
    sub.add_parser("compare", parents=[common], help="compare finite-eps ensembles with the limit")
    sub.add_parser("resonance", parents=[common], help="scan for resonant cells")
    sub.add_parser("openbook", parents=[common], help="open-book splitting statistics")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    stage = Stage()
    try:
        stage("load config")
        cfg = resolve_config(args)
        if cfg["preset"].get("name"):
            return cmd_preset(args.command, cfg, stage)
        return COMMANDS[args.command](cfg, stage)
    except ConfigError as exc:
        print(f"stochavg {args.command}: configuration error ({stage.name}): {exc}", file=sys.stderr)
        return 2
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"stochavg {args.command}: numerical failure in stage '{stage.name}': {exc}", file=sys.stderr)
        return 3
    except (TypeError, ValueError) as exc:
        # malformed values inside the config surface here
        if stage.name in ("load config", "build model"):
            print(f"stochavg {args.command}: configuration error ({stage.name}): {exc}", file=sys.stderr)
            return 2
        print(f"stochavg {args.command}: failure in stage '{stage.name}': {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
