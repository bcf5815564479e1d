"""Named end-to-end runs used by the acceptance suite and ``stochavg --preset``.

Each runner returns a :class:`PresetResult` whose ``checks`` map a short
label to a pass flag and whose ``data`` hold the numbers behind them.
"""
from dataclasses import dataclass, field

import numpy as np

from . import analysis, averaging, resonance, simulate, systems
from .torus import TorusFunction, TorusGrid, poisson_1d_closed_form, solve_poisson

TWO_PI = 2.0 * np.pi


@dataclass
class PresetResult:
    name: str
    checks: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(self.checks.values())

    def summary(self):
        lines = [f"[{'PASS' if self.passed else 'FAIL'}] {self.name}"]
        for k, v in self.checks.items():
            lines.append(f"    {'ok  ' if v else 'FAIL'} {k}")
        return "\n".join(lines)


# ------------------------------------------------------------ cell problem

def random_trig_polynomial(rng, degree=10):
    """Zero-mean real trigonometric polynomial of the given degree on the circle."""
    a = rng.normal(size=degree)
    b = rng.normal(size=degree)
    k = np.arange(1, degree + 1)

    def g(w):
        w = np.asarray(w, dtype=float)[..., None]
        return np.sum(a * np.cos(TWO_PI * k * w) + b * np.sin(TWO_PI * k * w), axis=-1)

    return g


def cell_problem_oracle(n_polys=20, M=256, seed=0):
    rng = np.random.default_rng(seed)
    grid = TorusGrid(1, M)
    worst_gap, worst_res = 0.0, 0.0
    for _ in range(n_polys):
        deg = int(rng.integers(1, 11))
        g = TorusFunction(grid, random_trig_polynomial(rng, deg)(grid.axis))
        u, rep = solve_poisson(g)
        uc = poisson_1d_closed_form(g)
        worst_gap = max(worst_gap, float(np.abs(u.values - uc.values).max()))
        worst_res = max(worst_res, rep.residual_sup)
    return PresetResult("cell-problem-oracle",
                        {"sup |spectral - closed form| <= 1e-6": worst_gap <= 1e-6,
                         "residual <= 1e-8": worst_res <= 1e-8},
                        {"max_gap": worst_gap, "max_residual": worst_res, "M": M, "n_polys": n_polys})


# ------------------------------------------------------- coefficient oracles

def oracle_spec():
    """x-dependent oscillator pair used to exercise the two coefficient pipelines."""
    return systems.trig_oscillator_spec(amplitudes=(1.0, 0.7), coupling=0.3)


def coefficient_oracle(M_w=64, M_circle=256, fd_step=1e-4, threads=None):
    spec = oracle_spec()
    model = systems.coupled_oscillator_model(spec)
    hs = np.linspace(0.25, 2.0, 5)
    phis = np.arange(4) / 4
    pts = [(np.array([a, b]), np.array([c, d])) for a in hs for b in hs for c in phis for d in phis]

    def one(hp):
        g = averaging.local_coefficients(model, hp[0], hp[1], M_w, fd_step)
        c = averaging.coupled_oscillator_local_coefficients_closed(spec, hp[0], hp[1], M_circle, fd_step)
        return (float(np.abs(g.A_tilde - c.A_tilde).max()), float(np.abs(g.B_tilde - c.B_tilde).max()),
                abs(float(g.A_tilde[0, 1])))

    res = np.array(averaging._pool_map(one, pts, threads))
    dA, dB, a12 = res.max(axis=0)
    return PresetResult("oscillator-coefficient-oracle",
                        {"generic vs closed A <= 1e-6": dA <= 1e-6,
                         "generic vs closed B <= 1e-6": dB <= 1e-6,
                         "A12 = 0 within 1e-8": a12 <= 1e-8},
                        {"max_dA": dA, "max_dB": dB, "max_abs_A12": a12, "points": len(pts),
                         "M_w": M_w, "M_circle": M_circle})


def independent_spec(amplitudes=(1.0, 1.0)):
    return systems.trig_oscillator_spec(amplitudes=amplitudes, coupling=0.0)


def small_action(h2=1.0, samples=(0.02, 0.05, 0.1, 0.2)):
    model = systems.coupled_oscillator_model(independent_spec())
    direct, slope = averaging.small_action_asymptotics(model, h2, samples)
    exact = 1.0 / np.pi ** 2
    return PresetResult("small-action-asymptotics",
                        {"slope within 5% of D11": abs(slope - direct) <= 0.05 * abs(direct),
                         "D11 matches 1/pi^2": abs(direct - exact) <= 1e-8},
                        {"D11_direct": direct, "D11_slope": slope, "exact": exact})


def ellipticity(M_w=32, threads=None):
    model = systems.coupled_oscillator_model(independent_spec())
    hs = np.linspace(0.5, 2.0, 5)
    h_points = [np.array([a, b]) for a in hs for b in hs]
    phis = averaging.angle_grid(2, 4)
    grid = averaging.local_coefficient_grid(model, h_points, phis, M_w, threads=threads)
    lam, where = averaging.check_uniform_ellipticity(grid)
    return PresetResult("ellipticity",
                        {"min eigenvalue >= 0.04": lam >= 0.04},
                        {"min_eigenvalue": lam, "location": where.tolist(), "analytic": 0.5 / np.pi ** 2})


# ------------------------------------------------------------ limit tables

def limit_h_axis():
    """Action axis from deep inside the boundary layer out to h = 8."""
    return np.concatenate([[1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 0.01, 0.03, 0.1, 0.2, 0.35],
                           np.linspace(0.5, 3.0, 6), [3.75, 5.0, 6.5, 8.0]])


def oscillator_generator(M_w=16, M_phi=8, threads=None):
    """Tabulated limit generator of the independent-noise oscillator pair."""
    model = systems.coupled_oscillator_model(independent_spec())
    axis = limit_h_axis()
    coeffs = averaging.averaged_coefficients(model, [axis, axis], M_w, M_phi, threads=threads)
    return model, averaging.GeneratorSpec(coeffs)


# --------------------------------------------------------- weak convergence

WEAK_LADDER = (0.2, 0.1, 0.05)


def weak_convergence_ensembles(n_paths=10_000, eps_ladder=WEAK_LADDER, T=1.0, c_step=0.01,
                               seed=2024, gen=None, threads=1, record_dt=0.01):
    """Finite-eps ensembles along the ladder plus a limit ensemble, all from
    ``h0 = (1, 1)``."""
    model, gen_ = oscillator_generator() if gen is None else (None, gen)
    model = model or systems.coupled_oscillator_model(independent_spec())
    h0 = np.array([1.0, 1.0])
    ens = []
    for j, eps in enumerate(eps_ladder):
        dt = c_step * eps ** 2
        cfg = simulate.SimulationConfig(eps=eps, dt=dt, T=T, n_paths=n_paths, master_seed=seed + 1 + j,
                                        record_dt=_aligned(record_dt, dt), threads=threads)
        ens.append(simulate.simulate_fast_slow(model, cfg, h0))
    lcfg = simulate.SimulationConfig(dt=1e-3, T=T, n_paths=n_paths, master_seed=seed,
                                     record_dt=record_dt, threads=threads)
    limit = simulate.simulate_limit_diffusion(gen_, lcfg, h0)
    return ens, limit, gen_


def _aligned(record_dt, dt):
    k = max(1, int(round(record_dt / dt)))
    return k * dt


def weak_convergence(ens, limit, T=1.0):
    fs = {k: v for k, v in analysis.standard_test_functions(2).items() if k in ("h1", "h1^2", "h1h2")}
    rep = analysis.moment_compare(ens, limit, fs, [T])
    checks = {}
    for (f, t), v in rep.trends.items():
        checks[f"{f}: ladder non-increasing (1 SE slack)"] = v["ladder_ok"]
        checks[f"{f}: smallest eps within 3 SE"] = v["final_ok"]
    return PresetResult("oscillator-weak-convergence", checks, {"report": rep.to_json(), "table": rep.table()})


def martingale(ens, limit, gen, T=1.0):
    f, g, H = analysis.quadratic_test_function(0, 2)
    ordered = sorted(ens, key=lambda e: -e.eps)
    res = [analysis.martingale_residual(e, gen, f, g, H, T) for e in ordered]
    self_res = analysis.martingale_residual(limit, gen, f, g, H, T)
    vals = [r.value for r in res]
    ses = [r.stderr for r in res]
    ladder_ok, _ = analysis.ladder_verdict(vals, ses, slack=1.0, final_z=np.inf)
    return PresetResult("martingale-residual",
                        {"|residual| decreasing along the ladder (1 SE slack)": ladder_ok,
                         "limit self-residual within 3 SE": abs(self_res.value) <= 3 * self_res.stderr},
                        {"eps": [e.eps for e in ordered], "residuals": vals, "stderr": ses,
                         "self_residual": self_res.value, "self_stderr": self_res.stderr})


# ------------------------------------------------------------- occupation

def bm_occupation(gammas=(0.05, 0.1, 0.2), lam=1.0, n_paths=10_000, T=6.0, dt=2e-3, seed=7, batch=2500):
    gen = averaging.GeneratorSpec.constant([[1.0]], [0.0], [(-100.0, 100.0)])
    per_gamma = {g: [] for g in gammas}
    for first in range(0, n_paths, batch):
        cfg = simulate.SimulationConfig(dt=dt, T=T, n_paths=min(batch, n_paths - first), master_seed=seed,
                                        record_dt=dt, first_path=first)
        ens = simulate.simulate_limit_diffusion(gen, cfg, [0.0])
        for g in gammas:
            ind = np.abs(ens.H[..., 0]) <= g
            f = ind * np.exp(-lam * ens.times)
            per_gamma[g].append(np.sum(0.5 * (f[:, 1:] + f[:, :-1]) * np.diff(ens.times), axis=1))
    rows, checks = [], {}
    for g in gammas:
        x = np.concatenate(per_gamma[g])
        est, se = analysis.mean_and_se(x)
        exact = float(resonance.bm_occupation_exact(g, lam))
        rows.append({"gamma": g, "estimate": est, "stderr": se, "exact": exact})
        checks[f"BM gamma={g}: within 3 SE of closed form"] = abs(est - exact) <= 3 * se
    return rows, checks


def oscillator_occupation(gen, gammas=(0.02, 0.05, 0.1, 0.2), lam=1.0, n_paths=4000, T=6.0, dt=1e-3,
                          seed=11, k=(1, -1)):
    spec = independent_spec()

    def omega(H):
        return np.stack([spec.omega1(H[..., 0]), spec.omega2(H[..., 1])], axis=-1)

    cfg = simulate.SimulationConfig(dt=dt, T=T, n_paths=n_paths, master_seed=seed, record_dt=0.01)
    ens = simulate.simulate_limit_diffusion(gen, cfg, [1.0, 1.0])
    pred = resonance.distance_to_resonance(omega, k)
    stopped = ens.stop_times[:, None] <= ens.times[None, :]
    est = [resonance.occupation_time(ens.times, ens.H, pred, g, lam, stopped=stopped) for g in gammas]
    fit = resonance.fit_linear(gammas, [e.value for e in est])
    return est, fit, int(ens.flags["out_of_grid"].sum())


def occupation(gen, n_paths=10_000, oscillator_paths=4000, seed=7):
    rows, checks = bm_occupation(n_paths=n_paths, seed=seed)
    est, fit, stopped = oscillator_occupation(gen, n_paths=oscillator_paths, seed=seed + 4)
    checks["oscillator: linear fit in gamma, R^2 >= 0.9"] = fit.r_squared >= 0.9
    return PresetResult("occupation-time", checks,
                        {"bm": rows, "oscillator": [e.__dict__ for e in est],
                         "fit": fit.__dict__, "stopped_paths": stopped})


# --------------------------------------------------------- inaccessibility

def inaccessibility(gen, n_paths=10_000, T=5.0, dt=1e-3, seed=5, level=1e-4):
    model = systems.coupled_oscillator_model(independent_spec())
    fn = averaging.averaged_coefficient_function(model, M_w=16, M_phi=8)
    rep = averaging.inaccessibility_certificate(fn, 0, (1e-4, 1e-2), other=[0.5], samples=9)
    cfg = simulate.SimulationConfig(dt=dt, T=T, n_paths=n_paths, master_seed=seed, record_dt=0.05)
    ens = simulate.simulate_limit_diffusion(gen, cfg, [0.5, 0.5])
    hit = ens.H_min[:, 0] < level
    frac = float(hit.mean())
    return PresetResult("inaccessibility",
                        {"Lf < 0 for f = ln(-ln h1) on [1e-4, 1e-2]": rep.passed,
                         f"no path reaches h1 < {level:g}": frac == 0.0},
                        {"h": rep.h_samples.tolist(), "Lf": rep.Lf.tolist(),
                         "drift_margin": rep.drift_margin.tolist(),
                         "hit_fraction": frac, "hits": int(hit.sum()), "n_paths": n_paths,
                         "min_h1": float(ens.H_min[:, 0].min())})


# --------------------------------------------------------------- open book

OPENBOOK = {"eps": 0.1, "sigma1": 1.0, "sigma2": 0.7, "window": 0.15, "c_step": 0.02, "T_max": 40.0,
            "paths_per_page": 2000, "distances": (0.1, 0.05, 0.02), "seed": 31}


def openbook_runs(params=None, threads=1):
    p = {**OPENBOOK, **(params or {})}
    system = systems.symmetric_double_well_system(p["sigma1"], p["sigma2"])
    book = systems.build_openbook(system.H2, classifier="sign")
    N = int(p["paths_per_page"])
    dt = p["c_step"] * p["eps"] ** 2
    reports = []
    for j, dist in enumerate(p["distances"]):
        seed = p["seed"] + j
        x2 = np.concatenate([simulate.openbook_starts(book, k, dist, seed, np.arange(N * (k - 1), N * k))
                             for k in (1, 2, 3)])
        cfg = simulate.SimulationConfig(eps=p["eps"], dt=dt, T=p["T_max"], n_paths=3 * N, master_seed=seed,
                                        record_dt=_aligned(0.5, dt), threads=threads)
        ens = simulate.simulate_openbook(system, book, cfg, [1.0, 0.0], x2, window=p["window"],
                                         random_w0=True)
        ens.config["start_distance"] = dist
        parts = simulate.split_by_start_page(ens)
        reports.append(analysis.gluing_splitting(parts, min_hits=int(p.get("min_hits", 500))))
    return reports, p


def openbook_splitting(params=None, threads=1):
    reports, p = openbook_runs(params, threads)
    stats = [r.page_independence for r in reports]
    checks = {}
    for r in reports:
        checks[f"delta_h={r.start_distance}: wells equal within 3 SE"] = abs(r.well_z) <= 3
        checks[f"delta_h={r.start_distance}: frequencies sum to 1"] = all(
            float(np.sum(f)) == 1.0 or abs(float(np.sum(f)) - 1.0) <= 1e-15 for f in r.exit_frequencies.values())
    checks["page-independence decreases as delta_h shrinks"] = all(
        stats[i + 1] < stats[i] for i in range(len(stats) - 1))
    return PresetResult("openbook-splitting", checks,
                        {"params": {k: list(v) if isinstance(v, tuple) else v for k, v in p.items()},
                         "reports": [r.to_json() for r in reports], "page_independence": stats})


# ---------------------------------------------------------------- resonance

def constant_frequencies(om):
    om = np.asarray(om, dtype=float)
    return lambda H: np.broadcast_to(om, np.shape(H)[:-1] + om.shape)


def linear_frequencies(H):
    H = np.asarray(H, dtype=float)
    return np.stack([np.ones(H.shape[:-1]), H[..., 0]], axis=-1)


def resonance_checks(grid=32):
    import warnings

    a = resonance.resonance_scan(constant_frequencies([1.0, np.sqrt(2.0)]), [(0, 1), (0, 1)], 10, grid)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        b = resonance.resonance_scan(constant_frequencies([1.0, 2.0]), [(0, 1), (0, 1)], 10, grid)
    warned = any(issubclass(w.category, RuntimeWarning) for w in caught)
    c1 = resonance.resonance_scan(linear_frequencies, [(0, 2)], 1, grid, ks=[(1, -1)])
    c2 = resonance.resonance_scan(linear_frequencies, [(0, 2)], 1, 2 * grid, ks=[(1, -1)])
    ratio = c2.total_fraction / c1.total_fraction
    return PresetResult("resonance-scan",
                        {"omega=(1, sqrt 2): no resonant cells": len(a.cells) == 0,
                         "omega=(1, 2): thinness 1.0": b.total_fraction == 1.0,
                         "omega=(1, 2): warning emitted": warned,
                         "omega=(1, h1): fraction halves (+-25%)": abs(ratio - 0.5) <= 0.125},
                        {"fraction_irrational": a.total_fraction, "fraction_rational": b.total_fraction,
                         "fraction_G": c1.total_fraction, "fraction_2G": c2.total_fraction, "ratio": ratio})


PRESETS = ("cell-problem-oracle", "oscillator-coefficient-oracle", "small-action-asymptotics",
           "ellipticity", "oscillator-weak-convergence", "occupation-time", "inaccessibility",
           "openbook-splitting", "resonance-scan")
