"""Statistical checks of the limit theorem: moment comparisons along an
eps-ladder, martingale residuals, marginal KS distances and open-book
splitting statistics."""
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import stats

from .errors import CheckpointMismatch, InsufficientHits


# ----------------------------------------------------------- test functions

def standard_test_functions(n):
    """``h_i``, ``h_i^2``, ``h_i h_j`` and ``exp(-|h|^2)`` keyed by name."""
    fs = {}
    for i in range(n):
        fs[f"h{i + 1}"] = lambda H, i=i: H[..., i]
        fs[f"h{i + 1}^2"] = lambda H, i=i: H[..., i] ** 2
    for i, j in combinations(range(n), 2):
        fs[f"h{i + 1}h{j + 1}"] = lambda H, i=i, j=j: H[..., i] * H[..., j]
    fs["exp(-|h|^2)"] = lambda H: np.exp(-np.sum(H ** 2, axis=-1))
    return fs


def mean_and_se(x):
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()), float("inf")
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))


# ---------------------------------------------------------- moment compare

@dataclass
class ComparisonReport:
    functions: list
    checkpoints: list
    eps_ladder: list
    rows: list = field(default_factory=list)   # one dict per (f, t, eps)
    trends: dict = field(default_factory=dict)  # (f, t) -> verdicts

    @property
    def passed(self):
        return all(v["ladder_ok"] and v["final_ok"] for v in self.trends.values())

    def to_json(self):
        return {
            "functions": self.functions, "checkpoints": self.checkpoints,
            "eps_ladder": self.eps_ladder, "rows": self.rows,
            "trends": [{"f": f, "t": t, **v} for (f, t), v in self.trends.items()],
            "passed": self.passed,
        }

    def table(self):
        lines = [f"{'f':>12} {'t':>6} {'eps':>8} {'finite':>12} {'limit':>12} {'diff':>11} {'pooled se':>10} {'z':>7}"]
        for r in self.rows:
            eps = "limit" if r["eps"] is None else f"{r['eps']:.4g}"
            lines.append(f"{r['f']:>12} {r['t']:6.3g} {eps:>8} {r['estimate']:12.6f} {r['limit']:12.6f} "
                         f"{r['diff']:11.3e} {r['pooled_se']:10.3e} {r['z']:7.2f}")
        for (f, t), v in self.trends.items():
            lines.append(f"{f} @ t={t:g}: ladder {'ok' if v['ladder_ok'] else 'FAIL'}, "
                         f"smallest eps {'ok' if v['final_ok'] else 'FAIL'}")
        return "\n".join(lines)


def _time_index(ens, t):
    i = int(np.argmin(np.abs(ens.times - t)))
    if abs(ens.times[i] - t) > 1e-9 * max(1.0, abs(t)):
        raise CheckpointMismatch(f"checkpoint t = {t} not recorded (eps = {ens.eps})")
    return i


def ladder_verdict(diffs, pooled, slack=1.0, final_z=3.0):
    """``|d_{k+1}| <= |d_k| + slack * max(se_k, se_{k+1})`` along the ladder
    (largest eps first) and ``|d_last| <= final_z * se_last``."""
    d = np.abs(np.asarray(diffs, dtype=float))
    se = np.asarray(pooled, dtype=float)
    ok = all(d[k + 1] <= d[k] + slack * max(se[k], se[k + 1]) for k in range(len(d) - 1))
    return bool(ok), bool(d[-1] <= final_z * se[-1])


def moment_compare(eps_ensembles, limit_ensemble, fs=None, t_checkpoints=(1.0,), slack=1.0):
    """Compare ``E f(H(t))`` of each ensemble with the limit ensemble."""
    ensembles = sorted(eps_ensembles, key=lambda e: -(e.eps or 0.0))
    n = limit_ensemble.H.shape[-1]
    fs = fs or standard_test_functions(n)
    h0 = np.asarray(limit_ensemble.H[:, 0])
    for e in ensembles:
        if e.H.shape[-1] != n or not np.allclose(e.H[:, 0].mean(axis=0), h0.mean(axis=0), atol=1e-12):
            raise CheckpointMismatch("ensembles do not share the initial point")
    report = ComparisonReport(list(fs), list(map(float, t_checkpoints)), [e.eps for e in ensembles])
    for name, f in fs.items():
        for t in t_checkpoints:
            lim, lim_se = mean_and_se(f(limit_ensemble.H[:, _time_index(limit_ensemble, t)]))
            diffs, pooled = [], []
            for e in ensembles:
                est, se = mean_and_se(f(e.H[:, _time_index(e, t)]))
                diff = est - lim
                ps = float(np.hypot(se, lim_se))
                z = diff / ps if ps > 0 else (0.0 if diff == 0 else float(np.sign(diff) * np.inf))
                report.rows.append({"f": name, "t": float(t), "eps": e.eps, "estimate": est, "se": se,
                                    "limit": lim, "limit_se": lim_se, "diff": diff,
                                    "pooled_se": ps, "z": z})
                diffs.append(diff)
                pooled.append(ps)
            ladder_ok, final_ok = ladder_verdict(diffs, pooled, slack)
            report.trends[(name, float(t))] = {"diffs": diffs, "pooled_se": pooled,
                                               "ladder_ok": ladder_ok, "final_ok": final_ok}
    return report


# ------------------------------------------------------ martingale residual

@dataclass(frozen=True)
class ResidualEstimate:
    value: float
    stderr: float
    excluded: int


def martingale_residual(ensemble, gen, f, grad_f, hess_f, t):
    """``E[f(H(t)) - f(H(0)) - int_0^t L f(H(s)) ds]`` with the time integral by
    the trapezoid rule on the recorded grid.  Paths that leave the coefficient
    table before ``t`` are excluded and counted."""
    k = _time_index(ensemble, t)
    H = ensemble.H[:, : k + 1]
    Lf = gen.apply(grad_f(H), hess_f(H), H)
    bad = ~np.all(np.isfinite(Lf), axis=1)
    if ensemble.stop_times is not None:
        flags = ensemble.flags.get("out_of_grid")
        if flags is not None:
            bad |= np.asarray(flags) & (ensemble.stop_times <= t)
    integral = np.trapezoid(np.where(bad[:, None], 0.0, Lf), ensemble.times[: k + 1], axis=1)
    per_path = f(H[:, -1]) - f(H[:, 0]) - integral
    kept = per_path[~bad]
    if kept.size == 0:
        return ResidualEstimate(float("nan"), float("inf"), int(bad.sum()))
    val, se = mean_and_se(kept)
    if np.all(kept == kept[0]):
        se = 0.0
    return ResidualEstimate(val, se, int(bad.sum()))


def quadratic_test_function(i, n):
    """``f = h_i^2`` with gradient and Hessian, for martingale residuals."""
    def f(H):
        return H[..., i] ** 2

    def grad(H):
        g = np.zeros_like(H)
        g[..., i] = 2 * H[..., i]
        return g

    def hess(H):
        out = np.zeros(H.shape + (n,))
        out[..., i, i] = 2.0
        return out

    return f, grad, hess


# ------------------------------------------------------------------ KS

def empirical_cdf_distance(samples_a, samples_b, i=None):
    """Two-sample Kolmogorov-Smirnov statistic of component ``i``."""
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if i is not None:
        a, b = a[..., i], b[..., i]
    if a.size == 0 or b.size == 0:
        raise ValueError("both sample sets must be non-empty")
    return float(stats.ks_2samp(a.ravel(), b.ravel()).statistic)


# ---------------------------------------------------------------- gluing

@dataclass
class GluingReport:
    window: float
    start_distance: float
    exit_counts: dict          # start page -> counts over pages 1, 2, 3
    exit_frequencies: dict     # start page -> frequencies over pages 1, 2, 3
    page_independence: float   # max pairwise total-variation distance
    post_hit_counts: np.ndarray
    post_hit_frequencies: np.ndarray
    gamma_hat: np.ndarray      # normalized so that gamma_3 = 1
    constraint_residual: float  # gamma_1 + gamma_2 - gamma_3
    well_z: float              # (p1 - p2) / se
    binding_hits: int
    split_counts: np.ndarray   # pages entered right after each crossing
    never_exited: int
    caveat: str = ("gamma estimates assume the vertex exit probabilities are proportional "
                   "to the gluing weights; they are estimates, not an identification")

    def to_json(self):
        return {
            "window": self.window, "start_distance": self.start_distance,
            "exit_counts": {str(k): v.tolist() for k, v in self.exit_counts.items()},
            "exit_frequencies": {str(k): v.tolist() for k, v in self.exit_frequencies.items()},
            "page_independence": self.page_independence,
            "post_hit_counts": self.post_hit_counts.tolist(),
            "post_hit_frequencies": self.post_hit_frequencies.tolist(),
            "gamma_hat": self.gamma_hat.tolist(),
            "constraint_residual": self.constraint_residual,
            "well_z": self.well_z, "binding_hits": self.binding_hits,
            "split_counts": self.split_counts.tolist(), "never_exited": self.never_exited,
            "caveat": self.caveat,
        }


def gluing_splitting(ensembles, min_hits=500):
    """Splitting statistics from open-book runs started on each page.

    ``ensembles`` maps start page (1, 2, 3) to an :class:`OpenBookEnsemble`
    simulated with an exit window.  For each start page the exit-page
    distribution is tabulated; the page-independence statistic is the largest
    total-variation distance between two start pages.  Paths that touched the
    binding before leaving are pooled to estimate the vertex exit
    probabilities ``p_k`` and ``gamma_k = p_k / p_3``.
    """
    counts, freqs = {}, {}
    post = np.zeros(3, dtype=int)
    never, hits = 0, 0
    split = np.zeros(3, dtype=int)
    window = start = None
    for k in sorted(ensembles):
        e = ensembles[k]
        window = e.config.get("window")
        start = e.config.get("start_distance", start)
        done = e.exit_page > 0
        never += int((~done).sum())
        c = np.array([np.sum(e.exit_page[done] == j) for j in (1, 2, 3)])
        counts[k] = c
        freqs[k] = c / c.sum() if c.sum() else np.full(3, np.nan)
        touched = done & e.hit_before_exit
        if touched.sum() < min_hits:
            raise InsufficientHits(f"start page {k}: {int(touched.sum())} binding visits < {min_hits}")
        post += np.array([np.sum(e.exit_page[touched] == j) for j in (1, 2, 3)])
        hits += int(e.binding_hits.sum())
        split += e.split_pages[:, 1:].sum(axis=0)
    tv = max((0.5 * float(np.abs(freqs[a] - freqs[b]).sum()) for a, b in combinations(freqs, 2)),
             default=0.0)
    N = post.sum()
    p = post / N
    gamma = p / p[2] if p[2] > 0 else np.full(3, np.nan)
    var = (p[0] + p[1] - (p[0] - p[1]) ** 2) / N
    well_z = float((p[0] - p[1]) / np.sqrt(var)) if var > 0 else 0.0
    return GluingReport(window, start, counts, freqs, tv, post, p, gamma,
                        float(gamma[0] + gamma[1] - gamma[2]), well_z, hits, split, never)
