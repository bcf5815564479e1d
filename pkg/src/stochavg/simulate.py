"""Path simulation: the fast-slow system in action-angle form, the limit
diffusion, stopped processes, the open-book projection and the
Landau-Lifshitz flow.

Every path owns a counter-based (Philox) stream derived from the master seed
and its index, and normals are drawn in fixed per-path chunks, so an ensemble
does not depend on how paths are batched across workers.
"""
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .averaging import psd_sqrt
from .errors import ConfigError, StepRuleViolation

DEFAULT_C_SUB = 0.1
DEFAULT_CHUNK = 256


@dataclass
class SimulationConfig:
    """``dt`` is the integration step (the micro step for fast-slow runs);
    states are recorded every ``record_dt``."""

    eps: float = 0.1
    dt: float = 1e-4
    T: float = 1.0
    n_paths: int = 1000
    master_seed: int = 0
    record_dt: float = None
    c_sub: float = DEFAULT_C_SUB
    h_floor: float = 1e-8
    scheme: str = "heun"
    chunk_steps: int = DEFAULT_CHUNK
    threads: int = 1
    first_path: int = 0

    def __post_init__(self):
        if self.dt <= 0 or self.T <= 0:
            raise ConfigError("dt and T must be positive")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be >= 1")
        if self.scheme not in ("heun", "euler"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.record_dt is None:
            self.record_dt = self.T / 100 if self.T / 100 >= self.dt else self.dt

    @property
    def n_steps(self):
        return _ratio(self.T, self.dt, "T / dt")

    @property
    def record_every(self):
        return _ratio(self.record_dt, self.dt, "record_dt / dt")

    def check_step_rule(self):
        limit = self.c_sub * self.eps ** 2
        if self.dt > limit * (1 + 1e-12):
            raise StepRuleViolation(
                f"substep rule dt <= c_sub * eps^2 violated: dt = {self.dt:g} > {limit:g} "
                f"(c_sub = {self.c_sub:g}, eps = {self.eps:g})"
            )

    def to_dict(self):
        return asdict(self)


def _ratio(a, b, what):
    r = a / b
    k = int(round(r))
    if k < 1 or abs(r - k) > 1e-9 * max(1.0, r):
        raise ConfigError(f"{what} = {r:g} must be a positive integer")
    return k


class PathNoise:
    """Standard normals for a block of paths, ``(paths, chunk, dim)`` at a time."""

    def __init__(self, master_seed, path_ids, dim, chunk_steps=DEFAULT_CHUNK):
        self.seqs = [np.random.SeedSequence(int(master_seed), spawn_key=(int(i),)) for i in path_ids]
        self.gens = [np.random.Generator(np.random.Philox(sq)) for sq in self.seqs]
        self.dim = dim
        self.chunk = chunk_steps
        self._buf = None
        self._pos = chunk_steps

    def next(self):
        if self._pos == self.chunk:
            self._buf = np.stack([g.standard_normal((self.chunk, self.dim)) for g in self.gens])
            self._pos = 0
        out = self._buf[:, self._pos]
        self._pos += 1
        return out

    def uniform(self, size, tag=1):
        """Uniforms from a separate stream per path (does not disturb normals)."""
        return np.stack([np.random.Generator(np.random.Philox(np.random.SeedSequence(
            sq.entropy, spawn_key=sq.spawn_key + (tag,)))).random(size) for sq in self.seqs])


def wrap(x):
    y = np.mod(x, 1.0)
    return np.where(y >= 1.0, 0.0, y)


@dataclass
class PathEnsemble:
    times: np.ndarray
    H: np.ndarray                 # (paths, records, n)
    Phi: np.ndarray = None        # (paths, records, p), wrapped
    W: np.ndarray = None          # (paths, records, m), wrapped
    eps: float = None
    master_seed: int = 0
    path_ids: np.ndarray = None
    stop_times: np.ndarray = None  # inf when never stopped
    flags: dict = field(default_factory=dict)
    H_min: np.ndarray = None      # running minimum over every integration step
    config: dict = field(default_factory=dict)

    @property
    def n_paths(self):
        return self.H.shape[0]

    def at(self, t):
        """States ``H`` at the recorded time nearest to ``t`` (must be on the grid)."""
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t = {t} is not a recorded time")
        return self.H[:, i]

    def seeds(self):
        return [(int(self.master_seed), int(i)) for i in self.path_ids]


def _split(n_paths, threads, first=0):
    threads = max(1, min(threads or os.cpu_count() or 1, n_paths))
    bounds = np.linspace(0, n_paths, threads + 1).astype(int)
    return [first + np.arange(bounds[i], bounds[i + 1]) for i in range(threads)]


def _run_batches(fn, config):
    batches = _split(config.n_paths, config.threads, config.first_path)
    if len(batches) == 1:
        return [fn(batches[0])]
    with ThreadPoolExecutor(max_workers=len(batches)) as pool:
        return list(pool.map(fn, batches))


def _concat(parts, key):
    vals = [p[key] for p in parts]
    return None if vals[0] is None else np.concatenate(vals)


# ------------------------------------------------------------ fast-slow

def simulate_fast_slow(model, config, h0, phi0=None, w0=None, stop_region=None):
    """Integrate ``dX = eps^-1 b(X, W) dt`` with ``W`` a Wiener process on the
    m-torus run at speed ``eps^-2``.

    The default Heun (trapezoidal) scheme treats the system as an ODE driven
    by the sampled noise path; ``scheme="euler"`` gives plain Euler steps.
    Paths whose action drops below ``h_floor`` or that leave ``stop_region``
    are frozen and flagged.
    """
    config.check_step_rule()
    n, p, m = model.n, model.p, model.m
    h0 = np.broadcast_to(np.asarray(h0, dtype=float), (n,))
    phi0 = np.zeros(p) if phi0 is None else np.broadcast_to(np.asarray(phi0, float), (p,))
    w0 = np.zeros(m) if w0 is None else np.broadcast_to(np.asarray(w0, float), (m,))
    steps, rec = config.n_steps, config.record_every
    n_rec = steps // rec + 1
    times = np.arange(n_rec) * rec * config.dt
    d = config.dt / config.eps
    sdw = math.sqrt(config.dt) / config.eps
    floor = config.h_floor
    heun = config.scheme == "heun"

    def batch(ids):
        P = ids.size
        noise = PathNoise(config.master_seed, ids, m, config.chunk_steps)
        h = np.tile(h0, (P, 1))
        phi = np.tile(phi0, (P, 1))
        w = np.tile(w0, (P, 1))
        active = np.ones(P, dtype=bool)
        floor_hit = np.zeros(P, dtype=bool)
        exited = np.zeros(P, dtype=bool)
        stop = np.full(P, np.inf)
        hmin = h.copy()
        out_h = np.empty((P, n_rec, n))
        out_phi = np.empty((P, n_rec, p))
        out_w = np.empty((P, n_rec, m))
        out_h[:, 0], out_phi[:, 0], out_w[:, 0] = h, wrap(phi), wrap(w)
        for s in range(1, steps + 1):
            dw = noise.next()
            k1 = model.b(h, phi, w)
            w_new = w + sdw * dw
            h_pred = h + d * k1[:, :n]
            phi_pred = phi + d * k1[:, n:]
            bad = np.zeros(P, dtype=bool)
            if heun:
                if floor is not None:
                    bad |= np.any(h_pred < floor, axis=1)
                    h_eval = np.maximum(h_pred, floor)
                else:
                    h_eval = h_pred
                k2 = model.b(h_eval, phi_pred, w_new)
                h_new = h + 0.5 * d * (k1[:, :n] + k2[:, :n])
                phi_new = phi + 0.5 * d * (k1[:, n:] + k2[:, n:])
            else:
                h_new, phi_new = h_pred, phi_pred
            if floor is not None:
                bad |= np.any(h_new < floor, axis=1)
            newly = active & bad
            if newly.any():
                floor_hit |= newly
                stop[newly] = s * config.dt
                hmin[newly] = np.minimum(hmin[newly], np.minimum(h_new[newly], h_pred[newly]))
            keep = active & ~bad
            if stop_region is not None:
                out = keep & ~np.asarray(stop_region(h_new), dtype=bool)
                if out.any():
                    exited |= out
                    stop[out] = s * config.dt
                    # the exit point itself is recorded, then the path freezes
                    h[out], phi[out], w[out] = h_new[out], phi_new[out], w_new[out]
                    keep &= ~out
            h = np.where(keep[:, None], h_new, h)
            phi = np.where(keep[:, None], phi_new, phi)
            w = np.where(keep[:, None], w_new, w)
            hmin = np.where(keep[:, None], np.minimum(hmin, h), hmin)
            active = keep
            if s % rec == 0:
                r = s // rec
                out_h[:, r], out_phi[:, r], out_w[:, r] = h, wrap(phi), wrap(w)
        return {"H": out_h, "Phi": out_phi, "W": out_w, "stop": stop, "floor": floor_hit,
                "exited": exited, "hmin": hmin}

    parts = _run_batches(batch, config)
    return PathEnsemble(
        times=times, H=_concat(parts, "H"), Phi=_concat(parts, "Phi"), W=_concat(parts, "W"),
        eps=config.eps, master_seed=config.master_seed, path_ids=config.first_path + np.arange(config.n_paths),
        stop_times=_concat(parts, "stop"),
        flags={"floor_hit": _concat(parts, "floor"), "exited": _concat(parts, "exited")},
        H_min=_concat(parts, "hmin"),
        config={**config.to_dict(), "model": model.name, "params": model.params,
                "h0": h0.tolist(), "phi0": phi0.tolist(), "w0": w0.tolist()},
    )


# ---------------------------------------------------------- limit diffusion

def simulate_limit_diffusion(gen, config, h0):
    """Euler-Maruyama for the generator ``gen``.

    ``H += B dt + sqrt(A) sqrt(dt) xi`` with the symmetric square root of the
    eigenvalue-floored ``A``.  Paths leaving the tabulated region are frozen
    at their last inside state and flagged ``out_of_grid``; ``H_min`` keeps
    the running minimum including the step that left.
    """
    n = gen.n
    h0 = np.broadcast_to(np.asarray(h0, dtype=float), (n,))
    if not gen.inside(h0):
        raise ConfigError(f"h0 = {h0.tolist()} lies outside the coefficient table")
    steps, rec = config.n_steps, config.record_every
    n_rec = steps // rec + 1
    times = np.arange(n_rec) * rec * config.dt
    sq = math.sqrt(config.dt)

    def batch(ids):
        P = ids.size
        noise = PathNoise(config.master_seed, ids, n, config.chunk_steps)
        h = np.tile(h0, (P, 1))
        active = np.ones(P, dtype=bool)
        oog = np.zeros(P, dtype=bool)
        stop = np.full(P, np.inf)
        hmin = h.copy()
        clamp = 0.0
        out_h = np.empty((P, n_rec, n))
        out_h[:, 0] = h
        for s in range(1, steps + 1):
            xi = noise.next()
            A, B = gen.coefficients(h)
            root, c = psd_sqrt(A)
            clamp = max(clamp, c)
            h_new = h + B * config.dt + sq * np.einsum("pij,pj->pi", root, xi)
            inside = gen.inside(h_new)
            hmin = np.where(active[:, None], np.minimum(hmin, h_new), hmin)
            newly = active & ~inside
            if newly.any():
                oog |= newly
                stop[newly] = s * config.dt
            active &= inside
            h = np.where(active[:, None], h_new, h)
            if s % rec == 0:
                out_h[:, s // rec] = h
        return {"H": out_h, "stop": stop, "oog": oog, "hmin": hmin, "clamp": clamp}

    parts = _run_batches(batch, config)
    return PathEnsemble(
        times=times, H=_concat(parts, "H"), eps=None, master_seed=config.master_seed,
        path_ids=config.first_path + np.arange(config.n_paths), stop_times=_concat(parts, "stop"),
        flags={"out_of_grid": _concat(parts, "oog"),
               "psd_clamp": max(p["clamp"] for p in parts) if parts else 0.0},
        H_min=_concat(parts, "hmin"),
        config={**config.to_dict(), "limit": True, "h0": h0.tolist(),
                "generator": gen.coeffs.metadata},
    )


# ------------------------------------------------------------- stopping

@dataclass(frozen=True)
class Box:
    """Axis-aligned region ``lower < h < upper``; faces are numbered
    ``2 * axis`` (lower) and ``2 * axis + 1`` (upper)."""

    lower: tuple
    upper: tuple

    def __call__(self, h):
        h = np.asarray(h, dtype=float)
        return np.all((h > np.asarray(self.lower)) & (h < np.asarray(self.upper)), axis=-1)

    def face(self, h):
        h = np.asarray(h, dtype=float)
        lo = h <= np.asarray(self.lower)
        hi = h >= np.asarray(self.upper)
        faces = np.full(h.shape[:-1], -1)
        for ax in reversed(range(h.shape[-1])):
            faces = np.where(hi[..., ax], 2 * ax + 1, faces)
            faces = np.where(lo[..., ax], 2 * ax, faces)
        return faces


def stop_at_exit(ensemble, region):
    """Freeze every path at its first recorded state outside ``region``.

    Returns a new ensemble whose ``stop_times`` are the exit times (``inf``
    when the path never leaves) and whose flags carry ``exit_face`` (-1 when
    not applicable).
    """
    inside = np.asarray(region(ensemble.H), dtype=bool)   # (paths, records)
    outside = ~inside
    left = outside.any(axis=1)
    first = np.where(left, outside.argmax(axis=1), ensemble.H.shape[1])
    idx = np.minimum(np.arange(ensemble.H.shape[1])[None, :], first[:, None])
    idx = np.minimum(idx, ensemble.H.shape[1] - 1)

    def freeze(a):
        return None if a is None else np.take_along_axis(a, idx[:, :, None], axis=1)

    tau = np.where(left, ensemble.times[np.minimum(first, ensemble.H.shape[1] - 1)], np.inf)
    face = np.full(ensemble.n_paths, -1)
    if hasattr(region, "face") and left.any():
        exit_pts = ensemble.H[np.arange(ensemble.n_paths), np.minimum(first, ensemble.H.shape[1] - 1)]
        face = np.where(left, region.face(exit_pts), -1)
    prior = ensemble.stop_times if ensemble.stop_times is not None else np.full(ensemble.n_paths, np.inf)
    return PathEnsemble(
        times=ensemble.times, H=freeze(ensemble.H), Phi=freeze(ensemble.Phi), W=freeze(ensemble.W),
        eps=ensemble.eps, master_seed=ensemble.master_seed, path_ids=ensemble.path_ids,
        stop_times=np.minimum(tau, prior),
        flags={**ensemble.flags, "exit_face": face, "exited": left},
        H_min=ensemble.H_min, config={**ensemble.config, "stopped_at_exit": True},
    )


# ------------------------------------------------------------- open book

@dataclass
class OpenBookEnsemble:
    """Projected open-book paths.

    ``h`` is ``(paths, records, 2)`` with ``(h1, h2)``; ``page`` is
    ``(paths, records)``.  When an exit window is set, each path also carries
    whether it touched the binding before leaving the window and the page it
    left on.
    """

    times: np.ndarray
    h: np.ndarray
    page: np.ndarray
    binding_hits: np.ndarray      # number of binding crossings per path
    first_hit_time: np.ndarray    # inf when never
    start_page: np.ndarray
    exit_page: np.ndarray = None  # 0 when the path never left the window
    exit_time: np.ndarray = None
    hit_before_exit: np.ndarray = None
    split_pages: np.ndarray = None  # (paths, 4) counts of the page entered after each crossing
    eps: float = None
    config: dict = field(default_factory=dict)

    @property
    def n_paths(self):
        return self.h.shape[0]


def double_well_start(book, page, distance):
    """A point of the H2 level ``h_c -+ distance`` on the outer part of the
    requested page (on the line through the minima)."""
    level = book.binding_level + (distance if page == 3 else -distance)
    axis = book.minima[0] - book.minima[1]
    axis = axis / np.linalg.norm(axis)
    centre = book.minima[0] if page in (1, 3) else book.minima[1]
    direction = axis if page in (1, 3) else -axis
    # bisection on the ray from the well minimum outwards
    lo, hi = 0.0, 1.0
    while book.H2.value(centre + hi * direction) < level:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if book.H2.value(centre + mid * direction) < level:
            lo = mid
        else:
            hi = mid
    return centre + 0.5 * (lo + hi) * direction


def orbit_period_samples(H, x_start, fractions, rtol=1e-10):
    """Points of the unperturbed orbit through ``x_start`` at the given fractions
    of its period, i.e. samples of the time-uniform (invariant) law on the
    level set.  Returns ``(points, period)``."""
    from scipy.integrate import solve_ivp

    x_start = np.asarray(x_start, dtype=float)

    def rhs(_, x):
        g = H.grad(x)
        return [-g[1], g[0]]

    def back(_, x):
        # crossing the starting ray in the direction of motion
        v = np.asarray(rhs(0, x_start))
        return float(np.dot(x - x_start, v))

    back.direction = 1.0
    back.terminal = True
    # leave the start before looking for the return crossing
    first = solve_ivp(rhs, (0, 1e-3), x_start, rtol=rtol, atol=1e-12)
    t0 = 1e-3
    sol = solve_ivp(rhs, (t0, 1e4), first.y[:, -1], events=back, dense_output=True,
                    rtol=rtol, atol=1e-12)
    period = float(sol.t_events[0][0])
    fractions = np.asarray(fractions, dtype=float)
    t = fractions * period
    pts = np.empty(fractions.shape + (2,))
    early = t < t0
    if early.any():
        pts[early] = solve_ivp(rhs, (0, t0), x_start, dense_output=True, rtol=rtol,
                               atol=1e-12).sol(t[early]).T
    if (~early).any():
        pts[~early] = sol.sol(t[~early]).T
    return pts, period


def openbook_starts(book, page, distance, master_seed, path_ids):
    """Per-path starting points on the level ``|h2 - h_c| = distance`` of a page,
    spread uniformly in time along the unperturbed orbit."""
    anchor = double_well_start(book, page, distance)
    u = path_uniforms(master_seed, path_ids, 1, tag=2)[:, 0]
    pts, _ = orbit_period_samples(book.H2, anchor, u)
    return pts


def path_uniforms(master_seed, path_ids, size, tag):
    """Per-path uniforms from the stream ``(master_seed, (path_id, tag))``."""
    return np.stack([np.random.Generator(np.random.Philox(np.random.SeedSequence(
        int(master_seed), spawn_key=(int(i), int(tag))))).random(size) for i in path_ids])


def simulate_openbook(system, book, config, x1_0, x2_0, window=None, stop_on_exit=True,
                      random_w0=False):
    """Cartesian simulation of the two planar systems, projected on the book.

    ``x2_0`` may be ``(2,)`` or per-path ``(paths, 2)``.  With ``window`` set,
    a path leaves the window once ``|h2 - h_c| >= window``; its page at that
    moment is the exit page, and with ``stop_on_exit`` the path freezes.
    Binding crossings are detected from sign changes of ``h2 - h_c`` between
    integration steps.
    """
    config.check_step_rule()
    steps, rec = config.n_steps, config.record_every
    n_rec = steps // rec + 1
    times = np.arange(n_rec) * rec * config.dt
    d = config.dt / config.eps
    sdw = math.sqrt(config.dt) / config.eps
    hc = book.binding_level
    heun = config.scheme == "heun"
    x1_0 = np.asarray(x1_0, dtype=float)
    x2_0 = np.asarray(x2_0, dtype=float)

    def batch(ids):
        P = ids.size
        noise = PathNoise(config.master_seed, ids, 2, config.chunk_steps)
        x1 = np.broadcast_to(x1_0, (P, 2)).copy()
        x2 = (x2_0[ids - config.first_path] if x2_0.ndim == 2 else np.broadcast_to(x2_0, (P, 2))).copy()
        w = noise.uniform(2) if random_w0 else np.zeros((P, 2))
        pages, h2 = book.region(x2)
        start = pages.copy()
        side = np.sign(h2 - hc)
        hits = np.zeros(P, dtype=int)
        first_hit = np.full(P, np.inf)
        split = np.zeros((P, 4), dtype=int)
        exit_page = np.zeros(P, dtype=int)
        exit_time = np.full(P, np.inf)
        hit_before = np.zeros(P, dtype=bool)
        active = np.ones(P, dtype=bool)
        out_h = np.empty((P, n_rec, 2))
        out_k = np.empty((P, n_rec), dtype=int)
        out_h[:, 0] = np.stack([system.H1.value(x1), h2], axis=-1)
        out_k[:, 0] = pages
        for s in range(1, steps + 1):
            dw = noise.next()
            f1, f2 = system.field(x1, x2, w)
            w_new = w + sdw * dw
            p1, p2 = x1 + d * f1, x2 + d * f2
            if heun:
                g1, g2 = system.field(p1, p2, w_new)
                n1 = x1 + 0.5 * d * (f1 + g1)
                n2 = x2 + 0.5 * d * (f2 + g2)
            else:
                n1, n2 = p1, p2
            x1 = np.where(active[:, None], n1, x1)
            x2 = np.where(active[:, None], n2, x2)
            w = np.where(active[:, None], w_new, w)
            new_pages, h2 = book.region(x2)
            new_side = np.sign(h2 - hc)
            crossed = active & (new_side != side) & (new_side != 0)
            if crossed.any():
                hits += crossed
                first_hit = np.where(crossed & np.isinf(first_hit), s * config.dt, first_hit)
                np.add.at(split, (np.flatnonzero(crossed), new_pages[crossed]), 1)
            side = np.where(new_side != 0, new_side, side)
            pages = np.where(active, new_pages, pages)
            if window is not None:
                left = active & (np.abs(h2 - hc) >= window)
                if left.any():
                    exit_page[left] = pages[left]
                    exit_time[left] = s * config.dt
                    hit_before[left] = hits[left] > 0
                    if stop_on_exit:
                        active &= ~left
            if s % rec == 0:
                r = s // rec
                out_h[:, r] = np.stack([system.H1.value(x1), book.H2.value(x2)], axis=-1)
                out_k[:, r] = pages
            if window is not None and stop_on_exit and not active.any():
                out_h[:, s // rec + 1:] = out_h[:, s // rec][:, None]
                out_k[:, s // rec + 1:] = out_k[:, s // rec][:, None]
                break
        return {"h": out_h, "k": out_k, "hits": hits, "first": first_hit, "start": start,
                "exit_page": exit_page, "exit_time": exit_time, "hit_before": hit_before,
                "split": split}

    parts = _run_batches(batch, config)
    return OpenBookEnsemble(
        times=times, h=_concat(parts, "h"), page=_concat(parts, "k"),
        binding_hits=_concat(parts, "hits"), first_hit_time=_concat(parts, "first"),
        start_page=_concat(parts, "start"),
        exit_page=_concat(parts, "exit_page") if window is not None else None,
        exit_time=_concat(parts, "exit_time") if window is not None else None,
        hit_before_exit=_concat(parts, "hit_before") if window is not None else None,
        split_pages=_concat(parts, "split"), eps=config.eps,
        config={**config.to_dict(), "window": window, "system": system.params},
    )


def split_by_start_page(ens):
    """One sub-ensemble per starting page."""
    out = {}
    for k in np.unique(ens.start_page):
        sel = ens.start_page == k
        kw = {}
        for name in ("times", "eps", "config"):
            kw[name] = getattr(ens, name)
        for name in ("h", "page", "binding_hits", "first_hit_time", "start_page", "exit_page",
                     "exit_time", "hit_before_exit", "split_pages"):
            v = getattr(ens, name)
            kw[name] = None if v is None else v[sel]
        out[int(k)] = OpenBookEnsemble(**kw)
    return out


# -------------------------------------------------------- Landau-Lifshitz

@dataclass
class SphereEnsemble:
    times: np.ndarray
    X: np.ndarray        # (paths, records, 3)
    Gtilde: np.ndarray   # (paths, records)
    M_drift: float       # max | |x|^2/2 - z1 | over all steps
    eps: float = None
    config: dict = field(default_factory=dict)


def simulate_landau_lifshitz(spec, config, x0):
    """Heun steps of ``dx/dt = eps^-1 x cross grad G(x, W)`` followed by radial
    projection onto ``|x|^2 = 2 z1``, so ``M(x)`` is kept to roundoff."""
    config.check_step_rule()
    steps, rec = config.n_steps, config.record_every
    n_rec = steps // rec + 1
    times = np.arange(n_rec) * rec * config.dt
    d = config.dt / config.eps
    sdw = math.sqrt(config.dt) / config.eps
    radius = math.sqrt(2 * spec.z1)
    x0 = np.asarray(x0, dtype=float)
    x0 = radius * x0 / np.linalg.norm(x0)

    def project(x):
        return radius * x / np.linalg.norm(x, axis=-1, keepdims=True)

    def batch(ids):
        P = ids.size
        noise = PathNoise(config.master_seed, ids, 1, config.chunk_steps)
        x = np.tile(x0, (P, 1))
        w = np.zeros(P)
        drift = 0.0
        out = np.empty((P, n_rec, 3))
        out[:, 0] = x
        for s in range(1, steps + 1):
            w_new = w + sdw * noise.next()[:, 0]
            k1 = np.cross(x, spec.grad_G(x, w))
            xp = x + d * k1
            if config.scheme == "heun":
                k2 = np.cross(xp, spec.grad_G(xp, w_new))
                xp = x + 0.5 * d * (k1 + k2)
            x = project(xp)
            w = w_new
            drift = max(drift, float(np.max(np.abs(0.5 * np.sum(x * x, axis=-1) - spec.z1))))
            if s % rec == 0:
                out[:, s // rec] = x
        return {"X": out, "drift": drift}

    parts = _run_batches(batch, config)
    X = _concat(parts, "X")
    return SphereEnsemble(times, X, spec.Gtilde(X), max(p["drift"] for p in parts), config.eps,
                          {**config.to_dict(), "spec": spec.params})
