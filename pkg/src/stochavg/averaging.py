"""Effective coefficients of the slow motion.

Local coefficients at a slow point ``(h, phi)`` come from the corrector ``u``
of the slow field: ``A = mean_w(grad_w u_i . grad_w u_j)`` and
``B = mean_w(grad_x u_i . b)``.  Averaging over the angle torus gives the
generator of the limit diffusion.
"""
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import DomainError, FDStepInvalid, GridTooCoarse, ModelKindMismatch
from .systems import CoupledOscillatorSpec, SlowFastModel, action_angle_inverse
from .torus import (TorusFunction, TorusGrid, grad_w, poisson_1d_closed_form,
                    poisson_1d_closed_form_derivative, solve_poisson)

DEFAULT_FD_STEP = 1e-4
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class LocalCoefficients:
    A_tilde: np.ndarray
    B_tilde: np.ndarray
    evaluated_at: tuple
    residual_sup: float = 0.0


def _fd_steps(h, fd_step):
    # keep the stencil inside h > 0 for small positive actions
    h = np.asarray(h, dtype=float)
    return np.where((h > 0) & (h < 20 * fd_step), 0.05 * h, fd_step)


def _check_fd(fd_step):
    if not fd_step > 0:
        raise FDStepInvalid(f"fd_step must be positive, got {fd_step}")


def local_coefficients(model, h, phi, M_w=64, fd_step=DEFAULT_FD_STEP):
    """Corrector-based ``(A_tilde, B_tilde)`` at one slow point.

    Derivatives of the corrector in ``(h, phi)`` are central differences of
    the slow field; by linearity of the cell problem they are solved in the
    same FFT as the corrector itself.
    """
    _check_fd(fd_step)
    if M_w < 16:
        raise GridTooCoarse(f"M_w must be >= 16, got {M_w}")
    h = np.asarray(h, dtype=float).reshape(model.n)
    phi = np.asarray(phi, dtype=float).reshape(model.p)
    n, p = model.n, model.p
    grid = TorusGrid(model.m, M_w)
    w = grid.points

    def slow(hh, pp):
        return model.b(hh[None, :], pp[None, :], w)[:, :n]

    b_full = model.b(h[None, :], phi[None, :], w)
    fields = [b_full[:, :n]]
    steps_h = _fd_steps(h, fd_step)
    for k in range(n + p):
        dh, dp = np.zeros(n), np.zeros(p)
        if k < n:
            dh[k] = steps_h[k]
            step = steps_h[k]
        else:
            dp[k - n] = fd_step
            step = fd_step
        fields.append((slow(h + dh, phi + dp) - slow(h - dh, phi - dp)) / (2 * step))
    stacked = np.concatenate(fields, axis=1)
    g = TorusFunction(grid, stacked - stacked.mean(axis=0))
    sol, report = solve_poisson(g)
    u = sol.values[:, :n]
    du = sol.values[:, n:].reshape(grid.size, n + p, n)  # [s, direction, component]

    gu = grad_w(TorusFunction(grid, u))
    A = np.einsum("sim,sjm->ij", gu, gu) / grid.size
    A = 0.5 * (A + A.T)
    B = np.einsum("ski,sk->i", du, b_full) / grid.size
    return LocalCoefficients(A, B, (h.copy(), phi.copy()), report.residual_sup)


# ------------------------------------------- closed-form oscillator oracle

def _oscillator_spec(obj):
    if isinstance(obj, CoupledOscillatorSpec):
        return obj
    if isinstance(obj, SlowFastModel) and obj.kind == "coupled_oscillators":
        return obj.spec
    raise ModelKindMismatch(f"expected a coupled-oscillator model, got {getattr(obj, 'kind', type(obj).__name__)}")


def _circle_alpha(spec, i, h, phi, w):
    x = action_angle_inverse(h, phi)
    return spec.alpha(i, x[0][None, :], x[1][None, :], w)


def _slow_corrector_1d(spec, i, h, phi, grid, derivative=False):
    """``u_i1 = r_i (c_i U_i1 + s_i U_i2)`` on the i-th noise circle, built from
    the closed-form circle solution of each Cartesian component."""
    a = _circle_alpha(spec, i, h, phi, grid.axis)
    solve = poisson_1d_closed_form_derivative if derivative else poisson_1d_closed_form
    U = [solve(TorusFunction(grid, a[:, j]), subtract_mean=True).values for j in range(2)]
    r = np.sqrt(2.0 * h[i])
    c, s = np.cos(TWO_PI * phi[i]), np.sin(TWO_PI * phi[i])
    return r * (c * U[0] + s * U[1]), a, r, c, s


def coupled_oscillator_local_coefficients_closed(spec, h, phi, M=256, fd_step=DEFAULT_FD_STEP):
    """Independent oracle for :func:`local_coefficients` on oscillator pairs.

    Works oscillator by oscillator on a single noise circle: the diagonal of A
    is a 1-D integral of the squared corrector derivative, the off-diagonal is
    the product of two 1-D means, and B_i keeps only the terms driven by the
    i-th noise (the others integrate to zero against the other noise).
    """
    spec = _oscillator_spec(spec)
    _check_fd(fd_step)
    h = np.asarray(h, dtype=float)
    phi = np.asarray(phi, dtype=float)
    grid = TorusGrid(1, M)
    A = np.zeros((2, 2))
    means = []
    for i in range(2):
        du, *_ = _slow_corrector_1d(spec, i, h, phi, grid, derivative=True)
        A[i, i] = np.mean(du ** 2)
        means.append(np.mean(du))
    A[0, 1] = A[1, 0] = means[0] * means[1]

    B = np.zeros(2)
    steps_h = _fd_steps(h, fd_step)
    omega = (spec.omega1, spec.omega2)
    for i in range(2):
        _, a, r, c, s = _slow_corrector_1d(spec, i, h, phi, grid)
        beta_slow = r * (c * a[:, 0] + s * a[:, 1])
        beta_angle = omega[i](h[i]) + (-s * a[:, 0] + c * a[:, 1]) / (TWO_PI * r)
        dh = np.zeros(2)
        dh[i] = steps_h[i]
        du_dh = (_slow_corrector_1d(spec, i, h + dh, phi, grid)[0]
                 - _slow_corrector_1d(spec, i, h - dh, phi, grid)[0]) / (2 * steps_h[i])
        dp = np.zeros(2)
        dp[i] = fd_step
        du_dphi = (_slow_corrector_1d(spec, i, h, phi + dp, grid)[0]
                   - _slow_corrector_1d(spec, i, h, phi - dp, grid)[0]) / (2 * fd_step)
        B[i] = np.mean(du_dh * beta_slow + du_dphi * beta_angle)
    return LocalCoefficients(A, B, (h.copy(), phi.copy()))


# ----------------------------------------------------------- angle means

def angle_grid(p, M_phi):
    return TorusGrid(p, M_phi).points


def average_over_angles(model, h, M_w=64, M_phi=8, fd_step=DEFAULT_FD_STEP):
    """Uniform periodic quadrature of the local coefficients over the angles."""
    if M_phi < 8:
        raise GridTooCoarse(f"M_phi must be >= 8, got {M_phi}")
    A = np.zeros((model.n, model.n))
    B = np.zeros(model.n)
    phis = angle_grid(model.p, M_phi)
    for phi in phis:
        lc = local_coefficients(model, h, phi, M_w, fd_step)
        A += lc.A_tilde
        B += lc.B_tilde
    return A / len(phis), B / len(phis)


def _pool_map(fn, items, threads):
    threads = threads or os.cpu_count() or 1
    if threads == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # map keeps input order, so assembly does not depend on completion order
        return list(pool.map(fn, items))


@dataclass
class LocalCoefficientGrid:
    """Local coefficients on a product grid of slow points and angles."""

    points: np.ndarray   # (N, n + p) rows of (h, phi)
    A: np.ndarray        # (N, n, n)
    B: np.ndarray        # (N, n)


def local_coefficient_grid(model, h_points, phi_points, M_w=64, fd_step=DEFAULT_FD_STEP, threads=None):
    pts = [(np.asarray(h, float), np.asarray(f, float)) for h in h_points for f in phi_points]
    res = _pool_map(lambda hp: local_coefficients(model, hp[0], hp[1], M_w, fd_step), pts, threads)
    return LocalCoefficientGrid(
        points=np.array([np.concatenate(hp) for hp in pts]),
        A=np.array([r.A_tilde for r in res]),
        B=np.array([r.B_tilde for r in res]),
    )


@dataclass
class AveragedCoefficients:
    h_axes: list
    A_bar: np.ndarray    # grid shape + (n, n)
    B_bar: np.ndarray    # grid shape + (n,)
    metadata: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.h_axes)

    @property
    def points(self):
        mesh = np.meshgrid(*self.h_axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    @property
    def A(self):
        return self.A_bar.reshape(-1, self.n, self.n)

    @property
    def B(self):
        return self.B_bar.reshape(-1, self.n)

    def diagnostics(self):
        return {"sup_abs_A": float(np.abs(self.A_bar).max()),
                "sup_abs_B": float(np.abs(self.B_bar).max())}


def averaged_coefficients(model, h_axes, M_w=32, M_phi=8, fd_step=DEFAULT_FD_STEP, threads=None):
    """Tabulate the angle-averaged coefficients on the product grid ``h_axes``."""
    h_axes = [np.asarray(ax, dtype=float) for ax in h_axes]
    if len(h_axes) != model.n:
        raise ValueError(f"need {model.n} h axes, got {len(h_axes)}")
    pts = list(product(*h_axes))
    res = _pool_map(lambda h: average_over_angles(model, np.array(h), M_w, M_phi, fd_step), pts, threads)
    shape = tuple(len(ax) for ax in h_axes)
    A = np.array([r[0] for r in res]).reshape(shape + (model.n, model.n))
    B = np.array([r[1] for r in res]).reshape(shape + (model.n,))
    meta = {"model": model.name, "params": model.params, "M_w": M_w, "M_phi": M_phi,
            "fd_step": fd_step, "h_axes": [ax.tolist() for ax in h_axes]}
    return AveragedCoefficients(h_axes, A, B, meta)


def averaged_coefficient_function(model, M_w=32, M_phi=8, fd_step=DEFAULT_FD_STEP):
    """Callable ``h -> (A_bar, B_bar)`` evaluating the averages directly."""

    def fn(h):
        h = np.asarray(h, dtype=float)
        flat = h.reshape(-1, model.n)
        res = [average_over_angles(model, row, M_w, M_phi, fd_step) for row in flat]
        A = np.array([r[0] for r in res]).reshape(h.shape[:-1] + (model.n, model.n))
        B = np.array([r[1] for r in res]).reshape(h.shape[:-1] + (model.n,))
        return A, B

    return fn


# -------------------------------------------------------------- generator

def psd_sqrt(A):
    """Symmetric square root with eigenvalues floored at 0.

    Returns ``(root, clamp)`` where ``clamp`` is the largest magnitude of a
    negative eigenvalue that was raised to 0.
    """
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    ev, vec = np.linalg.eigh(A)
    clamp = float(np.max(-ev, initial=0.0))
    ev = np.maximum(ev, 0.0)
    root = np.einsum("...ik,...k,...jk->...ij", vec, np.sqrt(ev), vec)
    return root, clamp


class GeneratorSpec:
    """``L f = 1/2 sum A_ij d_ij f + sum B_i d_i f`` with coefficients
    interpolated multilinearly from an :class:`AveragedCoefficients` table.

    ``coefficients(h)`` works on batches ``(..., n)``; points outside the table
    are reported by ``inside``.
    """

    def __init__(self, coeffs):
        self.coeffs = coeffs
        self.n = coeffs.n
        n = self.n
        values = np.concatenate([coeffs.A_bar.reshape(coeffs.A_bar.shape[:-2] + (n * n,)),
                                 coeffs.B_bar], axis=-1)
        self._interp = RegularGridInterpolator(tuple(coeffs.h_axes), values, method="linear",
                                               bounds_error=False, fill_value=np.nan)
        self.lower = np.array([ax[0] for ax in coeffs.h_axes])
        self.upper = np.array([ax[-1] for ax in coeffs.h_axes])
        _, self.clamp = psd_sqrt(coeffs.A_bar)

    @property
    def clamped(self):
        return self.clamp > 0

    @classmethod
    def constant(cls, A, B, bounds):
        """Constant coefficients on the box ``bounds = [(lo, hi), ...]``."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_1d(np.asarray(B, dtype=float))
        axes = [np.array([lo, hi], dtype=float) for lo, hi in bounds]
        shape = (2,) * len(axes)
        return cls(AveragedCoefficients(axes, np.broadcast_to(A, shape + A.shape).copy(),
                                        np.broadcast_to(B, shape + B.shape).copy(),
                                        {"kind": "constant"}))

    @classmethod
    def from_function(cls, fn, h_axes, metadata=None):
        """Tabulate an explicit ``h -> (A, B)`` on a product grid."""
        axes = [np.asarray(ax, dtype=float) for ax in h_axes]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        A, B = fn(mesh)
        return cls(AveragedCoefficients(axes, np.asarray(A, float), np.asarray(B, float),
                                        dict(metadata or {"kind": "tabulated function"})))

    def inside(self, h):
        h = np.asarray(h, dtype=float)
        return np.all((h >= self.lower) & (h <= self.upper), axis=-1)

    def coefficients(self, h):
        h = np.asarray(h, dtype=float)
        v = self._interp(h.reshape(-1, self.n))
        n = self.n
        A = v[:, : n * n].reshape(h.shape[:-1] + (n, n))
        A = 0.5 * (A + np.swapaxes(A, -1, -2))
        B = v[:, n * n:].reshape(h.shape[:-1] + (n,))
        return A, B

    def apply(self, grad_f, hess_f, h):
        """``L f`` at ``h`` given the gradient ``(..., n)`` and Hessian ``(..., n, n)``."""
        A, B = self.coefficients(h)
        return 0.5 * np.einsum("...ij,...ij->...", A, hess_f) + np.einsum("...i,...i->...", B, grad_f)


# ------------------------------------------------------ structural checks

def check_uniform_ellipticity(coeffs):
    """Smallest eigenvalue of ``A`` over the sampled points and where it sits.

    ``coeffs`` is anything with ``A`` ``(N, n, n)`` and ``points`` ``(N, .)``.
    """
    ev = np.linalg.eigvalsh(coeffs.A)[:, 0]
    idx = int(np.argmin(ev))
    return float(ev[idx]), np.asarray(coeffs.points)[idx]


def ellipticity_verdict(min_eigenvalue, a_floor=1e-10):
    return "elliptic" if min_eigenvalue >= a_floor else "degenerate"


def small_action_asymptotics(model, h2, h1_samples, M_w=64, M_phi=8, M_circle=256,
                             fd_step=DEFAULT_FD_STEP):
    """Compare the small-action slope of ``A_bar_11`` with its direct value.

    ``D11_direct`` integrates the squared derivatives of both Cartesian
    correctors of oscillator 1 at ``x1 = 0``, averaged over the angle of
    oscillator 2.  ``D11_slope`` is the least-squares slope through the
    origin of ``A_bar_11(h1, h2)`` over ``h1_samples``.
    """
    spec = _oscillator_spec(model)
    if isinstance(model, CoupledOscillatorSpec):
        from .systems import coupled_oscillator_model
        model = coupled_oscillator_model(spec)
    h1 = np.asarray(h1_samples, dtype=float)
    if h1.size < 4 or np.any(h1 <= 0) or np.any(h1 > 0.25):
        raise ValueError("need at least 4 samples of h1 in (0, 0.25]")
    grid = TorusGrid(1, M_circle)
    vals = []
    for phi2 in np.arange(M_phi) / M_phi:
        x2 = action_angle_inverse(h2, phi2)[None, :]
        a = spec.alpha1(np.zeros((1, 2)), x2, grid.axis)
        vals.append(sum(np.mean(poisson_1d_closed_form_derivative(
            TorusFunction(grid, a[:, j]), subtract_mean=True).values ** 2) for j in range(2)))
    direct = float(np.mean(vals))
    abar = np.array([average_over_angles(model, np.array([x, h2]), M_w, M_phi, fd_step)[0][0, 0]
                     for x in h1])
    slope = float(np.dot(h1, abar) / np.dot(h1, h1))
    return direct, slope


@dataclass(frozen=True)
class InaccessibilityReport:
    axis: int
    h_samples: np.ndarray
    Lf: np.ndarray
    drift_margin: np.ndarray   # B_i - A_ii / (2 h_i)
    threshold: float

    @property
    def passed(self):
        below = self.h_samples <= self.threshold
        return bool(np.all(self.Lf[below] < 0))

    @property
    def hypothesis_holds(self):
        # B_i > A_ii / 2h_i - O(h^1/2): allow a margin of order sqrt(h)
        return bool(np.all(self.drift_margin > -np.sqrt(self.h_samples)))


def log_log_barrier(h):
    """``f(h) = ln(-ln h)`` with its first and second derivatives."""
    h = np.asarray(h, dtype=float)
    L = np.log(h)
    return np.log(-L), 1.0 / (h * L), -(L + 1.0) / (h * L) ** 2


def inaccessibility_certificate(coeff_fn, i, h_range, other=None, samples=9, threshold=None):
    """Evaluate ``L f`` for ``f = ln(-ln h_i)`` near the boundary ``h_i = 0``.

    ``coeff_fn(h)`` returns ``(A, B)`` for a batch of slow points (a
    :class:`GeneratorSpec` works through its ``coefficients`` method).  The
    samples are log-spaced over ``h_range``; ``other`` fixes the remaining
    coordinates.
    """
    lo, hi = h_range
    if not (0 < lo <= hi < np.exp(-1)):
        raise DomainError(f"h_range {h_range} must lie inside (0, 1/e)")
    if hasattr(coeff_fn, "coefficients"):
        coeff_fn = coeff_fn.coefficients
    hs = np.geomspace(lo, hi, samples)
    other = np.atleast_1d(np.asarray(other if other is not None else [], dtype=float))
    n = other.size + 1
    pts = np.zeros((samples, n))
    pts[:, i] = hs
    pts[:, [k for k in range(n) if k != i]] = other
    A, B = coeff_fn(pts)
    _, d1, d2 = log_log_barrier(hs)
    Aii, Bi = A[:, i, i], B[:, i]
    Lf = 0.5 * Aii * d2 + Bi * d1
    return InaccessibilityReport(i, hs, Lf, Bi - Aii / (2 * hs), hi if threshold is None else threshold)


# ------------------------------------------------------------------ export

def coefficient_table(coeffs):
    """Header and rows: ``h_1..h_n, A_ij row-major, B_i``."""
    n = coeffs.n
    header = [f"h{i + 1}" for i in range(n)]
    header += [f"A{i + 1}{j + 1}" for i in range(n) for j in range(n)]
    header += [f"B{i + 1}" for i in range(n)]
    rows = np.concatenate([coeffs.points, coeffs.A.reshape(-1, n * n), coeffs.B], axis=1)
    return header, rows
