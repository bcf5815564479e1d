"""Calculus on the flat unit torus: quadrature means, spectral gradients and
the corrector (cell) problem ``0.5 * lap(u) = -g``.

Everything lives on a uniform periodic grid with ``M`` points per axis and
spacing ``1/M``; wavenumbers carry their ``2*pi`` factors explicitly.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import make_interp_spline

from .errors import DimensionMismatch, GridTooCoarse, MeanNotZero

DEFAULT_TOL_MEAN = 1e-10
# spline order and periodic padding for the closed-form cumulative integrals
_SPLINE_ORDER = 9
_PAD = 16


@dataclass(frozen=True)
class TorusGrid:
    m: int
    points_per_axis: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"torus dimension must be positive, got {self.m}")
        M = self.points_per_axis
        if M < 2 or M % 2:
            raise ValueError(f"points_per_axis must be even and >= 2, got {M}")

    @property
    def shape(self):
        return (self.points_per_axis,) * self.m

    @property
    def size(self):
        return self.points_per_axis ** self.m

    @property
    def spacing(self):
        return 1.0 / self.points_per_axis

    @cached_property
    def axis(self):
        return np.arange(self.points_per_axis) / self.points_per_axis

    @cached_property
    def points(self):
        """Grid coordinates, shape ``(M**m, m)``, C order (last axis fastest)."""
        mesh = np.meshgrid(*([self.axis] * self.m), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    @cached_property
    def wavenumbers(self):
        """Integer wavenumbers per axis, broadcastable to ``shape``."""
        k = np.fft.fftfreq(self.points_per_axis, d=1.0 / self.points_per_axis)
        out = []
        for ax in range(self.m):
            s = [1] * self.m
            s[ax] = -1
            out.append(k.reshape(s))
        return out

    @cached_property
    def k_squared(self):
        return sum(k ** 2 for k in self.wavenumbers)


class TorusFunction:
    """Scalar or vector field sampled on a :class:`TorusGrid`.

    ``values`` has shape ``(M**m,)`` for a scalar field or ``(M**m, d)`` for a
    field with ``d`` components.
    """

    def __init__(self, grid, values):
        values = np.asarray(values, dtype=float)
        if values.shape[0] != grid.size or values.ndim not in (1, 2):
            raise DimensionMismatch(
                f"values of shape {values.shape} do not fit a grid of {grid.size} points"
            )
        self.grid = grid
        self.values = values

    @classmethod
    def from_callable(cls, grid, fn):
        """Sample ``fn(w)`` where ``w`` has shape ``(M**m, m)``."""
        return cls(grid, fn(grid.points))

    @property
    def is_vector(self):
        return self.values.ndim == 2

    @property
    def components(self):
        return self.values.shape[1] if self.is_vector else 1

    def as_field(self):
        """Values reshaped to ``grid.shape`` (+ component axis if any)."""
        tail = (self.components,) if self.is_vector else ()
        return self.values.reshape(self.grid.shape + tail)

    def __repr__(self):
        return f"TorusFunction(m={self.grid.m}, M={self.grid.points_per_axis}, d={self.components})"


@dataclass(frozen=True)
class SpectralSolveReport:
    residual_sup: float
    mean_removed: float


def mean_over_torus(g):
    """Uniform periodic (trapezoidal) mean; spectrally accurate for smooth g."""
    return g.values.mean(axis=0)


def _fft_axes(grid):
    return tuple(range(grid.m))


def _check_mean(g, tol_mean, subtract_mean):
    mean = mean_over_torus(g)
    worst = float(np.max(np.abs(mean)))
    if worst > tol_mean and not subtract_mean:
        raise MeanNotZero(f"|mean| = {worst:.3e} exceeds tol_mean = {tol_mean:.1e}")
    return mean, worst


def solve_poisson(g, tol_mean=DEFAULT_TOL_MEAN, subtract_mean=False):
    """Zero-mean solution of ``0.5 * lap(u) = -(g - mean(g))``.

    Returns ``(u, report)``. Fourier mode ``k != 0`` of ``u`` is
    ``g_k / (2 pi^2 |k|^2)``; mode 0 is zero.
    """
    grid = g.grid
    if grid.points_per_axis < 4:
        raise GridTooCoarse(f"need at least 4 points per axis, got {grid.points_per_axis}")
    mean, worst = _check_mean(g, tol_mean, subtract_mean)
    field = g.as_field()
    axes = _fft_axes(grid)
    ksq = grid.k_squared
    if g.is_vector:
        ksq = ksq[..., None]
    ghat = np.fft.fftn(field, axes=axes)
    with np.errstate(divide="ignore", invalid="ignore"):
        uhat = ghat / (2.0 * np.pi ** 2 * ksq)
    uhat[(0,) * grid.m] = 0.0
    u = np.fft.ifftn(uhat, axes=axes).real
    # residual of 0.5*lap(u) + (g - mean) evaluated spectrally
    lap_half = np.fft.ifftn(-2.0 * np.pi ** 2 * ksq * uhat, axes=axes).real
    resid = lap_half + (field - mean)
    report = SpectralSolveReport(
        residual_sup=float(np.max(np.abs(resid))) if resid.size else 0.0,
        mean_removed=worst,
    )
    tail = (g.components,) if g.is_vector else ()
    return TorusFunction(grid, u.reshape((grid.size,) + tail)), report


def grad_w(u):
    """Spectral gradient. Scalar input gives ``d = m`` components; a vector
    input with ``d`` components gives shape ``(M**m, d, m)``.

    The unpaired Nyquist mode is dropped, as is standard for real fields.
    """
    grid = u.grid
    axes = _fft_axes(grid)
    field = u.as_field()
    uhat = np.fft.fftn(field, axes=axes)
    M = grid.points_per_axis
    grads = []
    for k in grid.wavenumbers:
        k = np.where(np.abs(k) == M // 2, 0.0, k)
        if u.is_vector:
            k = k[..., None]
        grads.append(np.fft.ifftn(2j * np.pi * k * uhat, axes=axes).real)
    out = np.stack(grads, axis=-1)
    if u.is_vector:
        return out.reshape(grid.size, u.components, grid.m)
    return TorusFunction(grid, out.reshape(grid.size, grid.m))


def _closed_form_moments(g, tol_mean, subtract_mean):
    grid = g.grid
    if grid.m != 1:
        raise DimensionMismatch(f"closed-form corrector needs a circle, got m = {grid.m}")
    if g.is_vector:
        raise DimensionMismatch("closed-form corrector takes a scalar function")
    mean, _ = _check_mean(g, tol_mean, subtract_mean)
    M = grid.points_per_axis
    vals = g.values - mean
    # high-order spline antiderivatives of v**k * g(v); g is padded
    # periodically so the ends of [0, 1] are interior to the spline
    j = np.arange(-_PAD, M + 1 + _PAD)
    v = j / M
    G = vals[j % M]
    w = grid.axis
    I = []
    for k in range(3):
        anti = make_interp_spline(v, v ** k * G, k=_SPLINE_ORDER).antiderivative()
        start, end = anti(0.0), anti(1.0)
        I.append((anti(w) - start, end - start))
    J = [total - Ik for Ik, total in I]
    I = [Ik for Ik, _ in I]
    return w, I, J


def poisson_1d_closed_form(g, tol_mean=DEFAULT_TOL_MEAN, subtract_mean=False):
    """Corrector on the unit circle from the explicit kernel representation

        u(w) = int_0^w (w - 1/2 - v)^2 g(v) dv + int_w^1 (w + 1/2 - v)^2 g(v) dv,

    with the integrals taken from degree-9 spline antiderivatives of the grid data.
    Independent of the FFT path in :func:`solve_poisson`.
    """
    w, I, J = _closed_form_moments(g, tol_mean, subtract_mean)
    a, b = w - 0.5, w + 0.5
    u = a ** 2 * I[0] - 2 * a * I[1] + I[2] + b ** 2 * J[0] - 2 * b * J[1] + J[2]
    return TorusFunction(g.grid, u)


def poisson_1d_closed_form_derivative(g, tol_mean=DEFAULT_TOL_MEAN, subtract_mean=False):
    """``u'(w) = -2 int_0^w (1/2 + v) g dv + 2 int_w^1 (1/2 - v) g dv``."""
    _, I, J = _closed_form_moments(g, tol_mean, subtract_mean)
    du = -(I[0] + 2 * I[1]) + (J[0] - 2 * J[1])
    return TorusFunction(g.grid, du)
