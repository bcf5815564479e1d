import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochavg.errors import DimensionMismatch, GridTooCoarse, MeanNotZero
from stochavg.torus import (TorusFunction, TorusGrid, grad_w, mean_over_torus, poisson_1d_closed_form,
                            poisson_1d_closed_form_derivative, solve_poisson)

TWO_PI = 2 * np.pi


def fn(grid, f):
    return TorusFunction.from_callable(grid, f)


def half_laplacian(u):
    """Independent finite-difference-free check: second spectral derivative via
    two applications of the gradient."""
    g = grad_w(u)
    second = sum(grad_w(TorusFunction(u.grid, g.values[:, j])).values[:, j] for j in range(u.grid.m))
    return 0.5 * second


# ----------------------------------------------------------------- means

def test_mean_of_constant():
    g = fn(TorusGrid(2, 8), lambda w: np.full(len(w), 2.5))
    assert mean_over_torus(g) == pytest.approx(2.5, abs=1e-15)


def test_mean_of_cosine_vanishes():
    g = fn(TorusGrid(1, 64), lambda w: np.cos(TWO_PI * w[:, 0]))
    assert abs(mean_over_torus(g)) <= 1e-14


def test_mean_of_product_plus_constant():
    g = fn(TorusGrid(2, 32), lambda w: np.sin(TWO_PI * w[:, 0]) * np.cos(TWO_PI * w[:, 1]) + 3)
    # product quadrature oracle: both factors integrate to zero
    assert mean_over_torus(g) == pytest.approx(3.0, abs=1e-12)


# --------------------------------------------------------------- Poisson

def test_zero_source_gives_zero_solution():
    u, rep = solve_poisson(fn(TorusGrid(2, 16), lambda w: np.zeros(len(w))))
    assert np.all(u.values == 0) and rep.residual_sup == 0


def test_single_mode_on_circle():
    grid = TorusGrid(1, 64)
    u, rep = solve_poisson(fn(grid, lambda w: np.cos(TWO_PI * w[:, 0])))
    exact = np.cos(TWO_PI * grid.axis) / (2 * np.pi ** 2)
    assert np.abs(u.values - exact).max() <= 1e-14
    assert rep.residual_sup <= 1e-12


def test_two_modes_on_two_torus():
    grid = TorusGrid(2, 32)
    u, _ = solve_poisson(fn(grid, lambda w: np.sin(TWO_PI * w[:, 0]) + np.cos(4 * np.pi * w[:, 1])))
    w = grid.points
    exact = np.sin(TWO_PI * w[:, 0]) / (2 * np.pi ** 2) + np.cos(4 * np.pi * w[:, 1]) / (8 * np.pi ** 2)
    assert np.abs(u.values - exact).max() <= 1e-14


def test_solution_satisfies_equation_by_independent_derivative():
    grid = TorusGrid(2, 32)
    g = fn(grid, lambda w: np.sin(TWO_PI * (w[:, 0] + 2 * w[:, 1])) + 0.3 * np.cos(6 * np.pi * w[:, 0]))
    u, _ = solve_poisson(g)
    assert np.abs(half_laplacian(u) + g.values).max() <= 1e-10


def test_vector_source_solved_componentwise():
    grid = TorusGrid(1, 32)
    vals = np.stack([np.cos(TWO_PI * grid.axis), np.sin(4 * np.pi * grid.axis)], axis=1)
    u, _ = solve_poisson(TorusFunction(grid, vals))
    assert np.allclose(u.values[:, 0], vals[:, 0] / (2 * np.pi ** 2), atol=1e-14)
    assert np.allclose(u.values[:, 1], vals[:, 1] / (8 * np.pi ** 2), atol=1e-14)


def test_nonzero_mean_rejected():
    with pytest.raises(MeanNotZero):
        solve_poisson(fn(TorusGrid(1, 16), lambda w: 1 + np.cos(TWO_PI * w[:, 0])))


def test_nonzero_mean_subtracted_on_request():
    grid = TorusGrid(1, 16)
    u, rep = solve_poisson(fn(grid, lambda w: 1 + np.cos(TWO_PI * w[:, 0])), subtract_mean=True)
    assert rep.mean_removed == pytest.approx(1.0)
    assert np.allclose(u.values, np.cos(TWO_PI * grid.axis) / (2 * np.pi ** 2), atol=1e-14)


def test_too_coarse_grid_rejected():
    with pytest.raises(GridTooCoarse):
        solve_poisson(fn(TorusGrid(1, 2), lambda w: np.zeros(len(w))))


def test_bad_values_shape():
    with pytest.raises(DimensionMismatch):
        TorusFunction(TorusGrid(1, 8), np.zeros(7))


# ---------------------------------------------------- closed form on circle

def test_closed_form_zero():
    u = poisson_1d_closed_form(fn(TorusGrid(1, 64), lambda w: np.zeros(len(w))))
    assert np.abs(u.values).max() == 0


def test_closed_form_cosine():
    grid = TorusGrid(1, 256)
    u = poisson_1d_closed_form(fn(grid, lambda w: np.cos(TWO_PI * w[:, 0])))
    assert np.abs(u.values - np.cos(TWO_PI * grid.axis) / (2 * np.pi ** 2)).max() <= 1e-8


def test_closed_form_derivative_of_sine_corrector():
    grid = TorusGrid(1, 256)
    du = poisson_1d_closed_form_derivative(fn(grid, lambda w: np.sin(TWO_PI * w[:, 0])))
    assert np.abs(du.values - np.cos(TWO_PI * grid.axis) / np.pi).max() <= 1e-8


def test_closed_form_needs_circle():
    with pytest.raises(DimensionMismatch):
        poisson_1d_closed_form(fn(TorusGrid(2, 8), lambda w: np.zeros(len(w))))


# ------------------------------------------------------------- gradients

def test_gradient_of_constant():
    g = grad_w(fn(TorusGrid(2, 8), lambda w: np.full(len(w), 4.0)))
    assert np.abs(g.values).max() <= 1e-14


def test_gradient_of_corrector():
    grid = TorusGrid(1, 64)
    g = grad_w(fn(grid, lambda w: np.cos(TWO_PI * w[:, 0]) / (2 * np.pi ** 2)))
    assert np.abs(g.values[:, 0] + np.sin(TWO_PI * grid.axis) / np.pi).max() <= 1e-14


def test_gradient_on_two_torus():
    grid = TorusGrid(2, 16)
    g = grad_w(fn(grid, lambda w: np.sin(TWO_PI * w[:, 0])))
    w = grid.points
    assert np.abs(g.values[:, 0] - TWO_PI * np.cos(TWO_PI * w[:, 0])).max() <= 1e-12
    assert np.abs(g.values[:, 1]).max() <= 1e-12


def test_gradient_of_vector_field_shape():
    grid = TorusGrid(2, 8)
    out = grad_w(TorusFunction(grid, np.zeros((grid.size, 3))))
    assert out.shape == (grid.size, 3, 2)


# ------------------------------------------------------------ properties

coeffs = st.lists(st.floats(-3, 3, allow_nan=False), min_size=8, max_size=8)


def trig(grid, c):
    w = grid.points
    k = [(1, 0), (0, 1), (1, 1), (2, -1)] if grid.m == 2 else [(1,), (2,), (3,), (5,)]
    out = np.zeros(grid.size)
    for j, kk in enumerate(k):
        phase = TWO_PI * (w @ np.array(kk, dtype=float))
        out += c[2 * j] * np.cos(phase) + c[2 * j + 1] * np.sin(phase)
    return TorusFunction(grid, out)


@settings(max_examples=30, deadline=None)
@given(c=coeffs, m=st.sampled_from([1, 2]))
def test_residual_and_mean_of_solution(c, m):
    g = trig(TorusGrid(m, 32), c)
    u, rep = solve_poisson(g, tol_mean=1e-9)
    assert rep.residual_sup <= 1e-8
    assert abs(mean_over_torus(u)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(c1=coeffs, c2=coeffs, a=st.floats(-5, 5), b=st.floats(-5, 5))
def test_solver_is_linear(c1, c2, a, b):
    grid = TorusGrid(2, 16)
    g1, g2 = trig(grid, c1), trig(grid, c2)
    lhs, _ = solve_poisson(TorusFunction(grid, a * g1.values + b * g2.values), tol_mean=1e-8)
    u1, _ = solve_poisson(g1, tol_mean=1e-9)
    u2, _ = solve_poisson(g2, tol_mean=1e-9)
    assert np.abs(lhs.values - (a * u1.values + b * u2.values)).max() <= 1e-10


@settings(max_examples=20, deadline=None)
@given(c=coeffs)
def test_spectral_and_closed_form_agree(c):
    g = trig(TorusGrid(1, 256), c)
    u, _ = solve_poisson(g, tol_mean=1e-9)
    uc = poisson_1d_closed_form(g, tol_mean=1e-9)
    assert np.abs(u.values - uc.values).max() <= 1e-6
