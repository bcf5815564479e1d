"""Resonance relations ``k . omega(h) = 0`` among the rotation frequencies,
thinness scans of the resonance set and occupation times of its
neighbourhoods."""
import warnings
from dataclasses import dataclass, field
from functools import reduce
from itertools import product
from math import gcd

import numpy as np

from .errors import PathsTooShort


def canonical(k):
    """gcd-reduced representative with first nonzero component positive."""
    k = [int(v) for v in k]
    g = reduce(gcd, (abs(v) for v in k))
    if g == 0:
        raise ValueError("resonance vector must be nonzero")
    k = [v // g for v in k]
    first = next(v for v in k if v)
    return tuple(-v for v in k) if first < 0 else tuple(k)


@dataclass(frozen=True)
class ResonanceVector:
    k: tuple
    K: int

    def __post_init__(self):
        object.__setattr__(self, "k", canonical(self.k))


def resonance_vectors(p, K):
    """All canonical ``k`` with ``max |k_j| <= K``, in lexicographic order."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    seen = set()
    for k in product(range(-K, K + 1), repeat=p):
        if any(k):
            seen.add(canonical(k))
    return sorted(seen)


def is_resonant(h, omega, K, tol=1e-12):
    """Return ``(min |k . omega(h)|, argmin k, resonant)`` over canonical k."""
    om = np.asarray(omega(np.asarray(h, dtype=float)), dtype=float)
    ks = np.array(resonance_vectors(om.size, K))
    vals = np.abs(ks @ om)
    i = int(np.argmin(vals))
    return float(vals[i]), tuple(int(v) for v in ks[i]), bool(vals[i] <= tol)


@dataclass
class ResonanceScan:
    region: list
    grid: int
    K: int
    cells: dict = field(default_factory=dict)       # k -> list of cell multi-indices
    fractions: dict = field(default_factory=dict)   # k -> fraction of cells hit
    total_fraction: float = 0.0

    @property
    def thin(self):
        return self.total_fraction < 1.0

    def to_json(self):
        return {
            "region": [list(map(float, r)) for r in self.region],
            "grid": self.grid, "K": self.K,
            "total_fraction": self.total_fraction,
            "per_k": [{"k": list(k), "fraction": self.fractions[k],
                       "cells": [list(c) for c in self.cells[k]]} for k in sorted(self.cells)],
        }


def resonance_scan(omega, region, K, grid=32, tol=1e-12, ks=None, warn=True):
    """Mark grid cells of ``region`` (list of ``(lo, hi)`` per slow axis) where
    ``k . omega`` changes sign across the cell corners or is within ``tol`` of 0
    at a corner.  Only k with at least one hit are listed."""
    if grid < 8:
        raise ValueError(f"grid must be >= 8, got {grid}")
    axes = [np.linspace(lo, hi, grid + 1) for lo, hi in region]
    n = len(axes)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    om = np.asarray(omega(mesh), dtype=float)
    p = om.shape[-1]
    ks = resonance_vectors(p, K) if ks is None else [canonical(k) for k in ks]
    scan = ResonanceScan(region=list(region), grid=grid, K=K)
    any_hit = np.zeros((grid,) * n, dtype=bool)
    for k in ks:
        val = om @ np.array(k, dtype=float)
        lo = np.full((grid,) * n, np.inf)
        hi = np.full((grid,) * n, -np.inf)
        for corner in product((0, 1), repeat=n):
            sl = tuple(slice(c, c + grid) for c in corner)
            lo = np.minimum(lo, val[sl])
            hi = np.maximum(hi, val[sl])
        # sign change across the corners, or a corner within tol of zero
        hit = (lo <= tol) & (hi >= -tol)
        if hit.any():
            scan.cells[k] = [tuple(int(i) for i in idx) for idx in np.argwhere(hit)]
            scan.fractions[k] = float(hit.mean())
            any_hit |= hit
    scan.total_fraction = float(any_hit.mean())
    if warn and scan.total_fraction >= 1.0:
        warnings.warn("every scanned cell is resonant: the resonance set is not thin", RuntimeWarning)
    return scan


# --------------------------------------------------------- occupation time

@dataclass(frozen=True)
class OccupationEstimate:
    value: float
    stderr: float
    gamma: float
    lam: float


def occupation_time(times, H, in_neighbourhood, gamma, lam, stopped=None):
    """Monte Carlo estimate of ``E int_0^inf exp(-lam s) 1{H(s) in N_gamma} ds``.

    ``H`` has shape ``(paths, steps, n)`` on the grid ``times``; the indicator
    ``in_neighbourhood(H, gamma)`` is integrated with the trapezoid rule.
    Requires ``exp(-lam T_end) <= 0.01`` so the truncated tail is negligible.
    """
    times = np.asarray(times, dtype=float)
    if np.exp(-lam * times[-1]) > 0.01:
        raise PathsTooShort(f"exp(-lam T) = {np.exp(-lam * times[-1]):.3g} > 0.01")
    ind = np.asarray(in_neighbourhood(H, gamma), dtype=float)
    if stopped is not None:
        ind = np.where(stopped, 0.0, ind)
    weights = np.exp(-lam * times)
    dt = np.diff(times)
    f = ind * weights
    per_path = np.sum(0.5 * (f[:, 1:] + f[:, :-1]) * dt, axis=1)
    n = per_path.size
    se = float(per_path.std(ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
    return OccupationEstimate(float(per_path.mean()), se, float(gamma), float(lam))


def bm_occupation_exact(gamma, lam):
    """Discounted occupation of ``[-gamma, gamma]`` by standard BM from 0."""
    return (1.0 - np.exp(-np.sqrt(2.0 * lam) * gamma)) / lam


def distance_to_resonance(omega, k):
    """Neighbourhood predicate ``|k . omega(h)| <= gamma`` for one canonical k."""
    k = np.asarray(canonical(k), dtype=float)

    def pred(H, gamma):
        return np.abs(np.asarray(omega(H)) @ k) <= gamma

    return pred


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float


def fit_linear(gammas, values):
    """Ordinary least squares ``value ~ C gamma + c0``; C is the bound constant."""
    x = np.asarray(gammas, dtype=float)
    y = np.asarray(values, dtype=float)
    C, c0 = np.polyfit(x, y, 1)
    resid = y - (C * x + c0)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return LinearFit(float(C), float(c0), float(r2))
