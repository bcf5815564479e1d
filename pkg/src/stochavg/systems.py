"""Model definitions: the generic fast-slow field in action-angle form and
the concrete systems (coupled oscillators, double-well open book,
Landau-Lifshitz magnetization).

Field callbacks are vectorized: every argument carries arbitrary leading
batch dimensions and the trailing axis holds components.
"""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage

from .errors import CriticalPointCountMismatch, OnSeparatrix, OriginSingularity
from .torus import TorusGrid

TWO_PI = 2.0 * np.pi
DEFAULT_H_FLOOR = 1e-8


@dataclass(frozen=True)
class SlowFastModel:
    """``dX = eps^-1 b(h, phi, w) dt`` with slow ``h`` (n), angles ``phi`` (p)
    and noise ``w`` on the m-torus.

    ``b(h, phi, w)`` returns ``(..., n + p)``: slow part first, angle part
    second.  ``omega(h)`` returns the ``(..., p)`` rotation frequencies (in
    turns per unit time), which must equal the w-mean of the angle part.
    """

    n: int
    p: int
    m: int
    b: Callable
    omega: Callable
    name: str = "model"
    params: dict = field(default_factory=dict)
    kind: str = "generic"
    spec: object = None

    def slow(self, h, phi, w):
        return self.b(h, phi, w)[..., : self.n]

    def angle(self, h, phi, w):
        return self.b(h, phi, w)[..., self.n:]


# ---------------------------------------------------------------- charts

def action_angle_forward(x, h_floor=DEFAULT_H_FLOOR):
    """Planar point(s) ``(..., 2)`` -> ``(h, phi)`` with ``h = |x|^2 / 2`` and
    ``phi`` the polar angle in turns, wrapped to ``[0, 1)``."""
    x = np.asarray(x, dtype=float)
    r = np.hypot(x[..., 0], x[..., 1])
    if np.any(r <= h_floor):
        raise OriginSingularity(f"|x| <= h_floor = {h_floor:g}: action-angle chart undefined")
    h = 0.5 * r ** 2
    phi = np.mod(np.arctan2(x[..., 1], x[..., 0]) / TWO_PI, 1.0)
    # mod can return exactly 1.0 for tiny negative angles
    phi = np.where(phi >= 1.0, 0.0, phi)
    return h, phi


def action_angle_inverse(h, phi):
    r = np.sqrt(2.0 * np.asarray(h, dtype=float))
    a = TWO_PI * np.asarray(phi, dtype=float)
    return np.stack([r * np.cos(a), r * np.sin(a)], axis=-1)


# ---------------------------------------------------- coupled oscillators

@dataclass(frozen=True)
class CoupledOscillatorSpec:
    """Two planar oscillators perturbed by independent circle noises.

    ``omega1``, ``omega2`` map action to frequency (turns per unit time).
    ``alpha1(x1, x2, w1)`` and ``alpha2(x1, x2, w2)`` return the Cartesian
    perturbation ``(..., 2)`` of each oscillator; they must have zero mean in
    their own noise variable.
    """

    omega1: Callable
    omega2: Callable
    alpha1: Callable
    alpha2: Callable
    params: dict = field(default_factory=dict)
    x_independent: bool = False

    def alpha(self, i, x1, x2, w):
        return (self.alpha1 if i == 0 else self.alpha2)(x1, x2, w)

    def check(self, samples=16, M=64, tol=1e-10, h_range=(0.25, 2.0), seed=0):
        """Return ``(max |mean_w alpha|, min Gram determinant)`` over samples.

        The Gram determinant of ``(alpha_i1, alpha_i2)`` in L2 of the circle is
        positive iff the two components are linearly independent.
        """
        rng = np.random.default_rng(seed)
        w = np.arange(M) / M
        worst_mean, min_det = 0.0, np.inf
        for _ in range(samples):
            h = rng.uniform(*h_range, size=2)
            phi = rng.uniform(size=2)
            x = action_angle_inverse(h, phi)
            for i in range(2):
                a = self.alpha(i, x[0][None, :], x[1][None, :], w)
                worst_mean = max(worst_mean, float(np.abs(a.mean(axis=0)).max()))
                gram = a.T @ a / M
                min_det = min(min_det, float(np.linalg.det(gram)))
        for i, om in enumerate((self.omega1, self.omega2)):
            if np.any(om(np.linspace(0.0, h_range[1], 32)) <= 0):
                raise ValueError(f"omega{i + 1} must be strictly positive")
        return worst_mean, min_det


def linear_frequency(base, slope):
    return lambda h: base + slope * np.asarray(h, dtype=float)


def trig_oscillator_spec(amplitudes=(1.0, 1.0), coupling=0.0,
                         omega_base=(1.0, np.sqrt(2.0)), omega_slope=(0.5, 0.25)):
    """Trigonometric perturbation used by the presets.

    ``alpha_i = a_i * (cos 2 pi w_i + k x_j1 sin 4 pi w_i,
                       sin 2 pi w_i + k x_i1 cos 4 pi w_i)``

    where ``j`` is the other oscillator and ``k`` the coupling.  With
    ``coupling = 0`` the perturbation does not depend on x and all averaged
    coefficients are known in closed form: ``A_ii = a_i^2 h_i / pi^2``,
    ``B_i = a_i^2 / (2 pi^2)``.
    """
    a1, a2 = (float(a) for a in amplitudes)
    k = float(coupling)

    def make(amp, own, other):
        def alpha(x1, x2, w):
            xs = (x1, x2)
            w = np.asarray(w, dtype=float)
            c1, s1 = np.cos(TWO_PI * w), np.sin(TWO_PI * w)
            if k == 0.0:
                comp1, comp2 = c1, s1
            else:
                # double-angle forms of sin/cos(4 pi w)
                comp1 = c1 + k * xs[other][..., 0] * (2 * s1 * c1)
                comp2 = s1 + k * xs[own][..., 0] * (c1 * c1 - s1 * s1)
            return amp * np.stack(np.broadcast_arrays(comp1, comp2), axis=-1)
        return alpha

    params = {
        "amplitudes": [a1, a2], "coupling": k,
        "omega_base": [float(b) for b in omega_base],
        "omega_slope": [float(s) for s in omega_slope],
    }
    return CoupledOscillatorSpec(
        omega1=linear_frequency(omega_base[0], omega_slope[0]),
        omega2=linear_frequency(omega_base[1], omega_slope[1]),
        alpha1=make(a1, 0, 1),
        alpha2=make(a2, 1, 0),
        params=params,
        x_independent=(k == 0.0),
    )


def oscillator_frames(h, phi):
    """Radius and rotation (cos, sin) per oscillator; ``h`` is ``(..., 2)``."""
    h = np.asarray(h, dtype=float)
    if np.any(h <= 0):
        raise OriginSingularity("action h_i <= 0 in the coupled-oscillator chart")
    r = np.sqrt(2.0 * h)
    a = TWO_PI * np.asarray(phi, dtype=float)
    return r, np.cos(a), np.sin(a)


def coupled_oscillator_model(spec, check=True):
    """Action-angle form of the perturbed oscillator pair.

    Slow components ``beta_i1 = r_i (c_i alpha_i1 + s_i alpha_i2)`` and angle
    components ``omega_i + beta_i2`` with
    ``beta_i2 = (-s_i alpha_i1 + c_i alpha_i2) / (2 pi r_i)``, where
    ``r_i = sqrt(2 h_i)`` and ``(c_i, s_i)`` is the rotation by ``2 pi phi_i``.
    The ``1/(2 pi)`` comes from measuring angles in turns.
    """
    if check:
        # linear independence of alpha_i1, alpha_i2 is what ellipticity needs;
        # degenerate specs are still valid models, so only the mean is enforced
        worst, _ = spec.check()
        if worst > 1e-8:
            raise ValueError(f"alpha has nonzero noise mean ({worst:.2e})")

    def omega(h):
        h = np.asarray(h, dtype=float)
        return np.stack([spec.omega1(h[..., 0]), spec.omega2(h[..., 1])], axis=-1)

    def b(h, phi, w):
        r, c, s = oscillator_frames(h, phi)
        x = r[..., None] * np.stack([c, s], axis=-1)
        x1, x2 = x[..., 0, :], x[..., 1, :]
        w = np.asarray(w, dtype=float)
        slow, ang = [], []
        for i in range(2):
            a = spec.alpha(i, x1, x2, w[..., i])
            slow.append(r[..., i] * (c[..., i] * a[..., 0] + s[..., i] * a[..., 1]))
            ang.append((-s[..., i] * a[..., 0] + c[..., i] * a[..., 1]) / (TWO_PI * r[..., i]))
        om = omega(h)
        out = np.stack(np.broadcast_arrays(slow[0], slow[1], om[..., 0] + ang[0],
                                           om[..., 1] + ang[1]), axis=-1)
        return out

    return SlowFastModel(n=2, p=2, m=2, b=b, omega=omega, name="coupled_oscillators",
                         params=dict(spec.params), kind="coupled_oscillators", spec=spec)


def coupled_oscillator_cartesian_field(spec):
    """Cartesian right-hand side ``(x1, x2, w) -> (dx1, dx2)`` of the
    oscillator pair, unperturbed part ``2 pi omega_i(|x_i|^2/2) (-x_i2, x_i1)``."""

    def field_(x1, x2, w):
        out = []
        for i, (xi, om) in enumerate(((x1, spec.omega1), (x2, spec.omega2))):
            hi = 0.5 * np.sum(xi ** 2, axis=-1)
            rot = TWO_PI * om(hi)[..., None] * np.stack([-xi[..., 1], xi[..., 0]], axis=-1)
            out.append(rot + spec.alpha(i, x1, x2, w[..., i]))
        return out[0], out[1]

    return field_


# ------------------------------------------------------------ validation

@dataclass(frozen=True)
class ValidationReport:
    max_slow_mean: float
    max_angle_deviation: float
    tol: float
    samples: int
    worst_point: tuple

    @property
    def passed(self):
        return self.max_slow_mean <= self.tol and self.max_angle_deviation <= self.tol


def validate_model(model, sample_count=16, M=128, tol=1e-8, h_range=(0.25, 2.0), seed=0):
    """Check on an ``M``-point noise grid that the slow field has zero w-mean
    and the angle field has w-mean ``omega(h)`` at random ``(h, phi)``."""
    grid = TorusGrid(model.m, M)
    w = grid.points
    rng = np.random.default_rng(seed)
    worst_slow, worst_ang, where = 0.0, 0.0, None
    for _ in range(sample_count):
        h = rng.uniform(*h_range, size=model.n)
        phi = rng.uniform(size=model.p)
        vals = model.b(h[None, :], phi[None, :], w)
        # subtract omega before averaging so an unperturbed model gives exactly 0
        ds = float(np.abs(vals[:, : model.n].mean(axis=0)).max()) if model.n else 0.0
        da = float(np.abs((vals[:, model.n:] - model.omega(h)).mean(axis=0)).max()) if model.p else 0.0
        if ds + da > worst_slow + worst_ang:
            where = (h.tolist(), phi.tolist())
        worst_slow, worst_ang = max(worst_slow, ds), max(worst_ang, da)
    return ValidationReport(worst_slow, worst_ang, tol, sample_count, where)


# ------------------------------------------------------------- open book

@dataclass(frozen=True)
class Hamiltonian:
    value: Callable
    grad: Callable
    hess: Callable
    name: str = "H"


def double_well_hamiltonian(a=1.0):
    """``H(x) = (x1^2 - a^2)^2 / 4 + x2^2 / 2``: minima at ``(+-a, 0)``,
    saddle at the origin with value ``a^4 / 4``."""

    def value(x):
        x = np.asarray(x, dtype=float)
        return 0.25 * (x[..., 0] ** 2 - a * a) ** 2 + 0.5 * x[..., 1] ** 2

    def grad(x):
        x = np.asarray(x, dtype=float)
        return np.stack([x[..., 0] * (x[..., 0] ** 2 - a * a), x[..., 1]], axis=-1)

    def hess(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 3 * x[..., 0] ** 2 - a * a
        out[..., 1, 1] = 1.0
        return out

    return Hamiltonian(value, grad, hess, name=f"double_well(a={a:g})")


def quadratic_hamiltonian():
    """``|x|^2 / 2``: a single well."""
    return Hamiltonian(
        value=lambda x: 0.5 * np.sum(np.asarray(x, dtype=float) ** 2, axis=-1),
        grad=lambda x: np.asarray(x, dtype=float),
        hess=lambda x: np.broadcast_to(np.eye(2), np.shape(x)[:-1] + (2, 2)).copy(),
        name="quadratic",
    )


def skew_gradient(H, x):
    """``(-dH/dx2, dH/dx1)``: the Hamiltonian vector field."""
    g = H.grad(x)
    return np.stack([-g[..., 1], g[..., 0]], axis=-1)


def find_critical_points(H, box=(-3.0, 3.0, -3.0, 3.0), n_seeds=15, iters=60,
                         dedup=1e-6, grad_tol=1e-10):
    """Damped Newton on ``grad H = 0`` from a seed lattice over ``box``."""
    xs = np.linspace(box[0], box[1], n_seeds)
    ys = np.linspace(box[2], box[3], n_seeds)
    pts = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
    for _ in range(iters):
        g = H.grad(pts)
        J = H.hess(pts)
        det = np.linalg.det(J)
        ok = np.abs(det) > 1e-12
        step = np.zeros_like(pts)
        step[ok] = np.linalg.solve(J[ok], g[ok][..., None])[..., 0]
        # damping: cap the Newton step length at 0.5
        norm = np.linalg.norm(step, axis=-1, keepdims=True)
        step *= np.minimum(1.0, 0.5 / np.maximum(norm, 1e-300))
        pts = pts - step
    good = np.linalg.norm(H.grad(pts), axis=-1) < grad_tol
    found = []
    for p in pts[good]:
        if all(np.linalg.norm(p - q) > dedup for q in found):
            found.append(p)
    out = []
    for p in found:
        ev = np.linalg.eigvalsh(H.hess(p))
        if np.any(np.abs(ev) < 1e-10):
            kind = "degenerate"
        elif np.all(ev > 0):
            kind = "minimum"
        elif np.all(ev < 0):
            kind = "maximum"
        else:
            kind = "saddle"
        out.append((kind, p, float(H.value(p))))
    return out


@dataclass(frozen=True)
class Page:
    k: int
    label: str
    h2_range: tuple


@dataclass
class OpenBook:
    """Pages ``Gamma_1 x I_k`` glued along the binding ``h2 = h_c``.

    Page 1 and 2 are the wells (minima ``O1``, ``O2``), page 3 the exterior.
    """

    H2: Hamiltonian
    pages: list
    binding_level: float
    minima: np.ndarray
    saddle: np.ndarray
    critical_values: dict
    classifier: str = "raster"
    _raster: dict = field(default=None, repr=False)

    def region(self, x2):
        """Well label 1/2 for points below the binding level, 3 above."""
        x2 = np.asarray(x2, dtype=float)
        h = self.H2.value(x2)
        if self.classifier == "sign":
            axis = self.minima[0] - self.minima[1]
            well = np.where(((x2 - self.saddle) @ axis) >= 0, 1, 2)
        else:
            well = self._raster_lookup(x2)
        return np.where(h > self.binding_level, 3, well), h

    def project(self, x2, tol_sep=0.0):
        """Vectorized projection ``x2 -> (h2, k)``; points within ``tol_sep``
        of the binding level get ``k = 0``."""
        k, h = self.region(x2)
        k = np.where(np.abs(h - self.binding_level) <= tol_sep, 0, k)
        return h, k

    def _raster_lookup(self, x2):
        r = self._raster
        ix = np.clip(np.rint((x2[..., 0] - r["x0"]) / r["dx"]).astype(int), 0, r["shape"][0] - 1)
        iy = np.clip(np.rint((x2[..., 1] - r["y0"]) / r["dy"]).astype(int), 0, r["shape"][1] - 1)
        return r["labels"][ix, iy]


def _build_raster(H, book_minima, level, box, resolution):
    xs = np.linspace(box[0], box[1], resolution)
    ys = np.linspace(box[2], box[3], resolution)
    X = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)
    inside = H.value(X) < level
    labels, count = ndimage.label(inside)
    mapping = np.zeros(count + 1, dtype=int)
    dx, dy = xs[1] - xs[0], ys[1] - ys[0]
    for k, m in enumerate(book_minima, start=1):
        ix = int(round((m[0] - box[0]) / dx))
        iy = int(round((m[1] - box[2]) / dy))
        mapping[labels[ix, iy]] = k
    page = mapping[labels]
    # points near the separatrix may fall in unlabeled cells: use the nearest labeled one
    _, (ni, nj) = ndimage.distance_transform_edt(page == 0, return_indices=True)
    page = page[ni, nj]
    return {"labels": page, "x0": box[0], "y0": box[2], "dx": dx, "dy": dy,
            "shape": page.shape}


def build_openbook(H2, box=(-3.0, 3.0, -3.0, 3.0), n_seeds=15, classifier="raster",
                   raster_resolution=801):
    """Locate the critical points of a double-well ``H2`` and assemble the
    three-page open book.

    Raises ``CriticalPointCountMismatch`` unless the search finds exactly two
    nondegenerate minima and one saddle.
    """
    crit = find_critical_points(H2, box=box, n_seeds=n_seeds)
    minima = [c for c in crit if c[0] == "minimum"]
    saddles = [c for c in crit if c[0] == "saddle"]
    others = [c for c in crit if c[0] not in ("minimum", "saddle")]
    if len(minima) != 2 or len(saddles) != 1 or others:
        raise CriticalPointCountMismatch(
            f"expected 2 minima and 1 saddle, found {len(minima)} minima, "
            f"{len(saddles)} saddles, {len(others)} other critical points"
        )
    # O1 is the minimum with the larger first coordinate
    minima.sort(key=lambda c: (-c[1][0], -c[1][1]))
    level = saddles[0][2]
    pages = [
        Page(1, "well O1", (minima[0][2], level)),
        Page(2, "well O2", (minima[1][2], level)),
        Page(3, "exterior", (level, np.inf)),
    ]
    mins = np.array([c[1] for c in minima])
    book = OpenBook(
        H2=H2, pages=pages, binding_level=level, minima=mins, saddle=saddles[0][1],
        critical_values={"O1": minima[0][2], "O2": minima[1][2], "O3": level},
        classifier=classifier,
    )
    if classifier == "raster":
        book._raster = _build_raster(H2, mins, level, box, raster_resolution)
    return book


def project_to_openbook(x2, book, tol_sep=1e-9):
    """Single point ``x2 -> (h2, k)``; raises ``OnSeparatrix`` at the binding."""
    k, h = book.region(np.asarray(x2, dtype=float))
    h, k = float(h), int(k)
    if abs(h - book.binding_level) < tol_sep:
        raise OnSeparatrix(f"H2 = {h:.12g} is within {tol_sep:g} of the binding level")
    return h, k


@dataclass(frozen=True)
class OpenBookSystem:
    """Oscillator 1 (single well ``H1``) and double well ``H2`` with Hamiltonian
    perturbations ``calH_i(x1, x2, w_i)``; ``perturbation_grad`` returns the
    gradients of ``calH_1`` w.r.t. ``x1`` and ``calH_2`` w.r.t. ``x2``."""

    H1: Hamiltonian
    H2: Hamiltonian
    perturbation_grad: Callable
    params: dict = field(default_factory=dict)

    def field(self, x1, x2, w):
        g1, g2 = self.perturbation_grad(x1, x2, w)
        d1 = skew_gradient(self.H1, x1) + np.stack([-g1[..., 1], g1[..., 0]], axis=-1)
        d2 = skew_gradient(self.H2, x2) + np.stack([-g2[..., 1], g2[..., 0]], axis=-1)
        return d1, d2


def symmetric_double_well_system(sigma1=1.0, sigma2=1.0, a=1.0):
    """Preset: ``calH_i = sigma_i (cos(2 pi w_i) x_i1 + sin(2 pi w_i) x_i2)``.

    The law of the perturbation is invariant under ``x2 -> -x2`` (combined with
    the noise shift ``w2 -> w2 + 1/2``), so the two wells are exchangeable.
    """

    def perturbation_grad(x1, x2, w):
        w = np.asarray(w, dtype=float)
        out = []
        for s, wi in ((sigma1, w[..., 0]), (sigma2, w[..., 1])):
            out.append(s * np.stack([np.cos(TWO_PI * wi), np.sin(TWO_PI * wi)], axis=-1))
        return out[0], out[1]

    return OpenBookSystem(
        H1=quadratic_hamiltonian(), H2=double_well_hamiltonian(a),
        perturbation_grad=perturbation_grad,
        params={"sigma1": float(sigma1), "sigma2": float(sigma2), "a": float(a)},
    )


# ----------------------------------------------------- Landau-Lifshitz

@dataclass(frozen=True)
class LandauLifshitzSpec:
    """``dx/dt = eps^-1 x cross grad_x G(x, W)``; ``Gtilde`` is the w-mean of ``G``
    and ``z1`` fixes the sphere ``|x|^2 / 2 = z1``."""

    G: Callable
    grad_G: Callable
    Gtilde: Callable
    z1: float
    params: dict = field(default_factory=dict)

    def check_mean(self, samples=16, M=64, seed=0):
        rng = np.random.default_rng(seed)
        w = np.arange(M) / M
        worst = 0.0
        for _ in range(samples):
            x = rng.normal(size=3)
            x *= np.sqrt(2 * self.z1) / np.linalg.norm(x)
            worst = max(worst, abs(float(self.G(x[None, :], w).mean() - self.Gtilde(x))))
        return worst


def tilted_field_ll_spec(sigma=1.0, z1=0.5):
    """``G(x, w) = x3 + sigma (cos(2 pi w) x1 + sin(2 pi w) x2)``, ``Gtilde = x3``.

    On the sphere ``Gtilde`` has one minimum (south pole) and one maximum
    (north pole), so the limit lives on an interval.
    """

    def G(x, w):
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        return x[..., 2] + sigma * (np.cos(TWO_PI * w) * x[..., 0] + np.sin(TWO_PI * w) * x[..., 1])

    def grad_G(x, w):
        w = np.asarray(w, dtype=float)
        c, s = np.cos(TWO_PI * w), np.sin(TWO_PI * w)
        c, s, one = np.broadcast_arrays(sigma * c, sigma * s, 1.0)
        return np.stack([c, s, one], axis=-1)

    return LandauLifshitzSpec(G=G, grad_G=grad_G, Gtilde=lambda x: np.asarray(x)[..., 2],
                              z1=float(z1), params={"sigma": float(sigma), "z1": float(z1)})


BUILTIN_MODELS = ("coupled_oscillators", "double_well_openbook", "landau_lifshitz")
