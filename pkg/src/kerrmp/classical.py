"""Classical phase portrait of the rotating-frame Hamiltonian.

The classical symbol is ``H(a, a*) = h(|a|^2) + f (a + a*)``.  With action-angle
variables ``a = sqrt(I) exp(i phi)`` it reads ``h(I) + 2 f sqrt(I) cos(phi)``, so
every constant-quasienergy orbit is the curve ``cos(phi) = c(I)`` with

    c(I) = (eps - h(I)) / (2 f sqrt(I)).

Time integrals over an orbit reduce to ``dt = dI / sqrt(P(I))`` where
``P(I) = 4 f^2 I - (eps - h(I))^2`` is a polynomial.  Dividing out the two
turning points and substituting ``I = lo + (hi - lo) sin^2(theta/2)`` turns every
period average into a smooth integral over ``theta in (0, pi)``.

Region numbering: region 1 surrounds the local maximum of ``H`` close to the
origin (small amplitude), region 2 surrounds the global minimum (large
amplitude), region 3 holds the orbits outside the separatrix.  On the real axis
the stationary points are ordered ``x2 < x1 < xs``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .params import ModelParams
from .quadrature import tanh_sinh

ORDERINGS = {"weyl": 0.5, "cnumber": 0.0}
REGIONS = (1, 2, 3)


class ClassicalError(ValueError):
    """Raised for orbits requested outside their region or failed integrations."""


class OrbitIntegrationError(ClassicalError):
    pass


class QuadratureError(ClassicalError):
    pass


def _shift(ordering: str) -> float:
    try:
        return ORDERINGS[ordering]
    except KeyError:
        raise ValueError(f"unknown ordering {ordering!r}; use one of {sorted(ORDERINGS)}") from None


@dataclass(frozen=True)
class ClassicalHamiltonian:
    """``H = h(|a|^2) + f (a + a*)``.

    ``ordering="weyl"`` evaluates the photon-number polynomial at ``|a|^2 - 1/2``,
    which makes the Bohr-Sommerfeld levels exact at zero drive.
    ``ordering="cnumber"`` substitutes ``n -> |a|^2`` directly.
    """

    params: ModelParams
    ordering: str = "weyl"

    @cached_property
    def shift(self) -> float:
        return _shift(self.ordering)

    @cached_property
    def _n_poly(self) -> tuple[Polynomial, Polynomial]:
        p = self.params
        base = Polynomial([0.0, -p.delta, 0.5 * p.alpha])
        v = Polynomial([0.0])
        for q, c in p.alpha_q.items():
            term = np.zeros(q + 1)
            term[q] = c
            v = v + Polynomial(term)
        arg = Polynomial([-self.shift, 1.0])
        return (base + v)(arg), v(arg)

    @property
    def radial(self) -> Polynomial:
        """``h(I)`` as a polynomial in ``I = |a|^2``."""
        return self._n_poly[0]

    @property
    def nonlinear(self) -> Polynomial:
        """Symbol of the high-order part ``V`` as a polynomial in ``I``."""
        return self._n_poly[1]

    @cached_property
    def d_radial(self) -> Polynomial:
        return self.radial.deriv()

    @property
    def drive(self) -> float:
        return self.params.drive

    def value(self, a):
        a = np.asarray(a)
        return self.radial(np.abs(a) ** 2) + 2 * self.drive * a.real

    def grad_conj(self, a):
        """``dH/da*``; the flow is ``da/dt = -i dH/da*``."""
        a = np.asarray(a)
        return self.d_radial(np.abs(a) ** 2) * a + self.drive

    def real_axis(self, x):
        x = np.asarray(x, dtype=float)
        return self.radial(x * x) + 2 * self.drive * x

    def energy_scale(self) -> float:
        p = self.params
        return max(abs(p.delta) ** 2 / p.alpha, abs(p.delta), p.drive, 1e-300)


@dataclass(frozen=True)
class StationaryPoint:
    a: complex
    eps: float
    stability: str  # "stable1", "stable2" or "saddle"
    omega: float  # small-oscillation frequency (0 for the saddle)


@dataclass(frozen=True)
class PhasePortrait:
    params: ModelParams
    ordering: str
    stationary_points: tuple[StationaryPoint, ...]
    eps_sep: float
    eps_1: float
    eps_2: float

    @cached_property
    def hamiltonian(self) -> ClassicalHamiltonian:
        return ClassicalHamiltonian(self.params, self.ordering)

    def _point(self, kind: str) -> StationaryPoint | None:
        for sp in self.stationary_points:
            if sp.stability == kind:
                return sp
        return None

    @property
    def bistable(self) -> bool:
        return self._point("saddle") is not None

    @property
    def x1(self) -> float:
        sp = self._point("stable1")
        return math.nan if sp is None else sp.a.real

    @property
    def x2(self) -> float:
        return self._point("stable2").a.real

    @property
    def xs(self) -> float:
        sp = self._point("saddle")
        return math.nan if sp is None else sp.a.real

    @property
    def scale(self) -> float:
        """Quasienergy scale used for relative tolerances."""
        if self.bistable:
            return max(self.eps_1 - self.eps_2, abs(self.eps_sep), 1e-300)
        return self.hamiltonian.energy_scale()

    def window(self, region: int) -> tuple[float, float]:
        """Open quasienergy interval occupied by orbits of ``region``."""
        if not self.bistable:
            if region != 2:
                raise ClassicalError("a monostable portrait only has region 2")
            return self.eps_2, math.inf
        return {1: (self.eps_sep, self.eps_1), 2: (self.eps_2, self.eps_sep),
                3: (self.eps_sep, math.inf)}[region]

    def region_of(self, eps: float) -> tuple[int, ...]:
        """Regions that have an orbit at ``eps``."""
        return tuple(r for r in (REGIONS if self.bistable else (2,))
                     if self.window(r)[0] < eps < self.window(r)[1])


def find_stationary_points(params: ModelParams, ordering: str = "weyl") -> PhasePortrait:
    """Stationary points of ``H`` (all on the real axis for real drive) and their quasienergies."""
    if params.drive <= 0:
        raise ClassicalError("zero drive is degenerate: a whole circle of stationary points")
    ham = ClassicalHamiltonian(params, ordering)
    h, dh = ham.radial, ham.d_radial
    x = Polynomial([0.0, 1.0])
    poly = x * dh(x * x) + params.drive
    # negligible leading coefficients only produce spurious roots at infinity
    poly = poly.trim(1e-14 * np.max(np.abs(poly.coef)))
    roots = poly.roots()
    tol = 1e-9 * max(1.0, np.max(np.abs(roots)))
    real = np.sort(roots[np.abs(roots.imag) <= tol].real)
    d2h = dh.deriv()
    pts = []
    for r in real:
        r = _polish(poly, r)
        i = r * r
        hxx = 2 * dh(i) + 4 * i * d2h(i)
        hyy = 2 * dh(i)
        eps = float(h(i) + 2 * params.drive * r)
        if hxx * hyy < 0:
            kind, omega = "saddle", 0.0
        else:
            kind = "stable2" if hxx > 0 else "stable1"
            omega = 0.5 * math.sqrt(hxx * hyy)
        pts.append(StationaryPoint(complex(r, 0.0), eps, kind, omega))
    kinds = [p.stability for p in pts]
    if kinds.count("stable2") != 1 or kinds.count("saddle") > 1 or kinds.count("stable1") > 1:
        raise ClassicalError(f"unsupported phase-portrait topology: {kinds}")
    by = {p.stability: p for p in pts}
    eps_2 = by["stable2"].eps
    eps_1 = by["stable1"].eps if "stable1" in by else math.nan
    eps_sep = by["saddle"].eps if "saddle" in by else math.inf
    return PhasePortrait(params, ordering, tuple(pts), eps_sep, eps_1, eps_2)


def _polish(poly: Polynomial, x0: float) -> float:
    d = poly.deriv()
    x = x0
    for _ in range(3):
        dx = d(x)
        if dx == 0:
            break
        x = x - poly(x) / dx
    return float(x)


def _root(fun, a, b):
    return brentq(fun, a, b, xtol=1e-15 * max(1.0, abs(a), abs(b)), rtol=4 * np.finfo(float).eps, maxiter=200)


def _outward(fun, x0, step):
    """Bracket the root of ``fun`` beyond ``x0`` in the direction of ``step``."""
    x = x0 + step
    for _ in range(200):
        if fun(x) > 0:
            return x
        step *= 2
        x = x0 + step
    raise ClassicalError("no real-axis crossing found")


def orbit_crossings(portrait: PhasePortrait, region: int, eps: float) -> tuple[float, float]:
    """The two real-axis points ``x_left < x_right`` of the orbit at ``eps``."""
    lo, hi = portrait.window(region)
    if not lo < eps < hi:
        raise ClassicalError(f"eps={eps} outside the window ({lo}, {hi}) of region {region}")
    ham = portrait.hamiltonian
    g = lambda x: float(ham.real_axis(x)) - eps
    x2 = portrait.x2
    span = max(abs(x2), 1.0)
    if not portrait.bistable:
        left = _root(g, _outward(g, x2, -span), x2)
        right = _root(g, x2, _outward(g, x2, span))
        return left, right
    x1, xs = portrait.x1, portrait.xs
    if region == 1:
        return _root(g, x2, x1), _root(g, x1, xs)
    if region == 2:
        return _root(g, _outward(g, x2, -span), x2), _root(g, x2, x1)
    return _root(g, _outward(g, x2, -span), x2), _root(g, xs, _outward(g, xs, span))


@dataclass(frozen=True)
class OrbitIntegrals:
    """Period integrals of one orbit obtained by quadrature.

    ``drift_k`` is ``(1/2) oint (a dH/da + a* dH/da*) dt``, ``diffusion_d`` is
    ``oint |dH/da|^2 dt``; damping moves the quasienergy at rate
    ``-gamma K / T``.  ``action`` is ``oint I dphi`` (non-negative).
    """

    region: int
    eps: float
    crossings: tuple[float, float]
    period: float
    action: float
    mean_intensity: float
    mean_V: float
    mean_a: float
    drift_k: float
    diffusion_d: float


def _theta_grid(lo, hi, dist_a, dist_b, ta, tb):
    """``I(theta)`` and ``sin(theta)`` with both ends computed without cancellation."""
    t0 = ta + dist_a
    tpi = (math.pi - tb) + dist_b
    width = hi - lo
    near0 = t0 <= 0.5 * math.pi
    i_val = np.where(near0, lo + width * np.sin(0.5 * t0) ** 2, hi - width * np.sin(0.5 * tpi) ** 2)
    s = np.where(near0, np.sin(t0), np.sin(tpi))
    return i_val, s


def orbit_integrals(portrait: PhasePortrait, region: int, eps: float, *, rtol: float = 1e-12) -> OrbitIntegrals:
    ham = portrait.hamiltonian
    f = ham.drive
    xl, xr = orbit_crossings(portrait, region, eps)
    lo, hi = sorted((xl * xl, xr * xr))
    h, dh, v = ham.radial, ham.d_radial, ham.nonlinear
    big_p = Polynomial([0.0, 4 * f * f]) - (eps - h) ** 2
    quot, rem = divmod(big_p, Polynomial([-lo * hi, lo + hi, -1.0]))
    if np.max(np.abs(rem.coef)) > 1e-6 * np.max(np.abs(big_p.coef)):
        raise QuadratureError("turning points are not roots of the orbit polynomial")
    width = hi - lo

    def integrand(ta, tb):
        def fun(theta, da, db):
            i, s = _theta_grid(lo, hi, da, db, ta, tb)
            r = np.maximum(quot(i), 0.0)
            w = 2.0 / np.sqrt(r)
            hv, dhv = h(i), dh(i)
            rest = eps - hv
            sq = np.sqrt(i)
            cosp = rest / (2 * f * sq)
            sinp = 0.5 * width * s * np.sqrt(r) / (2 * f * sq)
            phi = np.arctan2(sinp, cosp)
            return np.stack([
                w,
                w * i,
                w * v(i),
                w * rest / (2 * f),
                w * (i * dhv + 0.5 * rest),
                w * (i * dhv**2 + dhv * rest + f * f),
                phi * 0.5 * width * s,
            ])
        return fun

    cuts = [0.0, math.pi]
    if portrait.bistable:
        i_s = portrait.xs ** 2
        if lo < i_s < hi:
            cuts.insert(1, 2 * math.asin(math.sqrt((i_s - lo) / width)))
    total = np.zeros(7)
    for ta, tb in zip(cuts[:-1], cuts[1:]):
        val, _ = tanh_sinh(integrand(ta, tb), ta, tb, rtol=rtol)
        total += val
    period, it, vt, at, k, d, phi_int = total
    phase = {xl: 0.0 if xl > 0 else math.pi, xr: 0.0 if xr > 0 else math.pi}
    x_lo, x_hi = (xl, xr) if xl * xl <= xr * xr else (xr, xl)
    action = abs(2 * (hi * phase[x_hi] - lo * phase[x_lo]) - 2 * phi_int)
    return OrbitIntegrals(region, float(eps), (xl, xr), period, action, it / period, vt / period,
                          at / period, k, d)


def action(portrait: PhasePortrait, region: int, eps: float) -> float:
    return orbit_integrals(portrait, region, eps).action


def period(portrait: PhasePortrait, region: int, eps: float) -> float:
    return orbit_integrals(portrait, region, eps).period


@dataclass(frozen=True)
class ClassicalOrbit:
    """A sampled orbit over one period together with its quadrature integrals.

    ``fourier`` holds ``a_k`` for ``k = -kmax..kmax`` in the convention
    ``a(t) = sum_k a_k exp(-i k Omega t)`` with the time origin at the
    right-hand real-axis crossing, which makes all ``a_k`` real.
    """

    params: ModelParams
    ordering: str
    region: int
    eps: float
    times: np.ndarray
    samples: np.ndarray
    period: float
    action_area: float
    mean_intensity: float
    mean_V: float
    fourier: np.ndarray
    integrals: OrbitIntegrals
    energy_error: float
    closure_error: float
    action_samples: float = field(default=math.nan)

    @property
    def kmax(self) -> int:
        return (self.fourier.size - 1) // 2

    def harmonic(self, k: int) -> complex:
        k = int(k)
        if abs(k) > self.kmax:
            return 0.0
        return self.fourier[k + self.kmax]

    @property
    def omega(self) -> float:
        return 2 * math.pi / self.period


def trace_orbit(portrait: PhasePortrait, region: int, eps: float, *, n_samples: int | None = None,
                tail: float = 1e-10, max_samples: int = 1 << 15) -> ClassicalOrbit:
    """Integrate ``da/dt = -i dH/da*`` over one period starting on the real axis."""
    lo, hi = portrait.window(region)
    if portrait.bistable and abs(eps - portrait.eps_sep) < 1e-6 * portrait.scale:
        raise ClassicalError("quasienergy too close to the separatrix: the period diverges")
    quad = orbit_integrals(portrait, region, eps)
    ham = portrait.hamiltonian
    f, dh = ham.drive, ham.d_radial
    big_t = quad.period

    def rhs(_t, y):
        x, p = y
        g = dh(x * x + p * p)
        return (g * p, -(g * x + f))

    seed = quad.crossings[1]
    scale = max(abs(quad.crossings[0]), abs(seed), 1.0)
    sol = solve_ivp(rhs, (0.0, big_t), (seed, 0.0), method="DOP853", rtol=1e-13,
                    atol=1e-13 * scale, dense_output=True)
    if not sol.success:
        raise OrbitIntegrationError(sol.message)
    end = sol.y[:, -1]
    closure = math.hypot(end[0] - seed, end[1]) / scale
    if closure > 1e-6:
        raise OrbitIntegrationError(f"orbit failed to close (relative miss {closure:.2e})")

    n = n_samples or 256
    while True:
        times = np.arange(n) * (big_t / n)
        y = sol.sol(times)
        a = y[0] + 1j * y[1]
        coef = np.fft.ifft(a)
        mag = np.abs(coef)
        if n_samples is not None or n >= max_samples:
            break
        if np.max(mag[n // 4: 3 * n // 4 + 1]) < tail * np.max(mag):
            break
        n *= 2

    kmax = n // 2 - 1
    keep = mag >= tail * np.max(mag)
    ks = np.fft.fftfreq(n, 1.0 / n).astype(int)
    used = ks[keep & (np.abs(ks) <= kmax)]
    kmax = int(np.max(np.abs(used))) if used.size else 0
    fourier = np.array([coef[k] for k in range(-kmax, kmax + 1)])

    e_err = float(np.max(np.abs(ham.value(a) - eps)) / max(abs(eps), portrait.scale))
    # x dy - y dx integrated with the exact vector field: spectrally accurate trapezoid
    adot = -1j * ham.grad_conj(a)
    act = float(np.mean(np.imag(np.conj(a) * adot)) * big_t)
    return ClassicalOrbit(portrait.params, portrait.ordering, region, float(eps), times, a, big_t, quad.action, quad.mean_intensity,
                          quad.mean_V, fourier, quad, e_err, closure, abs(act))


def coefficients(orbit: ClassicalOrbit, *, check: float = 1e-8) -> tuple[float, float, float]:
    """``(T, K, D)`` evaluated as contour integrals over the sampled orbit.

    ``K = (1/2) oint (a dH/da + a* dH/da*) dt`` and ``D = oint |dH/da|^2 dt``,
    both summed by the periodic trapezoid rule.  The contour forms are complex
    a priori; an imaginary residue above ``check`` relative raises.
    """
    a = orbit.samples
    big_t = orbit.period
    ham = ClassicalHamiltonian(orbit.params, orbit.ordering)
    grad = ham.grad_conj(a)  # dH/da* ; dH/da is its conjugate
    k_c = 0.5 * np.mean(a * np.conj(grad) + np.conj(a) * grad) * big_t
    d_c = np.mean(np.conj(grad) * grad) * big_t
    for name, z in (("K", k_c), ("D", d_c)):
        if abs(z.imag) > check * max(abs(z.real), 1e-300):
            raise QuadratureError(f"{name} has an imaginary residue {z.imag:.3e}")
    return big_t, float(k_c.real), float(d_c.real)


def _near_sep(portrait: PhasePortrait, region: int, rel: float) -> float:
    lo, hi = portrait.window(region)
    step = rel * portrait.scale
    return lo + step if region in (1, 3) else hi - step


def bohr_sommerfeld_levels(portrait: PhasePortrait, region: int, *, n_cap: int | None = None,
                           eps_max: float | None = None) -> list[tuple[int, float]]:
    """Levels with ``action / 2 pi = n + 1/2`` inside the window of ``region``.

    Region 3 is unbounded; it is cut at ``eps_max`` or, by default, where the
    quantum number would exceed ``n_cap`` (the default Fock cutoff).
    """
    lo, hi = portrait.window(region)
    if not portrait.bistable:
        edges = (lo + 1e-12 * portrait.scale,)
    else:
        edges = (_near_sep(portrait, region, 1e-12),)
    if region == 1:
        ends = (hi, edges[0])  # action vanishes at the local maximum
        j_ends = (0.0, action(portrait, 1, edges[0]))
    elif region == 2:
        ends = (lo, edges[0])
        j_ends = (0.0, action(portrait, region, edges[0]))
    else:
        cap = n_cap if n_cap is not None else portrait.params.default_n_max()
        top = eps_max
        if top is None:
            top = max(portrait.eps_1, edges[0]) if portrait.bistable else lo
            step = portrait.scale
            while action(portrait, region, top + step) < 2 * math.pi * (cap + 1):
                top += step
                step *= 1.5
            top += step
        ends = (edges[0], top)
        j_ends = (action(portrait, region, edges[0]), action(portrait, region, top))
        if eps_max is None:
            j_ends = (j_ends[0], min(j_ends[1], 2 * math.pi * (cap + 1)))
    j_lo, j_hi = sorted(j_ends)
    n_first = max(0, math.ceil(j_lo / (2 * math.pi) - 0.5))
    n_last = math.floor(j_hi / (2 * math.pi) - 0.5)
    a, b = sorted(ends)
    a_in = a if a > lo else a + 1e-13 * portrait.scale
    b_in = b if b < hi else b - 1e-13 * portrait.scale
    out = []
    for n in range(n_first, n_last + 1):
        target = 2 * math.pi * (n + 0.5)
        fun = lambda e: action(portrait, region, e) - target
        try:
            e_n = brentq(fun, a_in, b_in, xtol=1e-13 * portrait.scale, rtol=4 * np.finfo(float).eps)
        except ValueError:
            continue
        out.append((n, float(e_n)))
    return sorted(out, key=lambda t: t[1])


def coefficient_table(portrait: PhasePortrait, region: int, eps_grid) -> np.ndarray:
    """Rows ``(eps, T, K, D, <I>, <V>)`` from quadrature at each grid point."""
    rows = []
    for e in np.asarray(eps_grid, dtype=float):
        oi = orbit_integrals(portrait, region, e)
        rows.append((e, oi.period, oi.drift_k, oi.diffusion_d, oi.mean_intensity, oi.mean_V))
    return np.array(rows).reshape(-1, 6)
