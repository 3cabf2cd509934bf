"""WKB tunneling between the small- and large-amplitude orbits of equal quasienergy.

The barrier lies on the positive real axis around the saddle, where the
orbit equation ``cos(phi) = c(I)`` has ``c > 1``.  Its action is

    S(eps) = int_{q1}^{q2} acosh(c(I)) dI,

with ``q1 < q2`` the squared real-axis crossings of the region-1 and
region-3 orbits next to the saddle.  The amplitude is ``t = p * delta * exp(-S)``
with an order-one prefactor ``p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import brentq

from . import classical
from .params import ModelParams
from .quadrature import tanh_sinh


class BarrierError(ValueError):
    """No classically forbidden interval between the two orbits."""


class TopologyError(BarrierError):
    pass


def _portrait(params_or_portrait, ordering="weyl") -> classical.PhasePortrait:
    if isinstance(params_or_portrait, classical.PhasePortrait):
        return params_or_portrait
    return classical.find_stationary_points(params_or_portrait, ordering)


def branch_points(portrait: classical.PhasePortrait, eps: float) -> tuple[float, float]:
    """``(q1, q2)``: squared real-axis turning points bounding the barrier at the saddle.

    All positive solutions of ``H(x) = eps`` are located; the barrier is the
    interval between the last one below the saddle and the first one above it.
    """
    if not portrait.bistable or not portrait.eps_sep < eps < portrait.eps_1:
        raise BarrierError(f"eps={eps} is outside the window where both orbits exist")
    ham = portrait.hamiltonian
    x = Polynomial([0.0, 1.0])
    poly = ham.radial(x * x) + 2 * ham.drive * x - eps
    roots = poly.roots()
    tol = 1e-7 * max(1.0, np.max(np.abs(roots)))
    pos = np.sort([r.real for r in roots if abs(r.imag) <= tol and r.real > 0])
    xs = portrait.xs
    below, above = pos[pos < xs], pos[pos > xs]
    if below.size == 0 or above.size == 0:
        raise TopologyError(f"barrier around the saddle not found; positive roots {pos.tolist()}")
    if below.size > 2 or above.size > 1:
        raise TopologyError(f"unexpected number of turning points {pos.tolist()}")
    g = lambda v: float(ham.real_axis(v)) - eps
    # polish with bracketing on each side of the saddle
    x1 = portrait.x1
    xl = brentq(g, max(x1, 0.0) if g(max(x1, 0.0)) > 0 else below[-1] * 0.5, xs, xtol=1e-15, rtol=1e-15)
    step = max(above[0] - xs, 1e-3)
    hi = above[0] + step
    while g(hi) <= 0:
        hi += step
    xr = brentq(g, xs, hi, xtol=1e-15, rtol=1e-15)
    return xl * xl, xr * xr


def tunneling_action(params, eps: float, *, ordering: str = "weyl", rtol: float = 1e-13) -> float:
    """Barrier action ``int acosh(c(I)) dI`` between the two turning points."""
    portrait = _portrait(params, ordering)
    ham = portrait.hamiltonian
    f = ham.drive
    q1, q2 = branch_points(portrait, eps)
    width = q2 - q1
    h = ham.radial
    big_p = Polynomial([0.0, 4 * f * f]) - (eps - h) ** 2
    # P < 0 under the barrier; divide out (I - q1)(I - q2), which is also negative there
    quot, _ = divmod(big_p, Polynomial([q1 * q2, -(q1 + q2), 1.0]))

    def fun(theta, da, db):
        near0 = theta <= 0.5 * math.pi
        tpi = math.pi - theta
        tpi = np.where(near0, tpi, db)
        t0 = np.where(near0, da, theta)
        i = np.where(near0, q1 + width * np.sin(0.5 * t0) ** 2, q2 - width * np.sin(0.5 * tpi) ** 2)
        s = np.where(near0, np.sin(t0), np.sin(tpi))
        r = np.maximum(quot(i), 0.0)
        # sqrt(c^2 - 1) = sqrt((I - q1)(q2 - I) R) / (2 f sqrt(I))
        sh = 0.5 * width * s * np.sqrt(r) / (2 * f * np.sqrt(i))
        return np.arcsinh(sh) * 0.5 * width * s

    val, _ = tanh_sinh(fun, 0.0, math.pi, rtol=rtol)
    return float(val)


@dataclass(frozen=True)
class Amplitude:
    value: float
    action: float
    underflow: bool


def tunneling_amplitude(params, eps: float, *, prefactor: float = 1.0, ordering: str = "weyl") -> Amplitude:
    """``t = prefactor * delta * exp(-S)``; ``underflow`` flags an exact zero."""
    portrait = _portrait(params, ordering)
    s = tunneling_action(portrait, eps)
    t = prefactor * portrait.params.delta * math.exp(-s)
    return Amplitude(t, s, t == 0.0)


def quasienergy_mismatch(params, eps: float, delta_offset: float | None = None, *,
                         ordering: str = "weyl") -> float:
    """Continuous splitting ``eps_1(n) - eps_3(n)`` of partner levels near ``eps``.

    ``-dd (<I>_1 - <I>_3) + <V>_1 - <V>_3`` with ``dd`` the detuning from the
    nearest multiphoton resonance.  Its zero reproduces the first-order
    anticrossing displacement ``(V_3 - V_1)/(n_3 - n_1)``.
    """
    portrait = _portrait(params, ordering)
    p = portrait.params
    if not portrait.bistable or not portrait.eps_sep < eps < portrait.eps_1:
        raise BarrierError(f"eps={eps} is outside the overlap of regions 1 and 3")
    dd = p.delta_offset if delta_offset is None else delta_offset
    o1 = classical.orbit_integrals(portrait, 1, eps)
    o3 = classical.orbit_integrals(portrait, 3, eps)
    return -dd * (o1.mean_intensity - o3.mean_intensity) + o1.mean_V - o3.mean_V


def decoherence_rates(params: ModelParams, orbit1: classical.ClassicalOrbit, orbit3: classical.ClassicalOrbit,
                      *, literal: bool = False) -> tuple[float, float]:
    """``(gamma13, gamma_tilde)`` for partner orbits of regions 1 and 3.

    Both orbits start on the positive real axis next to the barrier, so their
    Fourier coefficients are real and harmonics are paired by index.  The
    default rates follow from the decay of the inter-region coherence under
    the full thermal dissipator: twice the decay rate, including the factor
    ``2N + 1``.  ``literal=True`` returns the zero-temperature forms
    ``gamma (I1 + I3 - 2 sum a1 a3)`` and ``gamma/2 (I1 + I3 - 2 a1_0 a3_0)``.
    """
    k = max(orbit1.kmax, orbit3.kmax)
    a1 = np.array([orbit1.harmonic(j) for j in range(-k, k + 1)])
    a3 = np.array([orbit3.harmonic(j) for j in range(-k, k + 1)])
    i1, i3 = orbit1.mean_intensity, orbit3.mean_intensity
    full = i1 + i3 - 2 * float(np.real(np.sum(a1 * np.conj(a3))))
    diag = i1 + i3 - 2 * float(np.real(orbit1.harmonic(0) * np.conj(orbit3.harmonic(0))))
    g = params.gamma
    if literal:
        return g * full, 0.5 * g * diag
    thermal = 2 * params.n_thermal + 1
    return g * thermal * full, g * thermal * diag


def lorentzian_rate(width: float, t: float, mismatch: float) -> float:
    """``width t^2 / (mismatch^2 + width^2/4)``; zero when ``t`` or the width vanish."""
    if t == 0.0 or width == 0.0:
        return 0.0
    return width * t * t / (mismatch * mismatch + 0.25 * width * width)


@dataclass
class TunnelProfile:
    params: ModelParams
    eps_grid: np.ndarray
    t_of_eps: np.ndarray
    action: np.ndarray
    delta_eps13: np.ndarray
    gamma13: np.ndarray
    gamma_tilde: np.ndarray
    lambda_T: np.ndarray
    eps_crit: float
    crit_found: bool
    eps_res: float | None
    t_prefactor: float = 1.0
    res_level: float | None = None  # Bohr-Sommerfeld region-1 level closest to eps_res
    delta_eps_res: float = math.nan  # mismatch of the resonant pair
    t_res: float = math.nan
    gamma_tilde_res: float = math.nan
    res_weight: float = 0.0  # jump of the probability flux per unit (P1 - P3) at eps_res
    eps_sep: float = math.nan
    eps_1: float = math.nan
    notes: list[str] = field(default_factory=list)

    def lambda_at(self, eps) -> np.ndarray:
        """Continuous tunneling rate interpolated in ``eps`` (zero above ``eps_crit``)."""
        eps = np.asarray(eps, dtype=float)
        out = np.interp(eps, self.eps_grid, self.lambda_T, left=self.lambda_T[0], right=0.0)
        return np.where(eps < self.eps_crit, out, 0.0)

    def table(self) -> np.ndarray:
        return np.column_stack([self.eps_grid, self.t_of_eps, self.delta_eps13, self.gamma13, self.lambda_T])


def profile_grid(portrait: classical.PhasePortrait, points: int = 120) -> np.ndarray:
    """Quasienergies between the separatrix and the local maximum, refined toward the separatrix."""
    lo, hi = portrait.eps_sep, portrait.eps_1
    n_log = points // 3
    u = np.concatenate([np.geomspace(1e-5, 5e-2, n_log, endpoint=False),
                        np.linspace(5e-2, 1 - 1e-3, points - n_log)])
    return lo + (hi - lo) * u


def critical_quasienergy(eps_grid, t_vals, mismatch, eps_sep: float, eps_1: float, *,
                         t_fun=None, mismatch_fun=None) -> tuple[float, bool, float | None]:
    """``(eps_crit, found, eps_res)`` from tabulated ``t`` and ``delta_eps13``.

    ``eps_crit`` is the smallest root of ``|delta_eps13| = t``; without a root it
    equals ``eps_1``.  ``eps_res`` is the first zero of ``delta_eps13`` above it.
    Optional callables refine the tabulated brackets by bisection.
    """
    e = np.asarray(eps_grid, dtype=float)
    gap = np.abs(np.asarray(mismatch)) - np.asarray(t_vals)
    crit, found = eps_1, False
    if gap[0] >= 0:
        crit, found = float(e[0]), True
    else:
        idx = np.nonzero((gap[:-1] < 0) & (gap[1:] >= 0))[0]
        if idx.size:
            k = idx[0]
            crit, found = _refine(e[k], e[k + 1], gap[k], gap[k + 1],
                                  None if t_fun is None else (lambda x: abs(mismatch_fun(x)) - t_fun(x))), True
    res = None
    m = np.asarray(mismatch)
    sel = np.nonzero((m[:-1] * m[1:] < 0) & (e[1:] > crit))[0]
    if sel.size and found:
        k = sel[0]
        res = _refine(e[k], e[k + 1], m[k], m[k + 1], mismatch_fun)
    return crit, found, res


def _refine(a, b, fa, fb, fun):
    if fun is None:
        return float(a - fa * (b - a) / (fb - fa))
    try:
        return float(brentq(fun, a, b, xtol=1e-12 * max(1.0, abs(a)), rtol=1e-12))
    except ValueError:
        return float(a - fa * (b - a) / (fb - fa))


def lambda_profile(params: ModelParams, delta_offset: float | None = None, *, eps_grid=None,
                   points: int = 120, prefactor: float = 1.0, ordering: str = "weyl",
                   literal_rates: bool = False) -> TunnelProfile:
    """Tunneling amplitude, mismatch, decoherence rates and the tunneling rate on a grid.

    Below ``eps_crit`` the rate is the Lorentzian ``gamma13 t^2/(de^2 + gamma13^2/4)``.
    Above it only the resonant pair contributes; it is carried as a point
    weight ``res_weight`` located at ``eps_res``, evaluated for the
    Bohr-Sommerfeld level of region 1 closest to the continuous root.
    """
    portrait = classical.find_stationary_points(params, ordering)
    if not portrait.bistable:
        raise BarrierError("the drive is above the bistability threshold")
    dd = params.delta_offset if delta_offset is None else delta_offset
    grid = profile_grid(portrait, points) if eps_grid is None else np.asarray(eps_grid, dtype=float)
    n = grid.size
    t_vals, s_vals, mis = np.empty(n), np.empty(n), np.empty(n)
    g13, gt = np.empty(n), np.empty(n)

    def pair(e):
        o1 = classical.trace_orbit(portrait, 1, e)
        o3 = classical.trace_orbit(portrait, 3, e)
        return o1, o3

    for j, e in enumerate(grid):
        amp = tunneling_amplitude(portrait, e, prefactor=prefactor)
        t_vals[j], s_vals[j] = amp.value, amp.action
        o1, o3 = pair(e)
        mis[j] = (-dd * (o1.mean_intensity - o3.mean_intensity) + o1.mean_V - o3.mean_V)
        g13[j], gt[j] = decoherence_rates(params, o1, o3, literal=literal_rates)

    t_fun = lambda e: tunneling_amplitude(portrait, e, prefactor=prefactor).value
    m_fun = lambda e: quasienergy_mismatch(portrait, e, dd)
    crit, found, res = critical_quasienergy(grid, t_vals, mis, portrait.eps_sep, portrait.eps_1,
                                            t_fun=t_fun, mismatch_fun=m_fun)
    lam = np.array([lorentzian_rate(g, t, d) if e < crit else 0.0
                    for e, g, t, d in zip(grid, g13, t_vals, mis)])
    prof = TunnelProfile(params, grid, t_vals, s_vals, mis, g13, gt, lam, crit, found, res, prefactor,
                         eps_sep=portrait.eps_sep, eps_1=portrait.eps_1)
    if not found:
        prof.notes.append("no root of |delta_eps13| = t: the whole window tunnels strongly")
    if res is not None:
        levels = classical.bohr_sommerfeld_levels(portrait, 1)
        cands = [e for _, e in levels if e > crit]
        if cands:
            e_n = min(cands, key=lambda e: abs(e - res))
            o1, o3 = pair(e_n)
            prof.res_level = e_n
            prof.delta_eps_res = m_fun(e_n)
            prof.t_res = t_fun(e_n)
            prof.gamma_tilde_res = decoherence_rates(params, o1, o3, literal=literal_rates)[1]
            prof.res_weight = lorentzian_rate(prof.gamma_tilde_res, prof.t_res, prof.delta_eps_res)
        else:
            prof.notes.append("no region-1 level above eps_crit; resonant term dropped")
    return prof
