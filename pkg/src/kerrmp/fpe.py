"""Stationary Fokker-Planck equation in quasienergy with a tunneling exchange.

In every region ``r`` the per-state probability ``P_r(eps)`` obeys

    T_r dP_r/dt = d/deps [gamma K_r P_r + Q D_r dP_r/deps] -+ exchange,

so that the probability density per unit quasienergy is ``T_r P_r / 2 pi`` and
the flux toward larger ``eps`` is ``-(gamma K P + Q D P') / 2 pi``.  Regions 1
and 3 exchange probability at the rate ``lambda_T (P1 - P3)`` per pair of
partner states below ``eps_crit`` and through the single resonant pair at
``eps_res``.  All regions share the value ``P_sep`` at the separatrix.

Stationary branches (``phi_r`` is ``(gamma/Q) int K_r/D_r``):

* region 2 and everything above ``eps_res`` carry no flux;
* below ``eps_crit`` tunneling locks ``P1 = P3`` and the combined coefficients
  ``(K1 + K3)/(D1 + D3)`` apply;
* between ``eps_crit`` and ``eps_res`` the flux ``J`` runs up region 1 and back
  down region 3, with ``J = W (P1 - P3)`` at the resonant pair.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import cumulative_trapezoid

from . import classical
from .params import ModelParams
from .tunneling import TunnelProfile

LOG_CUTOFF = math.log(1e16)
TWO_PI = 2 * math.pi


class FPEError(RuntimeError):
    pass


class GridRefinementError(FPEError):
    pass


@dataclass
class CoefficientTable:
    region: int
    eps: np.ndarray
    T: np.ndarray
    K: np.ndarray
    D: np.ndarray

    @property
    def ratio(self) -> np.ndarray:
        return self.K / self.D

    def subset(self, mask) -> "CoefficientTable":
        return CoefficientTable(self.region, self.eps[mask], self.T[mask], self.K[mask], self.D[mask])


def _two_sided(points: int, inner: float = 1e-12, outer: float = 1e-8) -> np.ndarray:
    """Fractions in (0, 1) refined logarithmically toward 0 (down to ``inner``) and 1 (down to ``outer``)."""
    n_log = max(points // 4, 8)
    near0 = np.geomspace(inner, 0.02, n_log, endpoint=False)
    mid = np.linspace(0.02, 0.98, points - 2 * n_log, endpoint=False)
    near1 = 1.0 - np.geomspace(0.02, outer, n_log)
    return np.concatenate([near0, mid, near1])


def _tabulate(portrait, region, eps) -> CoefficientTable:
    rows = classical.coefficient_table(portrait, region, eps)
    return CoefficientTable(region, rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3])


def coefficient_tables(portrait: classical.PhasePortrait, *, points: int = 240,
                       extra_nodes=(), noise_ratio: float | None = None) -> dict[int, CoefficientTable]:
    """Period, drift and diffusion coefficients on grids refined toward the separatrix.

    Regions 1 and 3 share their nodes below ``eps_1``; ``extra_nodes`` (junction
    points) are inserted there.  Region 3 extends upward until the zero-flow
    distribution has fallen by ``1e-16`` relative to the separatrix, which needs
    the ratio ``gamma/Q`` (taken from the portrait parameters by default).
    """
    if not portrait.bistable:
        raise FPEError("the quasienergy distribution is defined for the bistable regime")
    sep, e1, e2 = portrait.eps_sep, portrait.eps_1, portrait.eps_2
    u = _two_sided(points)
    shared = sep + (e1 - sep) * u
    extra = [e for e in extra_nodes if sep < e < e1]
    shared = np.unique(np.concatenate([shared, extra]))
    t1 = _tabulate(portrait, 1, shared)
    t2 = _tabulate(portrait, 2, (sep - (sep - e2) * u)[::-1])
    t3 = _tabulate(portrait, 3, shared)
    p = portrait.params
    g_over_q = (p.gamma / p.noise_q) if noise_ratio is None else noise_ratio
    # extend region 3 above eps_1 until the zero-flow solution is negligible
    phi = g_over_q * float(np.trapezoid(t3.ratio, t3.eps))
    e, step = e1, (e1 - sep) / points * 4
    ext_e, ext_r = [t3.eps[-1]], [t3.ratio[-1]]
    rows = []
    while phi < LOG_CUTOFF + 2.0:
        e_new = e + step
        oi = classical.orbit_integrals(portrait, 3, e_new)
        r_new = oi.drift_k / oi.diffusion_d
        phi += g_over_q * 0.5 * (ext_r[-1] + r_new) * (e_new - ext_e[-1])
        rows.append((e_new, oi.period, oi.drift_k, oi.diffusion_d))
        ext_e.append(e_new)
        ext_r.append(r_new)
        e = e_new
        step *= 1.05
        if len(rows) > 20 * points:
            raise FPEError("region 3 does not decay; check gamma and the noise intensity")
    if rows:
        r = np.array(rows)
        t3 = CoefficientTable(3, np.concatenate([t3.eps, r[:, 0]]), np.concatenate([t3.T, r[:, 1]]),
                              np.concatenate([t3.K, r[:, 2]]), np.concatenate([t3.D, r[:, 3]]))
    return {1: t1, 2: t2, 3: t3}


@dataclass
class StationaryDistribution:
    params: ModelParams
    eps: dict[int, np.ndarray]
    P: dict[int, np.ndarray]
    T: dict[int, np.ndarray]
    flow_J: float
    eps_crit: float | None
    eps_res: float | None
    occupations: tuple[float, float, float] = (math.nan, math.nan, math.nan)
    method: str = "closed-form"
    normalization: float = 1.0
    diagnostics: dict = field(default_factory=dict)

    def density(self, region: int) -> np.ndarray:
        return self.P[region] * self.T[region] / TWO_PI

    def at(self, region: int, eps) -> np.ndarray:
        return np.interp(eps, self.eps[region], self.P[region])

    def table(self, region: int) -> np.ndarray:
        return np.column_stack([self.eps[region], self.P[region], self.density(region)])


def _integral(x, y) -> float:
    return float(np.trapezoid(y, x))


def occupations_from_distribution(dist: StationaryDistribution) -> tuple[float, float, float]:
    """``P_r = int P_r T_r deps / 2 pi`` over each region's window."""
    return tuple(_integral(dist.eps[r], dist.density(r)) for r in (1, 2, 3))


def _normalize(dist: StationaryDistribution) -> StationaryDistribution:
    z = sum(occupations_from_distribution(dist))
    if not z > 0 or not math.isfinite(z):
        raise FPEError(f"distribution cannot be normalized (total {z})")
    for r in dist.P:
        dist.P[r] = dist.P[r] / z
    dist.flow_J /= z
    dist.normalization = z
    dist.occupations = occupations_from_distribution(dist)
    return dist


def _check_negative(dist: StationaryDistribution) -> None:
    neg = 0.0
    for r in dist.P:
        dens = np.minimum(dist.density(r), 0.0)
        neg += -_integral(dist.eps[r], dens)
    if neg > 1e-9:
        raise FPEError(f"negative probability mass {neg:.3e}")
    for r in dist.P:
        dist.P[r] = np.maximum(dist.P[r], 0.0)
    dist.diagnostics["clipped_mass"] = neg


def _junctions(profile: TunnelProfile | None, portrait, tunneling: bool):
    """``(eps_crit, eps_res, W)`` with ``None`` where a junction is absent."""
    if not tunneling or profile is None:
        return None, None, 0.0
    crit = profile.eps_crit if profile.crit_found else portrait.eps_1
    res = profile.eps_res if (profile.eps_res is not None and profile.res_weight > 0) else None
    return crit, res, (profile.res_weight if res is not None else 0.0)


def stationary_solution(params: ModelParams, profile: TunnelProfile | None, tables: dict[int, CoefficientTable] | None = None,
                        *, tunneling: bool = True, points: int = 240, ordering: str = "weyl") -> StationaryDistribution:
    """Closed-form piecewise stationary distribution.

    ``tunneling=False`` (or ``profile=None``) removes the exchange between
    regions 1 and 3 altogether.
    """
    portrait = classical.find_stationary_points(params, ordering)
    crit, res, w = _junctions(profile, portrait, tunneling)
    if tables is None:
        tables = coefficient_tables(portrait, points=points, extra_nodes=[x for x in (crit, res) if x is not None])
    gq = params.gamma / params.noise_q
    q = params.noise_q
    t1, t2, t3 = tables[1], tables[2], tables[3]
    e = t1.eps
    if not np.array_equal(e, t3.eps[:e.size]):
        raise FPEError("regions 1 and 3 must share their nodes below eps_1")

    # region 2: zero flow down from the separatrix (P_sep = 1 before normalization)
    phi2 = gq * cumulative_trapezoid(t2.ratio, t2.eps, initial=0.0)
    p2 = np.exp(-(phi2 - phi2[-1]))

    r1 = t1.ratio
    p1 = np.empty(e.size)
    p3 = np.empty(t3.eps.size)
    j_flow = 0.0
    if crit is None:
        phi1 = gq * cumulative_trapezoid(r1, e, initial=0.0)
        p1[:] = np.exp(-phi1)
        k_c = -1
        phi3 = gq * cumulative_trapezoid(t3.ratio, t3.eps, initial=0.0)
        p3[:] = np.exp(-phi3)
    else:
        k_c = int(np.argmin(np.abs(e - crit)))
        comb = (t1.K + t3.K[:e.size]) / (t1.D + t3.D[:e.size])
        phic = gq * cumulative_trapezoid(comb[:k_c + 1], e[:k_c + 1], initial=0.0)
        p1[:k_c + 1] = np.exp(-phic)
        p3[:k_c + 1] = p1[:k_c + 1]
        pc = p1[k_c]
        seg = slice(k_c, e.size)
        phi1 = gq * cumulative_trapezoid(r1[seg], e[seg], initial=0.0)
        phi3_full = gq * cumulative_trapezoid(t3.ratio[k_c:], t3.eps[k_c:], initial=0.0)
        phi3 = phi3_full[:e.size - k_c]
        if res is not None:
            k_r = int(np.argmin(np.abs(e - res)))
            m = k_r - k_c
            g1 = cumulative_trapezoid(np.exp(phi1[:m + 1]) / t1.D[k_c:k_r + 1], e[k_c:k_r + 1], initial=0.0)
            g3 = cumulative_trapezoid(np.exp(phi3[:m + 1]) / t3.D[k_c:k_r + 1], e[k_c:k_r + 1], initial=0.0)
            e1r, e3r = math.exp(-phi1[m]), math.exp(-phi3[m])
            j_flow = w * pc * (e1r - e3r) / (1.0 + TWO_PI * w / q * (e1r * g1[-1] + e3r * g3[-1]))
            p1[k_c:k_r + 1] = np.exp(-phi1[:m + 1]) * (pc - TWO_PI * j_flow / q * g1)
            p3[k_c:k_r + 1] = np.exp(-phi3[:m + 1]) * (pc + TWO_PI * j_flow / q * g3)
            # zero flow above the resonant pair, continuous at eps_res
            p1[k_r:] = p1[k_r] * np.exp(-(phi1[m:] - phi1[m]))
            p3[k_r:] = p3[k_r] * np.exp(-(phi3_full[m:] - phi3_full[m]))
        else:
            p1[k_c:] = pc * np.exp(-phi1)
            p3[k_c:] = pc * np.exp(-phi3_full)
    dist = StationaryDistribution(params, {1: e.copy(), 2: t2.eps.copy(), 3: t3.eps.copy()},
                                  {1: p1, 2: p2, 3: p3}, {1: t1.T.copy(), 2: t2.T.copy(), 3: t3.T.copy()},
                                  j_flow, crit, res)
    dist.diagnostics["tables"] = tables
    _check_negative(dist)
    return _normalize(dist)


def scaled_profile(profile: TunnelProfile, *, lambda_factor: float = 1.0, res_weight: float | None = None) -> TunnelProfile:
    """Copy of ``profile`` with the continuous rate multiplied and the resonant weight replaced.

    Large ``lambda_factor`` approaches the fully equilibrated limit assumed by
    the closed form below ``eps_crit``.
    """
    weight = profile.res_weight if res_weight is None else res_weight
    return dataclasses.replace(profile, lambda_T=profile.lambda_T * lambda_factor, res_weight=weight,
                               notes=list(profile.notes))


def _bernoulli(v):
    """``v / (exp(v) - 1)`` with the removable singularity at 0."""
    v = np.asarray(v, dtype=float)
    out = np.ones_like(v)
    big = np.abs(v) > 1e-8
    out[big] = v[big] / np.expm1(v[big])
    out[~big] = 1.0 - 0.5 * v[~big]
    return out


def refine_tables(tables: dict[int, CoefficientTable], portrait, factor: int) -> dict[int, CoefficientTable]:
    """Insert ``factor - 1`` nodes into every interval of every table."""
    if factor <= 1:
        return tables
    out = {}
    for r, tb in tables.items():
        x = tb.eps
        pieces = x[:-1, None] + (x[1:] - x[:-1])[:, None] * (np.arange(factor) / factor)[None, :]
        fine = np.concatenate([pieces.ravel(), x[-1:]])
        new = np.setdiff1d(fine, x)
        extra = _tabulate(portrait, r, new)
        allx = np.concatenate([x, extra.eps])
        order = np.argsort(allx)
        out[r] = CoefficientTable(r, allx[order], np.concatenate([tb.T, extra.T])[order],
                                  np.concatenate([tb.K, extra.K])[order], np.concatenate([tb.D, extra.D])[order])
    return out


def bvp_cross_check(params: ModelParams, profile: TunnelProfile | None, tables: dict[int, CoefficientTable] | None = None,
                    *, tunneling: bool = True, points: int = 240, ordering: str = "weyl",
                    exchange: str = "mean", min_cell: float = 1e-7) -> StationaryDistribution:
    """Finite-volume solution of the stationary equations on the tabulated nodes.

    Fluxes use exponential (Scharfetter-Gummel) weighting; the continuous
    exchange enters every shared node of regions 1 and 3 with the period
    ``(T1 + T3)/2`` (``exchange="mean"``) and the resonant pair enters as a
    point exchange at the node nearest ``eps_res``.  Zero flux is imposed at
    the stable points and at the region-3 cutoff.
    """
    portrait = classical.find_stationary_points(params, ordering)
    crit, res, w = _junctions(profile, portrait, tunneling)
    if tables is None:
        tables = coefficient_tables(portrait, points=points, extra_nodes=[x for x in (crit, res) if x is not None])
    gq, q = params.gamma / params.noise_q, params.noise_q
    # cells much narrower than min_cell lose the flux to round-off (coefficients ~ 1/h)
    sep = portrait.eps_sep
    width = {1: portrait.eps_1 - sep, 2: sep - portrait.eps_2, 3: portrait.eps_1 - sep}
    thin = {}
    for r, tb in tables.items():
        dist = np.abs(tb.eps - sep)
        keep = dist >= min_cell * width[r]
        keep[np.argmin(dist)] = True
        thin[r] = tb.subset(keep)
    t1, t2, t3 = thin[1], thin[2], thin[3]
    n1, n2, n3 = t1.eps.size, t2.eps.size, t3.eps.size
    if abs(t1.eps[0] - sep) > 1e-6 * portrait.scale or abs(t2.eps[-1] - sep) > 1e-6 * portrait.scale:
        raise GridRefinementError("the first node above the separatrix is too far from it")
    # unknowns: region 2 nodes (last one is the separatrix node), then regions 1 and 3 without their first node
    idx2 = np.arange(n2)
    s = n2 - 1
    idx1 = np.concatenate([[s], n2 + np.arange(n1 - 1)])
    idx3 = np.concatenate([[s], n2 + n1 - 1 + np.arange(n3 - 1)])
    n = n2 + n1 - 1 + n3 - 1
    rows, cols, vals = [], [], []

    def add(i, j, v):
        rows.append(i)
        cols.append(j)
        vals.append(v)

    def faces(tb, idx, eps_override=None):
        x = tb.eps.copy()
        h = np.diff(x)
        ratio = 0.5 * (tb.ratio[:-1] + tb.ratio[1:])
        dface = 0.5 * (tb.D[:-1] + tb.D[1:])
        v = gq * ratio * h
        c = q * dface / (TWO_PI * h)
        # flux from node i to i+1: c (B(v) P_i - B(-v) P_{i+1})
        a_plus, a_minus = c * _bernoulli(v), c * _bernoulli(-v)
        for k in range(h.size):
            i, j = idx[k], idx[k + 1]
            add(i, i, a_plus[k])
            add(i, j, -a_minus[k])
            add(j, i, -a_plus[k])
            add(j, j, a_minus[k])

    for tb, idx in ((t2, idx2), (t1, idx1), (t3, idx3)):
        faces(tb, idx)

    if crit is not None:
        lam = profile.lambda_at(t1.eps)
        h = np.diff(t1.eps)
        width = np.zeros(n1)
        width[:-1] += 0.5 * h
        width[1:] += 0.5 * h
        tbar = 0.5 * (t1.T + t3.T[:n1]) if exchange == "mean" else np.minimum(t1.T, t3.T[:n1])
        g = tbar * lam * width / TWO_PI
        for k in range(1, n1):
            if g[k] == 0.0:
                continue
            i, j = idx1[k], idx3[k]
            add(i, i, g[k])
            add(i, j, -g[k])
            add(j, j, g[k])
            add(j, i, -g[k])
        if res is not None:
            k = int(np.argmin(np.abs(t1.eps - res)))
            i, j = idx1[k], idx3[k]
            add(i, i, w)
            add(i, j, -w)
            add(j, j, w)
            add(j, i, -w)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n)).tolil()
    balance = mat.tocsr()
    # normalization replaces the balance of the deepest region-2 node
    wts = np.zeros(n)
    for tb, idx in ((t2, idx2), (t1, idx1), (t3, idx3)):
        h = np.diff(tb.eps)
        cw = np.zeros(tb.eps.size)
        cw[:-1] += 0.5 * h
        cw[1:] += 0.5 * h
        np.add.at(wts, idx, cw * tb.T / TWO_PI)
    mat[0, :] = wts
    rhs = np.zeros(n)
    rhs[0] = 1.0
    # row equilibration: cells next to the separatrix carry coefficients ~1/h
    mat = mat.tocsr()
    rs = 1.0 / np.asarray(abs(mat).max(axis=1).todense()).ravel()
    scaled = (sp.diags(rs) @ mat).tocsc()
    lu = spla.splu(scaled, permc_spec="NATURAL", diag_pivot_thresh=1.0)
    sol = lu.solve(rs * rhs)
    for _ in range(3):
        sol += lu.solve(rs * rhs - scaled @ sol)
    resid = balance @ sol
    resid[0] = 0.0
    scale = float(np.max(np.abs(balance).sum(axis=1))) * float(np.max(np.abs(sol)))
    p1, p2, p3 = sol[idx1], sol[idx2], sol[idx3]
    j_flow = 0.0
    if res is not None:
        k = int(np.argmin(np.abs(t1.eps - res)))
        j_flow = w * (p1[k] - p3[k])
    dist = StationaryDistribution(params, {1: t1.eps.copy(), 2: t2.eps.copy(), 3: t3.eps.copy()},
                                  {1: p1, 2: p2, 3: p3}, {1: t1.T.copy(), 2: t2.T.copy(), 3: t3.T.copy()},
                                  j_flow, crit, res, method="finite-volume")
    dist.diagnostics["flux_residual"] = float(np.max(np.abs(resid)) / scale) if scale else 0.0
    dist.diagnostics["tables"] = tables
    _check_negative(dist)
    return _normalize(dist)


def sup_mismatch(a: StationaryDistribution, b: StationaryDistribution) -> dict[int, float]:
    """Per region ``max |P_a - P_b| / max P_a`` on the nodes of ``a``."""
    out = {}
    for r in (1, 2, 3):
        pb = np.interp(a.eps[r], b.eps[r], b.P[r])
        out[r] = float(np.max(np.abs(a.P[r] - pb)) / np.max(np.abs(a.P[r])))
    return out


def branch_slopes(dist: StationaryDistribution, region: int, lo: float, hi: float) -> np.ndarray:
    """Signs of ``dP/deps`` between consecutive nodes strictly inside ``(lo, hi)``."""
    e, p = dist.eps[region], dist.P[region]
    sel = (e > lo) & (e < hi)
    return np.sign(np.diff(p[sel]))
