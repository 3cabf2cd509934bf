"""Quasienergy spectrum, region labels and anticrossings versus detuning."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment, minimize_scalar

from . import classical
from .fock import build_hamiltonian, nonlinear_diagonal, resolve_n_max
from .params import ModelParams

LABELS = ("1", "2", "3", "3'")


@dataclass(frozen=True)
class Level:
    eps: float
    mean_photon: float
    label: str | None
    weight_1: float  # share of the state attributed to region 1 (0 outside the 1/3 window)
    near_boundary: bool


@dataclass
class QuasienergySpectrum:
    params: ModelParams
    energies: np.ndarray
    basis: np.ndarray
    levels: list[Level]
    portrait: classical.PhasePortrait | None = None
    degenerate: list[tuple[int, ...]] = field(default_factory=list)

    @property
    def mean_photon(self) -> np.ndarray:
        return np.array([lv.mean_photon for lv in self.levels])

    @property
    def labels(self) -> list[str | None]:
        return [lv.label for lv in self.levels]

    @property
    def weights(self) -> np.ndarray:
        """Per-state weights ``(w1, w2, w3)`` used to split populations between regions."""
        out = np.zeros((len(self.levels), 3))
        for i, lv in enumerate(self.levels):
            if lv.label == "2":
                out[i, 1] = 1.0
            elif lv.label in ("1", "3"):
                out[i, 0] = lv.weight_1
                out[i, 2] = 1.0 - lv.weight_1
            elif lv.label == "3'":
                out[i, 2] = 1.0
        return out

    def indices(self, label: str) -> list[int]:
        return [i for i, lv in enumerate(self.levels) if lv.label == label]


def _degenerate_clusters(e: np.ndarray, tol: float) -> list[tuple[int, ...]]:
    out, cur = [], [0]
    for i in range(1, e.size):
        if e[i] - e[i - 1] <= tol:
            cur.append(i)
        else:
            if len(cur) > 1:
                out.append(tuple(cur))
            cur = [i]
    if len(cur) > 1:
        out.append(tuple(cur))
    return out


def branch_intensities(portrait: classical.PhasePortrait, eps: float) -> tuple[float, float]:
    """Orbit-averaged ``|a|^2`` of the region-1 and region-3 orbits at ``eps``."""
    i1 = classical.orbit_integrals(portrait, 1, eps).mean_intensity
    i3 = classical.orbit_integrals(portrait, 3, eps).mean_intensity
    return i1, i3


def label_states(portrait: classical.PhasePortrait | None, energies, mean_photon) -> list[Level]:
    """Assign each eigenstate to a phase-portrait region.

    Below the separatrix only region 2 exists and above the local maximum only
    outer orbits exist.  In between, the photon number (shifted by the symbol's
    ordering constant) is compared with the averaged intensities of the region-1
    and region-3 orbits at the same quasienergy; the relative distance gives
    the region-1 weight of hybridized states.
    """
    energies = np.asarray(energies)
    n = energies.size
    spacing = np.empty(n)
    if n > 1:
        d = np.diff(energies)
        spacing[0], spacing[-1] = d[0], d[-1]
        spacing[1:-1] = 0.5 * (d[:-1] + d[1:])
    else:
        spacing[:] = np.inf
    out = []
    for e, nb, sp in zip(energies, mean_photon, spacing):
        if portrait is None:
            out.append(Level(float(e), float(nb), None, 0.0, False))
            continue
        if not portrait.bistable:
            out.append(Level(float(e), float(nb), "2", 0.0, False))
            continue
        band = 0.5 * sp
        near = min(abs(e - portrait.eps_sep), abs(e - portrait.eps_1)) < band
        if e <= portrait.eps_sep:
            out.append(Level(float(e), float(nb), "2", 0.0, near))
        elif e >= portrait.eps_1:
            out.append(Level(float(e), float(nb), "3'", 0.0, near))
        else:
            try:
                i1, i3 = branch_intensities(portrait, e)
            except classical.ClassicalError:
                # numerically on the separatrix: fall back to the region-3 side
                out.append(Level(float(e), float(nb), "3", 0.0, True))
                continue
            x = nb + portrait.hamiltonian.shift
            w1 = float(np.clip((i3 - x) / (i3 - i1), 0.0, 1.0))
            out.append(Level(float(e), float(nb), "1" if w1 >= 0.5 else "3", w1, near))
    return out


def diagonalize(params: ModelParams, n_max: int | str | None = None, *, ordering: str = "weyl",
                labels: bool = True, degeneracy_tol: float = 1e-10) -> QuasienergySpectrum:
    """Full eigendecomposition with ``<n>`` and region labels per eigenstate.

    Clusters of eigenvalues closer than ``degeneracy_tol`` (relative to the
    spectral width) are reported in ``degenerate``.
    """
    h = build_hamiltonian(params, n_max)
    e, v = np.linalg.eigh(h)
    nb = (np.abs(v) ** 2).T @ np.arange(h.shape[0])
    portrait = None
    if labels and params.drive > 0:
        portrait = classical.find_stationary_points(params, ordering)
    lv = label_states(portrait, e, nb) if labels else [Level(float(x), float(y), None, 0.0, False)
                                                      for x, y in zip(e, nb)]
    width = max(e[-1] - e[0], 1e-300)
    clusters = _degenerate_clusters(e, degeneracy_tol * width)
    return QuasienergySpectrum(params, e, v, lv, portrait, clusters)


@dataclass(frozen=True)
class Anticrossing:
    level_pair: tuple[int, int]  # eigenvalue indices at the grid point nearest the minimum
    tracks: tuple[int, int]
    delta_at_min: float
    min_gap: float
    mean_quasienergy: float
    predicted_shift: float = math.nan


@dataclass
class SpectrumScan:
    """Eigenvalues tracked across a detuning grid.

    ``energies[k, j]`` is the quasienergy of track ``j`` at grid point ``k``;
    ``order[k, j]`` its eigenvalue index and ``weight_1[k, j]`` its region-1 share.
    """

    deltas: np.ndarray
    energies: np.ndarray
    order: np.ndarray
    weight_1: np.ndarray
    in_window: np.ndarray  # labeled 1 or 3 and clear of the separatrix / local-maximum bands

    def table_rows(self):
        """Rows ``(delta, i, j, gap, mean eps)`` for energetically adjacent tracks."""
        for k, d in enumerate(self.deltas):
            idx = np.argsort(self.energies[k])
            for a, b in zip(idx[:-1], idx[1:]):
                ea, eb = self.energies[k, a], self.energies[k, b]
                yield d, int(self.order[k, a]), int(self.order[k, b]), eb - ea, 0.5 * (ea + eb)


def _diag_point(args):
    params, n_max, ordering = args
    sp = diagonalize(params, n_max, ordering=ordering)
    win = np.array([lv.label in ("1", "3") and not lv.near_boundary for lv in sp.levels])
    return sp.energies, sp.basis, np.array([lv.weight_1 for lv in sp.levels]), win


def track_levels(params_grid, n_max=None, *, ordering: str = "weyl", workers: int = 1) -> SpectrumScan:
    """Diagonalize every grid point and follow eigenvectors by maximal overlap."""
    params_grid = list(params_grid)
    n_max = resolve_n_max(max(params_grid, key=lambda p: p.delta), n_max)
    jobs = [(p, n_max, ordering) for p in params_grid]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            res = list(ex.map(_diag_point, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        res = [_diag_point(j) for j in jobs]
    nk, dim = len(res), res[0][0].size
    energies = np.empty((nk, dim))
    order = np.empty((nk, dim), dtype=int)
    weight = np.empty((nk, dim))
    window = np.empty((nk, dim), dtype=bool)
    perm = np.arange(dim)  # track j -> eigen-index at current point
    for k, (e, v, w, win) in enumerate(res):
        if k > 0:
            prev_v = res[k - 1][1][:, perm]
            ov = np.abs(prev_v.T @ v)
            _, cols = linear_sum_assignment(-ov)
            perm = cols
        energies[k], order[k], weight[k], window[k] = e[perm], perm, w[perm], win[perm]
    return SpectrumScan(np.array([p.delta for p in params_grid]), energies, order, weight, window)


def refine_minimum(x, y2):
    """Vertex of the parabola through three samples of ``gap^2``."""
    (x0, x1, x2), (y0, y1, y2_) = x, y2
    den = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2_) + x0 * (y2_ - y1)) / den
    b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2_ - y0) + x0 * x0 * (y1 - y2_)) / den
    c = (x1 * x2 * (x1 - x2) * y0 + x2 * x0 * (x2 - x0) * y1 + x0 * x1 * (x0 - x1) * y2_) / den
    if a <= 0:
        return x1, y1
    xv = -b / (2 * a)
    return xv, c - b * b / (4 * a)


def find_anticrossings(scan: SpectrumScan, *, require_regions: bool = True) -> list[Anticrossing]:
    """Interior gap minima between energetically adjacent tracks.

    With ``require_regions`` a pair qualifies only when both tracks lie in the
    window shared by regions 1 and 3 and together carry one region-1 state.
    """
    nk, dim = scan.energies.shape
    candidates = set()
    for k in range(nk):
        idx = np.argsort(scan.energies[k])
        for a, b in zip(idx[:-1], idx[1:]):
            candidates.add((min(a, b), max(a, b)))
    out = []
    for a, b in sorted(candidates):
        gap = np.abs(scan.energies[:, a] - scan.energies[:, b])
        for k in range(nk):
            left = gap[k - 1] if k > 0 else math.inf
            right = gap[k + 1] if k < nk - 1 else math.inf
            if not (gap[k] <= left and gap[k] < right) and not (gap[k] < left and gap[k] <= right):
                continue
            # the pair must be adjacent in energy at the minimum
            lo_e, hi_e = sorted((scan.energies[k, a], scan.energies[k, b]))
            between = np.sum((scan.energies[k] > lo_e) & (scan.energies[k] < hi_e))
            if between:
                continue
            if require_regions:
                if not (scan.in_window[k, a] and scan.in_window[k, b]):
                    continue
                w = scan.weight_1[k, a] + scan.weight_1[k, b]
                if not 0.5 <= w <= 1.5:
                    continue
            if k == 0 or k == nk - 1:
                warnings.warn(f"gap minimum of tracks {a},{b} at the grid edge; anticrossing unresolved",
                              stacklevel=2)
                continue
            xm, g2 = refine_minimum(scan.deltas[k - 1:k + 2], gap[k - 1:k + 2] ** 2)
            pair = tuple(sorted((int(scan.order[k, a]), int(scan.order[k, b]))))
            out.append(Anticrossing(pair, (int(a), int(b)), float(xm), math.sqrt(max(g2, 0.0)),
                                    float(0.5 * (lo_e + hi_e))))
    out.sort(key=lambda ac: ac.mean_quasienergy)
    return out


def two_level_fit(params: ModelParams, n_max: int, pair: tuple[int, int]) -> tuple[float, float]:
    """Diabatic crossing point and minimal gap ``2|t|`` of an eigenpair.

    The pair is rotated to the basis diagonalizing ``n`` inside its span, which
    approximates the unmixed region-1 and region-3 states.  Their energies
    depend on detuning with slopes ``-<n>``, so the crossing point and the
    coupling follow from a single diagonalization near the anticrossing.
    """
    i, j = pair
    e, v = np.linalg.eigh(build_hamiltonian(params, n_max, check=False))
    sub = v[:, [i, j]]
    nsub = sub.T @ (np.arange(sub.shape[0])[:, None] * sub)
    n_d, u = np.linalg.eigh(nsub)
    h_d = u.T @ np.diag(e[[i, j]]) @ u
    x0 = params.delta + (h_d[0, 0] - h_d[1, 1]) / (n_d[0] - n_d[1])
    return float(x0), float(2 * abs(h_d[0, 1]))


def polish_anticrossing(ac: Anticrossing, template: ModelParams, n_max: int, step: float) -> Anticrossing:
    """Refine position and gap of a detected anticrossing.

    A bounded minimization of ``gap^2`` locates the minimum to within floating
    point resolution in detuning; a two-level fit there removes the residual
    offset, which matters once the gap drops below that resolution.
    """
    i, j = ac.level_pair

    def gap2(d):
        e = np.linalg.eigvalsh(build_hamiltonian(template.with_(delta=d), n_max, check=False))
        return (e[j] - e[i]) ** 2

    res = minimize_scalar(gap2, bounds=(ac.delta_at_min - step, ac.delta_at_min + step),
                          method="bounded", options={"xatol": 1e-14 * max(1.0, abs(ac.delta_at_min))})
    x = float(res.x) if res.fun <= gap2(ac.delta_at_min) else ac.delta_at_min
    x0, g0 = two_level_fit(template.with_(delta=x), n_max, (i, j))
    if abs(x0 - x) > step:
        return replace(ac, delta_at_min=x, min_gap=math.sqrt(gap2(x)))
    return replace(ac, delta_at_min=x0, min_gap=g0)


def scan_anticrossings(params_grid, n_max=None, *, ordering: str = "weyl", workers: int = 1,
                       require_regions: bool = True, polish: bool = True) -> list[Anticrossing]:
    """Track levels over a detuning grid and return the region-1/region-3 anticrossings.

    With ``polish`` the parabolic estimate is followed by a bounded minimization
    of the exact gap, so anticrossings narrower than the grid step are resolved.
    """
    params_grid = list(params_grid)
    n_max = resolve_n_max(max(params_grid, key=lambda p: p.delta), n_max)
    scan = track_levels(params_grid, n_max, ordering=ordering, workers=workers)
    found = find_anticrossings(scan, require_regions=require_regions)
    if not polish or len(params_grid) < 2:
        return found
    step = float(np.max(np.abs(np.diff(scan.deltas))))
    return [polish_anticrossing(ac, params_grid[0], n_max, step) for ac in found]


def detuning_grid(m: float, f_ratio: float, half_width: float, points: int, **kw) -> list[ModelParams]:
    """Grid in ``2 delta / alpha`` around ``m`` at fixed drive amplitude (``f_crit`` taken at ``m``)."""
    ms = np.linspace(m - half_width, m + half_width, points)
    return [ModelParams.from_ratios(x, f_ratio, f_ref_m=m, **kw) for x in ms]


class MixingError(ValueError):
    pass


def mixing_angle(level: Level) -> float:
    """Angle (degrees) of a state between its region-1 and region-3 components.

    For ``cos(theta)|1> + sin(theta)|3>`` the region-1 weight is ``cos^2(theta)``;
    a fully hybridized state sits at 45.
    """
    return math.degrees(math.acos(math.sqrt(min(max(level.weight_1, 0.0), 1.0))))


def resonant_pairs(params: ModelParams, n_max=None, *, ordering: str = "weyl",
                   max_deviation: float = 10.0) -> list[tuple[int, int]]:
    """Hybridized adjacent eigenpairs at ``delta0 = m0 alpha / 2`` without high-order terms."""
    base = params.with_(delta=params.m_nearest * params.alpha / 2, alpha_q={})
    sp = diagonalize(base, n_max, ordering=ordering)
    cands = []
    for i in range(len(sp.levels) - 1):
        a, b = sp.levels[i], sp.levels[i + 1]
        if any(lv.label not in ("1", "3") or lv.near_boundary for lv in (a, b)):
            continue
        dev = max(abs(mixing_angle(a) - 45.0), abs(mixing_angle(b) - 45.0))
        if dev <= max_deviation:
            cands.append((dev, i))
    taken, out = set(), []
    for _, i in sorted(cands):
        if i in taken or i + 1 in taken:
            continue
        taken.update((i, i + 1))
        out.append((i, i + 1))
    return sorted(out)


def predict_shift(pair: tuple[int, int], params: ModelParams, n_max=None, *,
                  ordering: str = "weyl", max_deviation: float = 10.0) -> float:
    """First-order displacement of an anticrossing caused by the high-order terms.

    ``pair`` indexes two hybridized eigenstates of the Hamiltonian without
    high-order terms at ``delta0 = m0 alpha / 2``.  Their sum and difference
    recover the unmixed states; the one with fewer photons belongs to region 1.
    """
    base = params.with_(delta=params.m_nearest * params.alpha / 2, alpha_q={})
    sp = diagonalize(base, resolve_n_max(params, n_max), ordering=ordering)
    for i in pair:
        ang = mixing_angle(sp.levels[i])
        if abs(ang - 45.0) > max_deviation:
            raise MixingError(f"state {i} mixing angle {ang:.1f} deg is too far from 45")
    va, vb = sp.basis[:, pair[0]], sp.basis[:, pair[1]]
    dim = va.size
    nvec = np.arange(dim, dtype=float)
    vdiag = nonlinear_diagonal(params, dim)
    plus, minus = (va + vb) / math.sqrt(2), (va - vb) / math.sqrt(2)
    n_p, n_m = np.sum(nvec * plus**2), np.sum(nvec * minus**2)
    v_p, v_m = np.sum(vdiag * plus**2), np.sum(vdiag * minus**2)
    (n1, v1), (n3, v3) = sorted(((n_p, v_p), (n_m, v_m)))
    return float((v3 - v1) / (n3 - n1))
