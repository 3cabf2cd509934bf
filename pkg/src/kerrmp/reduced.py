"""Master equation in the basis of quasiclassical region states ``(n, r)``.

Populations of Bohr-Sommerfeld levels in regions 1, 2 and 3 relax through
matrix elements of ``a`` taken from orbit Fourier coefficients.  Partner levels
of regions 1 and 3 are coupled by the tunneling amplitude through their
coherence ``rho13``.

Transition bookkeeping: a level at ``eps`` reaches ``eps -+ k Omega`` through
``a`` (rate ``gamma (N+1) |a_k|^2``) or ``a^+`` (rate ``gamma N |a_k|^2``).  The
target is the nearest level of the same region while the target quasienergy
stays inside its window.  Targets beyond the outermost level, or past a stable
point, are dropped.  A transition across the separatrix lands on the
nearest levels of the regions present on the other side, split in proportion
to their periods (the classical density of states).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import expm

from . import classical
from .params import ModelParams
from .tunneling import decoherence_rates, tunneling_amplitude


class ReducedSolveError(RuntimeError):
    def __init__(self, message: str, condition: float = math.nan):
        super().__init__(f"{message} (condition estimate {condition:.2e})")
        self.condition = condition


@dataclass(frozen=True)
class RegionLevel:
    n: int
    region: int
    eps: float


@dataclass(frozen=True)
class Pair:
    i1: int  # index of the region-1 level
    i3: int  # index of the partner region-3 level
    t: float
    mismatch: float  # eps_1 - eps_3
    width: float  # decay rate of the coherence is width / 2


@dataclass
class ReducedGenerator:
    params: ModelParams
    levels: list[RegionLevel]
    pairs: list[Pair]
    rates: sp.csr_matrix  # rates[j, i] = transition rate i -> j (off-diagonal only)
    unpaired: list[int] = field(default_factory=list)
    portrait: classical.PhasePortrait | None = None

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    def population_block(self) -> sp.csr_matrix:
        """Rate-equation generator ``dp/dt = M p`` for the populations alone."""
        r = self.rates.tocsr()
        out = np.asarray(r.sum(axis=0)).ravel()
        return (r - sp.diags(out)).tocsr()

    def matrix(self) -> sp.csr_matrix:
        """Real generator acting on ``(p, Re rho13, Im rho13)``."""
        nl, npair = self.n_levels, self.n_pairs
        rows, cols, vals = [], [], []
        m = self.population_block().tocoo()
        rows += list(m.row)
        cols += list(m.col)
        vals += list(m.data)
        for k, pr in enumerate(self.pairs):
            x, y = nl + k, nl + npair + k
            # d p1 = -2 t Im z, d p3 = +2 t Im z
            rows += [pr.i1, pr.i3]
            cols += [y, y]
            vals += [-2 * pr.t, 2 * pr.t]
            # dz/dt = -i d z - i t (p3 - p1) - (w/2) z
            rows += [x, x, y, y, y, y]
            cols += [x, y, y, x, pr.i3, pr.i1]
            vals += [-0.5 * pr.width, pr.mismatch, -0.5 * pr.width, -pr.mismatch, -pr.t, pr.t]
        dim = nl + 2 * npair
        return sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))

    def eliminated(self) -> sp.csr_matrix:
        """Population generator with each coherence replaced by its stationary value."""
        m = self.population_block().tolil()
        for pr in self.pairs:
            lam = _lorentz(pr.width, pr.t, pr.mismatch)
            m[pr.i1, pr.i1] -= lam
            m[pr.i3, pr.i1] += lam
            m[pr.i3, pr.i3] -= lam
            m[pr.i1, pr.i3] += lam
        return m.tocsr()


def _lorentz(width, t, mismatch):
    if t == 0.0 or width == 0.0:
        return 0.0
    return width * t * t / (mismatch * mismatch + 0.25 * width * width)


@dataclass
class ReducedState:
    generator: ReducedGenerator
    diag: np.ndarray
    offdiag: np.ndarray  # complex rho13 per pair
    method: str

    @property
    def levels(self) -> list[RegionLevel]:
        return self.generator.levels

    def occupations(self) -> tuple[float, float, float]:
        reg = np.array([lv.region for lv in self.levels])
        return tuple(float(self.diag[reg == r].sum()) for r in (1, 2, 3))

    def currents(self) -> np.ndarray:
        """Probability current from region 1 into region 3 through each pair."""
        return np.array([2 * pr.t * z.imag for pr, z in zip(self.generator.pairs, self.offdiag)])

    def level_table(self) -> np.ndarray:
        return np.array([(lv.n, lv.region, lv.eps, p) for lv, p in zip(self.levels, self.diag)]).reshape(-1, 4)

    def pair_table(self) -> np.ndarray:
        rows = []
        for pr, z, j in zip(self.generator.pairs, self.offdiag, self.currents()):
            rows.append((self.levels[pr.i1].n, pr.t, pr.mismatch, abs(z), j))
        return np.array(rows).reshape(-1, 5)


def region_levels(portrait: classical.PhasePortrait, *, n_cap: int | None = None) -> list[RegionLevel]:
    out = []
    for r in (1, 2, 3) if portrait.bistable else (2,):
        kw = {"n_cap": n_cap} if r == 3 else {}
        out += [RegionLevel(n, r, e) for n, e in classical.bohr_sommerfeld_levels(portrait, r, **kw)]
    return out


def _orbit(portrait, lv: RegionLevel):
    return classical.trace_orbit(portrait, lv.region, lv.eps)


def _target_regions(portrait, region: int, eps: float) -> list[int]:
    """Regions receiving a transition from ``region`` to ``eps``.

    Leaving the window through the separatrix hands the transition to the
    regions on the other side; leaving it through a stable point (or a
    quasienergy without orbits) yields no target.
    """
    lo, hi = portrait.window(region)
    if lo < eps < hi:
        return [region]
    crossed = portrait.bistable and ((region == 2 and eps >= hi) or (region in (1, 3) and eps <= lo))
    return list(portrait.region_of(eps)) if crossed else []


def _period(portrait, region: int, eps: float) -> float:
    try:
        return classical.orbit_integrals(portrait, region, eps).period
    except classical.ClassicalError:
        return 1.0


def build_reduced_generator(params: ModelParams, *, n_cap: int | None = None, prefactor: float = 1.0,
                            ordering: str = "weyl", portrait: classical.PhasePortrait | None = None) -> ReducedGenerator:
    """Assemble the reduced master equation for ``params``.

    ``n_cap`` bounds the region-3 quantum number; ``prefactor`` scales the
    tunneling amplitude.  Cross-region matrix elements of ``a`` and coherences
    between non-partner levels are not included.
    """
    if portrait is None:
        portrait = classical.find_stationary_points(params, ordering)
    levels = region_levels(portrait, n_cap=n_cap)
    orbits = [_orbit(portrait, lv) for lv in levels]
    by_region = {r: [i for i, lv in enumerate(levels) if lv.region == r] for r in (1, 2, 3)}
    eps_of = {r: np.array([levels[i].eps for i in idx]) for r, idx in by_region.items()}

    def nearest(r, e):
        idx = by_region[r]
        if not idx:
            return None
        return idx[int(np.argmin(np.abs(eps_of[r] - e)))]

    g, nth = params.gamma, params.n_thermal
    acc: dict[tuple[int, int], float] = {}
    for i, (lv, orb) in enumerate(zip(levels, orbits)):
        om = orb.omega
        for k in range(-orb.kmax, orb.kmax + 1):
            if k == 0:
                continue
            ak2 = abs(orb.harmonic(k)) ** 2
            # lowering (a) moves eps -> eps - k Omega, raising (a^+) moves eps -> eps + k Omega
            for sign, rate in ((-1, g * (nth + 1) * ak2), (1, g * nth * ak2)):
                if rate == 0.0:
                    continue
                target = lv.eps + sign * k * om
                regs = _target_regions(portrait, lv.region, target)
                if not regs:
                    continue
                if regs == [lv.region]:
                    j = nearest(lv.region, target)
                    if abs(levels[j].eps - target) > 0.75 * orbits[j].omega:
                        continue  # beyond the outermost level of the region
                    split = [(j, 1.0)]
                elif len(regs) == 1:
                    split = [(nearest(regs[0], target), 1.0)]
                else:
                    w = np.array([_period(portrait, r, target) for r in regs])
                    split = [(nearest(r, target), wr / w.sum()) for r, wr in zip(regs, w)]
                for j, frac in split:
                    if j is None or j == i:
                        continue
                    scale = 1.0
                    if levels[j].region == lv.region:
                        # average with the target orbit's harmonic for the same transition
                        oj = orbits[j]
                        kj = int(round(sign * (levels[j].eps - lv.eps) / oj.omega))
                        scale = 0.5 * (1.0 + abs(oj.harmonic(kj)) ** 2 / ak2)
                    acc[(j, i)] = acc.get((j, i), 0.0) + rate * frac * scale

    n = len(levels)
    if acc:
        keys = np.array(list(acc.keys()))
        rates = sp.csr_matrix((list(acc.values()), (keys[:, 0], keys[:, 1])), shape=(n, n))
    else:
        rates = sp.csr_matrix((n, n))

    pairs, unpaired = [], []
    for i1 in by_region[1]:
        e1 = levels[i1].eps
        i3 = nearest(3, e1)
        om3 = orbits[i3].omega if i3 is not None else 0.0
        if i3 is None or abs(levels[i3].eps - e1) > 0.5 * om3:
            unpaired.append(i1)
            continue
        e_mid = 0.5 * (e1 + levels[i3].eps)
        t = tunneling_amplitude(portrait, e_mid, prefactor=prefactor).value
        width = decoherence_rates(params, orbits[i1], orbits[i3])[1]
        pairs.append(Pair(i1, i3, t, e1 - levels[i3].eps, width))
    return ReducedGenerator(params, levels, pairs, rates, unpaired, portrait)


def _solve(mat: sp.csr_matrix, norm_cols: int):
    dim = mat.shape[0]
    a = mat.tolil()
    a[0, :] = 0.0
    a[0, :norm_cols] = 1.0
    rhs = np.zeros(dim)
    rhs[0] = 1.0
    a = a.tocsc()
    try:
        x = spla.splu(a).solve(rhs)
    except RuntimeError as exc:
        cond = np.linalg.cond(a.toarray()) if dim <= 2000 else math.inf
        raise ReducedSolveError(f"singular reduced system ({exc})", cond) from exc
    if not np.all(np.isfinite(x)):
        cond = np.linalg.cond(a.toarray()) if dim <= 2000 else math.inf
        raise ReducedSolveError("non-finite reduced solution", cond)
    return x


def reduced_steady_state(gen: ReducedGenerator, *, eliminate: bool = False) -> ReducedState:
    """Stationary populations and coherences.

    With ``eliminate`` the coherences are substituted by their stationary form
    ``t (p1 - p3) / (mismatch - i width/2)`` before solving for the populations.
    """
    if not gen.params.gamma > 0:
        raise ValueError("a stationary state requires gamma > 0")
    nl, npair = gen.n_levels, gen.n_pairs
    if eliminate:
        p = _solve(gen.eliminated(), nl)
        z = np.array([pr.t * (p[pr.i1] - p[pr.i3]) / (pr.mismatch - 0.5j * pr.width) if pr.t else 0j
                      for pr in gen.pairs], dtype=complex)
        return ReducedState(gen, p, z, "eliminated")
    x = _solve(gen.matrix(), nl)
    return ReducedState(gen, x[:nl], x[nl:nl + npair] + 1j * x[nl + npair:], "full")


def evolve(gen: ReducedGenerator, diag0: np.ndarray, offdiag0: np.ndarray, times) -> tuple[np.ndarray, np.ndarray]:
    """Populations and coherences at ``times`` from the matrix exponential of the generator."""
    mat = gen.matrix().toarray()
    nl, npair = gen.n_levels, gen.n_pairs
    y0 = np.concatenate([np.asarray(diag0, float), np.real(offdiag0), np.imag(offdiag0)])
    ys = np.array([expm(mat * t) @ y0 for t in np.asarray(times, dtype=float)])
    return ys[:, :nl], ys[:, nl:nl + npair] + 1j * ys[:, nl + npair:]
