"""Stationary solution of the full master equation and region occupations."""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import classical
from .fock import build_hamiltonian, build_lindblad_superoperator, resolve_n_max, unvec, vec
from .params import ModelParams
from .spectrum import QuasienergySpectrum, diagonalize

DENSE_LIMIT = 40  # Hilbert-space dimension up to which a dense fallback solve is affordable
BAND_WARNING = 0.05
SPLIT_FLAG = 0.01


class SteadyStateError(RuntimeError):
    def __init__(self, message: str, residual: float = math.nan):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass
class SteadyState:
    params: ModelParams
    rho: np.ndarray
    residual: float
    method: str
    occupations: tuple[float, float, float] | None = None
    band_population: float = math.nan
    split_population: float = math.nan
    warnings: list[str] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    @property
    def mean_intensity(self) -> float:
        return float(np.real(np.diag(self.rho)) @ np.arange(self.dim))

    @property
    def mean_a(self) -> complex:
        return complex(np.sum(np.sqrt(np.arange(1, self.dim)) * np.diag(self.rho, -1)))


def _trace_system(gen: sp.csr_matrix, dim: int):
    """Replace the first row of ``L x = 0`` by the trace constraint ``tr rho = 1``."""
    n = dim * dim
    trace_idx = np.arange(dim) * (dim + 1)
    gen = gen.tolil()
    scale = float(abs(gen).max()) or 1.0
    gen[0, :] = 0.0
    gen[0, trace_idx] = scale
    rhs = np.zeros(n, dtype=complex)
    rhs[0] = scale
    return gen.tocsc(), rhs


def _finish(v: np.ndarray, dim: int) -> np.ndarray:
    rho = unvec(v, dim)
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def steady_state(params: ModelParams, n_max: int | str | None = None, *, method: str = "direct",
                 x0: np.ndarray | None = None, tol: float = 1e-12, check: bool = True) -> SteadyState:
    """Density matrix with ``L[rho] = 0`` and unit trace.

    ``method="direct"`` uses a sparse LU factorization, ``"iterative"`` a
    preconditioned GMRES run seeded with ``x0``.  When either stagnates, a dense
    solve is attempted for Hilbert-space dimensions up to ``DENSE_LIMIT``.
    """
    if not params.gamma > 0:
        raise ValueError("a stationary state requires gamma > 0")
    n_max = resolve_n_max(params, n_max)
    dim = n_max + 1
    h = build_hamiltonian(params, n_max, check=check)
    gen = build_lindblad_superoperator(params, hamiltonian=h)
    a_mat, rhs = _trace_system(gen, dim)
    gnorm = float(abs(gen).max())

    def residual(rho):
        return float(np.linalg.norm(gen @ vec(rho)) / gnorm)

    used, rho, err = method, None, None
    try:
        if method == "direct":
            v = spla.splu(a_mat).solve(rhs)
        elif method == "iterative":
            ilu = spla.spilu(a_mat, drop_tol=1e-5, fill_factor=20)
            pre = spla.LinearOperator(a_mat.shape, ilu.solve, dtype=complex)
            start = None if x0 is None else vec(np.asarray(x0, dtype=complex))
            v, info = spla.gmres(a_mat, rhs, x0=start, M=pre, rtol=tol, atol=0.0, restart=200, maxiter=200)
            if info != 0:
                raise SteadyStateError("GMRES stagnated", float(np.linalg.norm(a_mat @ v - rhs)))
        else:
            raise ValueError(f"unknown method {method!r}")
        if not np.all(np.isfinite(v)):
            raise SteadyStateError("non-finite solution")
        rho = _finish(v, dim)
        if residual(rho) > 1e-8:
            raise SteadyStateError("inaccurate sparse solution", residual(rho))
    except (SteadyStateError, RuntimeError, np.linalg.LinAlgError) as exc:
        err = exc
    if rho is None:
        if dim > DENSE_LIMIT:
            res = getattr(err, "residual", math.nan)
            raise SteadyStateError(f"sparse solve failed ({err})", res) from err
        v = np.linalg.lstsq(a_mat.toarray(), rhs, rcond=None)[0]
        rho, used = _finish(v, dim), "dense"
    return SteadyState(params, rho, residual(rho), used)


def trace_distance(rho_a: np.ndarray, rho_b: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(rho_a - rho_b))))


def linear_oscillator_state(params: ModelParams) -> tuple[complex, float]:
    """``(<a>, <n>)`` of the exact stationary state of the driven damped linear oscillator.

    Without nonlinearity ``d<a>/dt = (i delta - gamma/2) <a> - i f``, so the
    state is a thermal state displaced by ``f / (delta + i gamma/2)``.
    """
    a = params.drive / (params.delta + 0.5j * params.gamma)
    return a, abs(a) ** 2 + params.n_thermal


def region_occupations(rho: np.ndarray, spectrum: QuasienergySpectrum) -> tuple[tuple[float, float, float], dict]:
    """Populations of regions 1, 2, 3 by projection on labeled eigenstates.

    Hybridized states are split by their region-1 weight, and ``3'`` states count
    toward region 3.  The diagnostics report the population of states close to a
    region boundary and the population whose assignment depends on the split.
    """
    if rho.shape[0] != spectrum.basis.shape[0]:
        raise ValueError("density matrix and spectrum have different dimensions")
    v = spectrum.basis
    pops = np.real(np.einsum("ij,ik,kj->j", v.conj(), rho, v))
    if spectrum.levels[0].label is None:
        raise ValueError("the spectrum carries no region labels")
    p = pops @ spectrum.weights
    near = np.array([lv.near_boundary for lv in spectrum.levels])
    w1 = np.array([lv.weight_1 for lv in spectrum.levels])
    mixed = np.array([lv.label in ("1", "3") for lv in spectrum.levels]) & (w1 > 0.05) & (w1 < 0.95)
    diag = {"band": float(pops[near].sum()), "split": float(pops[mixed].sum()),
            "total": float(pops.sum())}
    return (float(p[0]), float(p[1]), float(p[2])), diag


def attach_occupations(state: SteadyState, spectrum: QuasienergySpectrum | None = None) -> SteadyState:
    if spectrum is None:
        spectrum = diagonalize(state.params, state.dim - 1)
    occ, diag = region_occupations(state.rho, spectrum)
    state.occupations = occ
    state.band_population = diag["band"]
    state.split_population = diag["split"]
    if diag["band"] > BAND_WARNING:
        msg = f"{diag['band']:.1%} of the population sits in states next to a region boundary"
        state.warnings.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    if diag["split"] > SPLIT_FLAG:
        state.warnings.append(f"{diag['split']:.1%} of the population is split between regions 1 and 3")
    return state


def coherent_overlaps(alphas: np.ndarray, dim: int) -> np.ndarray:
    """Matrix ``<n|alpha>`` of shape ``(dim, len(alphas))`` computed by recursion."""
    alphas = np.asarray(alphas, dtype=complex).ravel()
    out = np.empty((dim, alphas.size), dtype=complex)
    out[0] = np.exp(-0.5 * np.abs(alphas) ** 2)
    for n in range(1, dim):
        out[n] = out[n - 1] * alphas / math.sqrt(n)
    return out


def region_mask(portrait: classical.PhasePortrait, alphas: np.ndarray) -> np.ndarray:
    """Region index (1, 2 or 3) of each phase-space point.

    Below the separatrix quasienergy only region 2 exists.  Between the
    separatrix and the local maximum the region-1 orbits stay inside the saddle
    intensity and region-3 orbits outside it.
    """
    eps = portrait.hamiltonian.value(alphas)
    out = np.full(eps.shape, 3, dtype=int)
    if not portrait.bistable:
        out[:] = 2
        return out
    out[eps <= portrait.eps_sep] = 2
    inner = (eps > portrait.eps_sep) & (eps < portrait.eps_1) & (np.abs(alphas) ** 2 < portrait.xs ** 2)
    out[inner] = 1
    return out


def husimi_occupations(rho: np.ndarray, portrait: classical.PhasePortrait, *, points: int = 161) -> tuple[float, float, float]:
    """Region populations from the Husimi function integrated over classical region masks."""
    dim = rho.shape[0]
    r = math.sqrt(dim) + 3.0
    x = np.linspace(-r, r, points)
    xx, yy = np.meshgrid(x, x)
    alphas = (xx + 1j * yy).ravel()
    c = coherent_overlaps(alphas, dim)
    q = np.real(np.sum(c.conj() * (rho @ c), axis=0))
    mask = region_mask(portrait, alphas)
    tot = q.sum()
    return tuple(float(q[mask == k].sum() / tot) for k in (1, 2, 3))


@dataclass(frozen=True)
class SweepRow:
    delta: float
    p1: float
    p2: float
    p3: float
    mean_intensity: float
    residual: float
    band: float
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


def _sweep_point(args) -> SweepRow:
    params, n_max = args
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            st = attach_occupations(steady_state(params, n_max))
        p1, p2, p3 = st.occupations
        return SweepRow(params.delta, p1, p2, p3, st.mean_intensity, st.residual, st.band_population)
    except Exception as exc:  # recorded per point, the sweep goes on
        nan = math.nan
        return SweepRow(params.delta, nan, nan, nan, nan, nan, nan, f"{type(exc).__name__}: {exc}")


def default_workers() -> int:
    env = os.environ.get("KERRMP_WORKERS")
    return max(1, int(env)) if env else 1


def sweep_occupations(params_grid, n_max: int | str | None = None, *, workers: int | None = None) -> list[SweepRow]:
    """Steady state and region occupations for every grid point, in grid order."""
    grid = list(params_grid)
    workers = default_workers() if workers is None else workers
    jobs = [(p, n_max) for p in grid]
    if workers <= 1 or len(grid) < 2:
        return [_sweep_point(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_point, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def peak_positions(x, y, *, min_prominence: float = 0.0) -> list[tuple[float, float, float]]:
    """Local maxima ``(position, height, prominence)`` refined by a parabola through three points."""
    from scipy.signal import find_peaks

    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    idx, props = find_peaks(y, prominence=min_prominence)
    out = []
    for k, prom in zip(idx, props["prominences"]):
        xs, ys = x[k - 1:k + 2], y[k - 1:k + 2]
        # vertex of the parabola through three (possibly unevenly spaced) points
        d1 = (ys[1] - ys[0]) / (xs[1] - xs[0])
        d2 = (ys[2] - ys[1]) / (xs[2] - xs[1])
        curv = (d2 - d1) / (xs[2] - xs[0])
        x0 = x[k]
        if curv < 0:
            x0 = float(np.clip(0.5 * (xs[0] + xs[1]) - d1 / (2 * curv), xs[0], xs[2]))
        out.append((float(x0), float(y[k]), float(prom)))
    return out
