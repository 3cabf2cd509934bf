"""Composite numerical experiments built on the solver tiers.

Each function returns plain data (arrays, dataclasses) so that the command line
front end, the demos and the acceptance tests share one implementation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import linregress, spearmanr

from . import spectrum as spec
from . import tunneling
from .lindblad import peak_positions, sweep_occupations
from .params import ModelParams


# ----------------------------------------------------------------- anticrossings

def anticrossings_near(m: float, f_ratio: float, *, alpha3_ratio: float = 0.0, half_width: float = 0.25,
                       points: int = 201, n_max: int | None = None, workers: int = 1,
                       center: float | None = None) -> list[spec.Anticrossing]:
    """Region-1/region-3 anticrossings in ``2 delta/alpha`` within ``center +- half_width``.

    ``center`` defaults to ``m``; the drive is held at its value for ``m``.
    """
    c = m if center is None else center
    grid = [ModelParams.from_ratios(x, f_ratio, alpha3_ratio=alpha3_ratio, f_ref_m=m)
            for x in np.linspace(c - half_width, c + half_width, points)]
    n_max = n_max if n_max is not None else int(2 * m + 20)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return spec.scan_anticrossings(grid, n_max, workers=workers)


def predicted_positions(m: int, f_ratio: float, alpha3_ratio: float, *, n_max: int | None = None,
                        alpha: float = 1.0) -> dict[tuple[int, int], float]:
    """First-order anticrossing positions in ``2 delta/alpha`` for the resonant pairs at ``m``."""
    p = ModelParams.from_ratios(m, f_ratio, alpha=alpha, alpha3_ratio=alpha3_ratio)
    n_max = n_max if n_max is not None else int(2 * m + 20)
    out = {}
    for pair in spec.resonant_pairs(p, n_max):
        out[pair] = m + 2 * spec.predict_shift(pair, p, n_max) / alpha
    return out


@dataclass
class ShiftComparison:
    pair: tuple[int, int]
    predicted: float  # shift of 2 delta / alpha
    measured: float

    @property
    def relative_error(self) -> float:
        return abs(self.measured - self.predicted) / abs(self.predicted)


def compare_shifts(m: int, f_ratio: float, alpha3_ratio: float, *, half_width: float = 0.5,
                   points: int = 201, n_max: int | None = None) -> tuple[list[ShiftComparison], list[spec.Anticrossing]]:
    """Match measured anticrossings near ``m`` to first-order predictions.

    Predicted and measured positions are both sorted and matched in order of
    increasing mean quasienergy, which is the order of the pair indices.
    """
    pred = predicted_positions(m, f_ratio, alpha3_ratio, n_max=n_max)
    if not pred:
        return [], []
    lo, hi = min(pred.values()), max(pred.values())
    center = 0.5 * (lo + hi)
    acs = anticrossings_near(m, f_ratio, alpha3_ratio=alpha3_ratio, half_width=max(half_width, hi - lo),
                             points=points, n_max=n_max, center=center)
    acs = sorted(acs, key=lambda a: a.mean_quasienergy)
    out = []
    for pair in sorted(pred):
        # the measured pair indices refer to the perturbed spectrum; match by index
        hits = [a for a in acs if a.level_pair == pair]
        if hits:
            out.append(ShiftComparison(pair, pred[pair] - m, 2 * hits[0].delta_at_min - m))
    return out, acs


# --------------------------------------------------------------- P2 peak sweeps

@dataclass
class PeakSweep:
    x: np.ndarray  # 2 delta / alpha
    p2: np.ndarray
    rows: list
    peaks: list[tuple[float, float, float]]  # (position, height, prominence)

    @property
    def step(self) -> float:
        return float(np.min(np.diff(self.x)))


def occupation_curve(m: float, f_ratio: float, xs, *, alpha3_ratio: float = 0.0, gamma: float, n_thermal: float,
                     n_max: int | None = None, workers: int = 1, min_prominence: float = 1e-6) -> PeakSweep:
    """Stationary P2 along ``2 delta/alpha = xs`` at fixed drive, with detected peaks."""
    xs = np.unique(np.asarray(xs, dtype=float))
    grid = [ModelParams.from_ratios(x, f_ratio, alpha3_ratio=alpha3_ratio, gamma=gamma, n_thermal=n_thermal,
                                    f_ref_m=m) for x in xs]
    n_max = n_max if n_max is not None else int(2 * m + 22)
    rows = sweep_occupations(grid, n_max, workers=workers)
    p2 = np.array([r.p2 for r in rows])
    good = np.isfinite(p2)
    peaks = peak_positions(xs[good], p2[good], min_prominence=min_prominence)
    return PeakSweep(xs, p2, rows, peaks)


def match_peaks(peaks, anticrossings, tolerance: float) -> list[tuple[float, spec.Anticrossing | None]]:
    """Pair every peak position with the nearest anticrossing within ``tolerance`` (in 2 delta/alpha)."""
    out = []
    for pos, *_ in peaks:
        best = min(anticrossings, key=lambda a: abs(2 * a.delta_at_min - pos), default=None)
        if best is None or abs(2 * best.delta_at_min - pos) > tolerance:
            out.append((pos, None))
        else:
            out.append((pos, best))
    return out


@dataclass
class PeakMotion:
    alpha3: np.ndarray
    positions: dict[tuple[int, int], np.ndarray]  # per anticrossing pair, peak position per alpha3
    fits: dict[tuple[int, int], tuple[float, float, float]]  # slope, intercept, r^2
    merged_spread: float  # spread of the peak positions at alpha3 = 0
    step: float
    sweeps: list[PeakSweep] = field(default_factory=list)
    unmatched: int = 0


def peak_motion(m: int, f_ratio: float, alpha3_values, *, gamma: float, n_thermal: float,
                half_width: float = 0.01, step: float = 5e-5, n_max: int | None = None,
                workers: int = 1) -> PeakMotion:
    """Track P2 peaks against ``alpha3``.

    For each ``alpha3`` the sweep window is centered on the spread of the
    first-order anticrossing predictions.  Peaks are identified through the
    anticrossing they sit on; at ``alpha3 = 0`` the merged peak is assigned to
    every pair.
    """
    alpha3_values = np.asarray(sorted(alpha3_values), dtype=float)
    positions: dict[tuple[int, int], list[float]] = {}
    sweeps, unmatched, spread = [], 0, math.nan
    for a3 in alpha3_values:
        if a3 == 0:
            c = float(m)
        else:
            pred = predicted_positions(m, f_ratio, a3, n_max=n_max)
            c = 0.5 * (min(pred.values()) + max(pred.values()))
        pts = int(round(2 * half_width / step)) + 1
        xs = np.linspace(c - half_width, c + half_width, pts)
        sw = occupation_curve(m, f_ratio, xs, alpha3_ratio=a3, gamma=gamma, n_thermal=n_thermal,
                              n_max=n_max, workers=workers)
        sweeps.append(sw)
        acs = anticrossings_near(m, f_ratio, alpha3_ratio=a3, half_width=half_width, points=pts,
                                 n_max=n_max, center=c)
        if a3 == 0:
            pos = [p for p, *_ in sw.peaks]
            spread = (max(pos) - min(pos)) if pos else math.nan
            continue
        for pos, ac in match_peaks(sw.peaks, acs, step):
            if ac is None:
                unmatched += 1
                continue
            positions.setdefault(ac.level_pair, []).append((a3, pos))
    zero = [p for p, *_ in sweeps[0].peaks] if alpha3_values[0] == 0 else []
    merged = float(np.mean(zero)) if zero else math.nan
    out_pos, fits = {}, {}
    for pair, vals in positions.items():
        a = [0.0] + [v[0] for v in vals] if zero else [v[0] for v in vals]
        y = [merged] + [v[1] for v in vals] if zero else [v[1] for v in vals]
        out_pos[pair] = np.array(y)
        if len(a) >= 3:
            lr = linregress(a, y)
            fits[pair] = (float(lr.slope), float(lr.intercept), float(lr.rvalue ** 2))
    return PeakMotion(alpha3_values, out_pos, fits, spread, step, sweeps, unmatched)


def log_refined_grid(centers, lo: float, hi: float, points: int, *, inner: float = 1e-7,
                     outer: float = 2e-3, per_side: int = 25) -> np.ndarray:
    """Uniform grid on ``[lo, hi]`` plus log-spaced offsets around each center."""
    base = np.linspace(lo, hi, points)
    offs = np.geomspace(inner, outer, per_side)
    extra = [c + s * offs for c in centers for s in (-1.0, 1.0)] + [np.asarray(centers, dtype=float)]
    xs = np.concatenate([base] + extra)
    return np.unique(xs[(xs >= lo) & (xs <= hi)])


@dataclass
class Extinction:
    gammas: np.ndarray
    pairs: list[tuple[int, int]]
    t: dict[tuple[int, int], float]
    prominence: dict[tuple[int, int], np.ndarray]  # per pair, prominence per gamma (0 when absent)
    main: tuple[int, int] | None
    side: list[tuple[int, int]]
    extinction: dict[tuple[int, int], float]  # first gamma at which the side peak is gone
    rank_correlation: float
    monotone: dict[tuple[int, int], bool]
    sweeps: list[PeakSweep] = field(default_factory=list)


def side_peak_extinction(m: int, f_ratio: float, alpha3_ratio: float, gammas, *, n_thermal: float,
                         half_width: float = 0.01, points: int = 201, n_max: int | None = None,
                         min_prominence: float = 1e-6, workers: int = 1) -> Extinction:
    """Prominence of every anticrossing-borne P2 peak against the damping rate.

    The main peak is the one that survives to the largest damping; all others
    are side peaks.  A side peak's extinction rate is the smallest damping at
    which it is no longer detected.  Its tunneling amplitude is half the minimal
    gap of its anticrossing.
    """
    gammas = np.asarray(sorted(gammas), dtype=float)
    pred = predicted_positions(m, f_ratio, alpha3_ratio, n_max=n_max)
    c = 0.5 * (min(pred.values()) + max(pred.values()))
    acs = anticrossings_near(m, f_ratio, alpha3_ratio=alpha3_ratio, half_width=half_width, points=points,
                             n_max=n_max, center=c)
    pairs = [a.level_pair for a in acs]
    t = {a.level_pair: 0.5 * a.min_gap for a in acs}
    xs = log_refined_grid([2 * a.delta_at_min for a in acs], c - half_width, c + half_width, points)
    prom = {p: np.zeros(gammas.size) for p in pairs}
    sweeps = []
    for k, g in enumerate(gammas):
        sw = occupation_curve(m, f_ratio, xs, alpha3_ratio=alpha3_ratio, gamma=g, n_thermal=n_thermal,
                              n_max=n_max, workers=workers, min_prominence=min_prominence)
        sweeps.append(sw)
        for pos, ac in _assign_local(sw, acs):
            if ac is not None:
                prom[ac.level_pair][k] = max(prom[ac.level_pair][k], next(pr for p, _, pr in sw.peaks if p == pos))
    seen = [p for p in pairs if prom[p].max() > 0]
    if not seen:
        return Extinction(gammas, pairs, t, prom, None, [], {}, math.nan, {}, sweeps)
    last = {p: max(k for k in range(gammas.size) if prom[p][k] > 0) for p in seen}
    main = max(seen, key=lambda p: (last[p], prom[p][last[p]]))
    side = [p for p in seen if p != main]
    ext = {}
    for p in side:
        gone = [k for k in range(gammas.size) if k > last[p]]
        ext[p] = float(gammas[gone[0]]) if gone else math.inf
    mono = {}
    for p in side:
        first = min(k for k in range(gammas.size) if prom[p][k] > 0)
        seq = prom[p][first:]
        mono[p] = bool(np.all(np.diff(seq) <= 0))
    rho = math.nan
    if len(side) >= 2:
        rho = float(spearmanr([ext[p] for p in side], [t[p] for p in side]).statistic)
    return Extinction(gammas, pairs, t, prom, main, side, ext, rho, mono, sweeps)


def _assign_local(sw: PeakSweep, acs) -> list[tuple[float, spec.Anticrossing | None]]:
    """Attach each peak to the nearest anticrossing if they are within the local grid spacing."""
    out = []
    for pos, *_ in sw.peaks:
        best = min(acs, key=lambda a: abs(2 * a.delta_at_min - pos), default=None)
        k = int(np.clip(np.searchsorted(sw.x, pos), 1, sw.x.size - 1))
        local = sw.x[min(k + 1, sw.x.size - 1)] - sw.x[max(k - 2, 0)]
        if best is None or abs(2 * best.delta_at_min - pos) > local:
            out.append((pos, None))
        else:
            out.append((pos, best))
    return out


# ------------------------------------------------------------ WKB calibration

@dataclass
class WKBCalibration:
    anticrossings: list[spec.Anticrossing]
    half_gaps: np.ndarray
    t_wkb: np.ndarray  # amplitude with unit prefactor at each mean quasienergy
    prefactor: float  # geometric mean of half_gaps / t_wkb

    @property
    def worst_factor(self) -> float:
        r = self.half_gaps / (self.prefactor * self.t_wkb)
        return float(np.max(np.maximum(r, 1 / r)))


def wkb_calibration(m: float, f_ratio: float, *, alpha3_ratio: float = 0.0, half_width: float = 0.1,
                    points: int = 41, n_max: int | None = None, ordering: str = "weyl") -> WKBCalibration:
    """Fit one prefactor so that ``prefactor * t(eps)`` reproduces the quantum half-gaps."""
    acs = anticrossings_near(m, f_ratio, alpha3_ratio=alpha3_ratio, half_width=half_width, points=points,
                             n_max=n_max)
    acs = [a for a in acs if a.min_gap > 0]
    half = np.array([0.5 * a.min_gap for a in acs])
    t = np.array([tunneling.tunneling_amplitude(ModelParams.from_ratios(2 * a.delta_at_min, f_ratio,
                                                                        alpha3_ratio=alpha3_ratio, f_ref_m=m),
                                                a.mean_quasienergy, ordering=ordering).value for a in acs])
    ok = t > 0
    acs, half, t = [a for a, g in zip(acs, ok) if g], half[ok], t[ok]
    c = float(np.exp(np.mean(np.log(half / t)))) if half.size else math.nan
    return WKBCalibration(acs, half, t, c)
