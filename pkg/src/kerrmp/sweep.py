"""Experiment configuration, multi-tier sweeps and reproducible output tables."""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .params import ModelParams

TIERS = ("quantum", "reduced", "fpe")
AXES = ("m", "f_ratio", "alpha3_ratio", "gamma", "n_thermal")
TIER_AGREEMENT = 0.25
VALIDITY_M = 12.0
VALIDITY_GAMMA = 1e-3

EXIT_OK, EXIT_PARTIAL, EXIT_FAILED = 0, 3, 4


class ConfigError(ValueError):
    pass


def _axis(value, name: str) -> list[float]:
    """Scalar, explicit list, or arithmetic grid ``{"start", "stop", "num"}`` / ``{"start", "step", "num"}``."""
    if isinstance(value, dict):
        try:
            num = int(value["num"])
            start = float(value["start"])
            if "stop" in value:
                vals = np.linspace(start, float(value["stop"]), num)
            else:
                vals = start + float(value["step"]) * np.arange(num)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"axis {name!r}: malformed grid {value!r}") from exc
        out = [float(v) for v in vals]
    else:
        items = value if isinstance(value, (list, tuple)) else [value]
        try:
            out = [float(v) for v in items]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"axis {name!r}: non-numeric entry in {value!r}") from exc
    if not out:
        raise ConfigError(f"axis {name!r} is empty")
    if not all(math.isfinite(v) for v in out):
        raise ConfigError(f"axis {name!r} has non-finite entries")
    return out


def auto_n_max(params: ModelParams) -> int:
    """Truncation that keeps the large-amplitude state and its thermal spread inside the basis."""
    return int(math.ceil(4 * params.delta / params.alpha + 20 + 8 * params.n_thermal))


@dataclass
class ExperimentConfig:
    """Sweep description; every frequency is in units of ``alpha`` and ``m = 2 delta/alpha``.

    Axes accept scalars, lists or arithmetic grids and are combined as a
    Cartesian product in the order of ``AXES``.
    """

    m: object = 20.0
    f_ratio: object = 0.3
    alpha3_ratio: object = 0.0
    gamma: object = 1e-3
    n_thermal: object = 0.0
    tiers: tuple[str, ...] = ("quantum",)
    n_max: int | str = "auto"
    output_dir: str = "out"
    workers: int | None = None
    name: str = "sweep"
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.tiers = tuple(self.tiers)
        if not self.tiers:
            raise ConfigError("select at least one tier")
        bad = [t for t in self.tiers if t not in TIERS]
        if bad:
            raise ConfigError(f"unknown tiers {bad}; choose from {TIERS}")
        if not (self.n_max == "auto" or (isinstance(self.n_max, int) and self.n_max > 0)):
            raise ConfigError(f"n_max must be a positive integer or 'auto', got {self.n_max!r}")
        for name in AXES:
            _axis(getattr(self, name), name)
        if self.workers is not None and int(self.workers) < 1:
            raise ConfigError("workers must be at least 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown configuration keys {sorted(extra)}")
        data = dict(data)
        if isinstance(data.get("n_max"), str) and data["n_max"] != "auto":
            data["n_max"] = int(data["n_max"])
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def grid(self) -> list[dict]:
        axes = [_axis(getattr(self, a), a) for a in AXES]
        return [dict(zip(AXES, combo)) for combo in itertools.product(*axes)]

    def describe(self) -> dict:
        d = asdict(self)
        d.pop("output_dir")
        d.pop("workers")
        d["tiers"] = list(self.tiers)
        return d


def point_params(point: dict) -> ModelParams:
    """Model parameters with ``f/f_crit`` resolved against the detuning of this grid point."""
    for key in ("gamma", "n_thermal"):
        if point[key] < 0:
            raise ValueError(f"{key} must be non-negative")
    return ModelParams.from_ratios(point["m"], point["f_ratio"], alpha3_ratio=point["alpha3_ratio"],
                                   gamma=point["gamma"], n_thermal=point["n_thermal"])


TIER_COLUMNS = {
    "quantum": ("P1", "P2", "P3", "mean_n", "residual", "band"),
    "reduced": ("P1", "P2", "P3", "levels", "pairs"),
    "fpe": ("P1", "P2", "P3", "eps_crit", "eps_res", "J"),
}


def _run_quantum(params, n_max):
    from .lindblad import attach_occupations, steady_state

    n = auto_n_max(params) if n_max == "auto" else n_max
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        st = attach_occupations(steady_state(params, n))
    return (*st.occupations, st.mean_intensity, st.residual, st.band_population)


def _run_reduced(params, n_max):
    from .reduced import build_reduced_generator, reduced_steady_state

    gen = build_reduced_generator(params)
    st = reduced_steady_state(gen)
    return (*st.occupations(), gen.n_levels, gen.n_pairs)


def _run_fpe(params, n_max):
    from .fpe import stationary_solution
    from .tunneling import lambda_profile

    prof = lambda_profile(params)
    dist = stationary_solution(params, prof)
    res = dist.eps_res if dist.eps_res is not None else math.nan
    crit = dist.eps_crit if dist.eps_crit is not None else math.nan
    return (*dist.occupations, crit, res, dist.flow_J)


RUNNERS = {"quantum": _run_quantum, "reduced": _run_reduced, "fpe": _run_fpe}


def _job(args):
    tier, point, n_max = args
    try:
        vals = RUNNERS[tier](point_params(point), n_max)
        return tuple(float(v) for v in vals), ""
    except Exception as exc:  # isolated per point
        return (math.nan,) * len(TIER_COLUMNS[tier]), f"{type(exc).__name__}: {exc}"


def default_workers() -> int:
    env = os.environ.get("KERRMP_WORKERS")
    if not env:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else format(x, ".12g")


def header_lines(meta: dict) -> list[str]:
    lines = [f"# kerrmp {__version__} numpy {np.__version__} scipy {scipy.__version__}"]
    for key in sorted(meta):
        lines.append(f"# {key} = {json.dumps(meta[key], sort_keys=True)}")
    return lines


def write_table(path, columns, rows, meta: dict | None = None) -> Path:
    """Tab-delimited table with a ``#`` metadata header; numbers use 12 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = header_lines(meta or {})
    lines.append("\t".join(columns))
    for row in rows:
        lines.append("\t".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_table(path) -> tuple[list[str], list[list[str]], dict]:
    meta, cols, rows = {}, None, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            if " = " in line:
                k, v = line[2:].split(" = ", 1)
                meta[k] = json.loads(v)
            continue
        parts = line.split("\t")
        if cols is None:
            cols = parts
        else:
            rows.append(parts)
    return cols or [], rows, meta


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    points: list[dict]
    values: dict[str, list[tuple]]
    errors: dict[str, list[str]]
    files: list[Path]
    manifest: Path
    status: str

    @property
    def exit_code(self) -> int:
        return {"success": EXIT_OK, "partial": EXIT_PARTIAL}.get(self.status, EXIT_FAILED)

    def p2(self, tier: str) -> np.ndarray:
        return np.array([v[1] for v in self.values[tier]])


def write_manifest(out: Path, files: list[Path], meta: dict) -> Path:
    entries = [{"file": f.name, "sha256": sha256(f)} for f in files]
    doc = dict(meta, files=entries)
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run every selected tier on every grid point and write tables, a summary and the manifest."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    points = config.grid()
    workers = config.workers if config.workers is not None else default_workers()
    meta = config.describe()
    values, errors, files = {}, {}, []
    for tier in config.tiers:
        jobs = [(tier, p, config.n_max) for p in points]
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                res = list(pool.map(_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
        else:
            res = [_job(j) for j in jobs]
        values[tier] = [r[0] for r in res]
        errors[tier] = [r[1] for r in res]
        cols = list(AXES) + list(TIER_COLUMNS[tier]) + ["error"]
        rows = [[p[a] for a in AXES] + list(v) + [e] for p, (v, e) in zip(points, res)]
        files.append(write_table(out / f"{tier}.tsv", cols, rows, dict(meta, tier=tier)))
    cols = list(AXES) + [f"P2_{t}" for t in config.tiers]
    rows = [[p[a] for a in AXES] + [values[t][k][1] for t in config.tiers] for k, p in enumerate(points)]
    files.append(write_table(out / "summary.tsv", cols, rows, meta))
    n_err = sum(bool(e) for t in config.tiers for e in errors[t])
    n_all = len(points) * len(config.tiers)
    status = "success" if n_err == 0 else ("failed" if n_err == n_all else "partial")
    failures = [{"tier": t, "point": points[k], "error": e}
                for t in config.tiers for k, e in enumerate(errors[t]) if e]
    manifest = write_manifest(out, files, {"config": meta, "status": status, "failures": failures,
                                           "version": __version__})
    return ExperimentResult(config, points, values, errors, files, manifest, status)


@dataclass
class TierReport:
    columns: list[str]
    rows: list[list]
    flagged: int
    peak_deltas: dict[str, list[float]]
    max_deviation: float


def _peaks_along_m(ms, p2):
    from .lindblad import peak_positions

    ok = np.isfinite(p2)
    if ok.sum() < 3:
        return []
    return [p for p, _, _ in peak_positions(np.asarray(ms)[ok], np.asarray(p2)[ok])]


def compare_tiers(summary: dict[str, tuple[list[dict], np.ndarray]], *, bound: float = TIER_AGREEMENT,
                  reference: str | None = None) -> TierReport:
    """Relative P2 deviations of every tier from a reference tier on a common grid.

    ``summary`` maps a tier name to ``(grid points, P2 values)``.  Points inside
    the quasiclassical band (``m >= 12`` and ``gamma/delta <= 1e-3``) whose
    deviation exceeds ``bound`` are flagged, as are all points outside the band.
    Peak positions along ``m`` are compared when the grid varies only in ``m``.
    """
    if len(summary) < 2:
        raise ValueError("comparison needs at least two tiers")
    names = list(summary)
    ref = reference or names[0]
    grid = summary[ref][0]
    for t in names:
        if summary[t][0] != grid:
            raise ValueError(f"tier {t!r} ran on a different grid than {ref!r}")
    p_ref = np.asarray(summary[ref][1], dtype=float)
    cols = list(AXES) + [f"dev_{t}" for t in names if t != ref] + ["in_band", "flag"]
    rows, flagged, worst = [], 0, 0.0
    for k, pt in enumerate(grid):
        in_band = pt["m"] >= VALIDITY_M and pt["gamma"] / (pt["m"] / 2) <= VALIDITY_GAMMA
        devs = []
        for t in names:
            if t == ref:
                continue
            val = float(summary[t][1][k])
            devs.append(abs(val - p_ref[k]) / abs(p_ref[k]) if p_ref[k] else math.inf)
        bad = (not in_band) or any(not (d <= bound) for d in devs)
        flagged += bad
        if in_band:
            worst = max([worst] + [d for d in devs if math.isfinite(d)])
        rows.append([pt[a] for a in AXES] + devs + [int(in_band), int(bad)])
    peaks = {}
    others = {a for a in AXES if a != "m" and len({pt[a] for pt in grid}) > 1}
    if not others:
        ms = [pt["m"] for pt in grid]
        base = _peaks_along_m(ms, p_ref)
        for t in names:
            if t == ref:
                continue
            pk = _peaks_along_m(ms, np.asarray(summary[t][1], dtype=float))
            peaks[t] = [min((abs(b - q) for q in pk), default=math.inf) for b in base]
    return TierReport(cols, rows, flagged, peaks, worst)


def load_summary(out_dir) -> dict[str, tuple[list[dict], np.ndarray]]:
    cols, rows, _ = read_table(Path(out_dir) / "summary.tsv")
    tiers = [c[3:] for c in cols if c.startswith("P2_")]
    grid = [{a: float(r[cols.index(a)]) for a in AXES} for r in rows]
    return {t: (grid, np.array([float(r[cols.index("P2_" + t)]) for r in rows])) for t in tiers}


# ------------------------------------------------------------------- presets

def preset_config(name: str, *, output_dir: str = "out", quick: bool = False) -> ExperimentConfig:
    """Sweep configurations for the figure recipes that reduce to P2 sweeps."""
    pts = 41 if quick else 201
    if name == "fig5":
        return ExperimentConfig(m={"start": 24.1, "stop": 24.12, "num": pts}, f_ratio=0.4, alpha3_ratio=1e-4,
                                gamma=1e-5, n_thermal=3.0, tiers=("quantum",), output_dir=output_dir, name=name,
                                flags=["alpha3 given as alpha3/alpha = 1e-4; the alternative reading "
                                       "alpha3/alpha^2 = 1e-4 coincides only for alpha = 1"])
    if name == "fig6":
        return ExperimentConfig(m={"start": 23.99, "stop": 24.07, "num": 2 * pts}, f_ratio=0.4,
                                alpha3_ratio=[0.0, 1e-5, 2e-5, 5e-5], gamma=1e-5, n_thermal=3.0,
                                tiers=("quantum",), output_dir=output_dir, name=name)
    if name == "fig7":
        return ExperimentConfig(m={"start": 24.1, "stop": 24.12, "num": pts}, f_ratio=0.4, alpha3_ratio=1e-4,
                                gamma=[1e-7, 1e-6, 1e-5, 1e-4], n_thermal=3.0, tiers=("quantum",),
                                output_dir=output_dir, name=name)
    raise ConfigError(f"{name!r} is not a sweep preset")
