"""Command line front end.

Every subcommand writes tab-delimited tables with a ``#`` metadata header into
``--out`` and finishes with ``manifest.json`` listing each file and its SHA-256.
Exit codes: 0 success, 3 partial failure, 4 total failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import sweep as sw
from .params import ModelParams


def _point_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--m", type=float, default=None, help="2 delta / alpha")
    p.add_argument("--f-ratio", type=float, default=None, help="drive in units of f_crit")
    p.add_argument("--alpha3", type=float, default=None, help="alpha3 / alpha")
    p.add_argument("--gamma", type=float, default=None, help="damping in units of alpha")
    p.add_argument("--nthermal", type=float, default=None, help="thermal occupation N")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="JSON experiment configuration")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: KERRMP_WORKERS or 1)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--nmax", default=None, help="Fock cutoff, integer or 'auto'")
    p.add_argument("--tiers", default=None, help="comma separated subset of quantum,reduced,fpe")


def _nmax(value):
    if value is None or value == "auto":
        return "auto"
    try:
        n = int(value)
    except ValueError:
        raise sw.ConfigError(f"--nmax must be an integer or 'auto', got {value!r}") from None
    if n < 1:
        raise sw.ConfigError("--nmax must be positive")
    return n


def build_config(args) -> sw.ExperimentConfig:
    data = {}
    if args.config is not None:
        cfg = sw.ExperimentConfig.load(args.config)
        data = {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}
    for key, attr in (("m", "m"), ("f_ratio", "f_ratio"), ("alpha3_ratio", "alpha3"),
                      ("gamma", "gamma"), ("n_thermal", "nthermal")):
        val = getattr(args, attr, None)
        if val is not None:
            data[key] = val
    if args.tiers:
        data["tiers"] = [t.strip() for t in args.tiers.split(",") if t.strip()]
    if args.nmax is not None:
        data["n_max"] = _nmax(args.nmax)
    data["output_dir"] = str(args.out)
    if args.workers is not None:
        data["workers"] = args.workers
    return sw.ExperimentConfig.from_dict(data)


def _single(cfg: sw.ExperimentConfig) -> tuple[dict, ModelParams]:
    pts = cfg.grid()
    if len(pts) != 1:
        raise sw.ConfigError("this subcommand needs a single parameter point")
    return pts[0], sw.point_params(pts[0])


def _finish(out: Path, files, meta, status="success", failures=()) -> int:
    sw.write_manifest(out, list(files), {"config": meta, "status": status, "failures": list(failures),
                                         "version": sw.__version__})
    return {"success": sw.EXIT_OK, "partial": sw.EXIT_PARTIAL}.get(status, sw.EXIT_FAILED)


def _n_max_for(cfg, params):
    return sw.auto_n_max(params) if cfg.n_max == "auto" else cfg.n_max


# ----------------------------------------------------------------- subcommands

def cmd_spectrum(cfg, args) -> int:
    from .spectrum import detuning_grid, diagonalize, scan_anticrossings

    point, params = _single(cfg)
    out, meta = Path(cfg.output_dir), cfg.describe()
    n_max = params.default_n_max() + 20 if cfg.n_max == "auto" else cfg.n_max
    spc = diagonalize(params, n_max)
    rows = [(k, lv.eps, lv.mean_photon, lv.label or "-", lv.weight_1, int(lv.near_boundary))
            for k, lv in enumerate(spc.levels)]
    files = [sw.write_table(out / "spectrum.tsv", ("index", "eps", "mean_n", "region", "weight_1", "near_boundary"),
                            rows, meta)]
    if args.half_width > 0:
        grid = detuning_grid(point["m"], point["f_ratio"], args.half_width, args.points,
                             alpha3_ratio=point["alpha3_ratio"])
        acs = scan_anticrossings(grid, n_max, workers=cfg.workers or sw.default_workers())
        rows = [(a.level_pair[0], a.level_pair[1], 2 * a.delta_at_min, a.min_gap, a.mean_quasienergy) for a in acs]
        files.append(sw.write_table(out / "anticrossings.tsv", ("i", "j", "m_at_min", "min_gap", "mean_eps"),
                                    rows, dict(meta, half_width=args.half_width, points=args.points)))
        print(f"{len(acs)} anticrossings")
    return _finish(out, files, meta)


def cmd_classical(cfg, args) -> int:
    from .classical import coefficient_table, find_stationary_points

    _, params = _single(cfg)
    out, meta = Path(cfg.output_dir), cfg.describe()
    pp = find_stationary_points(params, args.ordering)
    rows = [(s.stability, s.a.real, s.a.imag, s.eps, s.omega) for s in pp.stationary_points]
    files = [sw.write_table(out / "stationary.tsv", ("kind", "re_a", "im_a", "eps", "omega"), rows,
                            dict(meta, ordering=args.ordering))]
    if pp.bistable:
        for r in (1, 2, 3):
            lo, hi = pp.window(r)
            if not math.isfinite(hi):
                hi = pp.eps_1 + (pp.eps_1 - pp.eps_sep)
            grid = lo + (hi - lo) * np.linspace(0.01, 0.99, args.points)
            tab = coefficient_table(pp, r, grid)
            files.append(sw.write_table(out / f"coefficients_region{r}.tsv", ("eps", "T", "K", "D", "I", "V"),
                                        tab, dict(meta, region=r)))
    print(f"eps_sep={pp.eps_sep:.12g} eps_1={pp.eps_1:.12g} eps_2={pp.eps_2:.12g}")
    return _finish(out, files, meta)


def cmd_tunneling(cfg, args) -> int:
    from .tunneling import lambda_profile

    _, params = _single(cfg)
    out, meta = Path(cfg.output_dir), cfg.describe()
    prof = lambda_profile(params, points=args.points, prefactor=args.prefactor)
    info = dict(meta, eps_crit=prof.eps_crit, crit_found=prof.crit_found,
                eps_res=prof.eps_res, res_weight=prof.res_weight, prefactor=args.prefactor)
    f = sw.write_table(out / "tunneling.tsv", ("eps", "t", "delta_eps13", "gamma13", "lambda_T"), prof.table(), info)
    print(f"eps_crit={prof.eps_crit:.12g} eps_res={prof.eps_res}")
    return _finish(out, [f], meta)


def cmd_steady(cfg, args) -> int:
    from .lindblad import attach_occupations, steady_state

    point, params = _single(cfg)
    out, meta = Path(cfg.output_dir), cfg.describe()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        st = attach_occupations(steady_state(params, _n_max_for(cfg, params)))
    row = [point["m"], *st.occupations, st.mean_intensity, st.residual, st.band_population]
    f = sw.write_table(out / "steady.tsv", ("m", "P1", "P2", "P3", "mean_n", "residual", "band"), [row],
                       dict(meta, warnings=st.warnings))
    print("P1={:.6g} P2={:.6g} P3={:.6g}".format(*st.occupations))
    return _finish(out, [f], meta)


def cmd_reduced(cfg, args) -> int:
    from .reduced import build_reduced_generator, reduced_steady_state

    point, params = _single(cfg)
    out, meta = Path(cfg.output_dir), cfg.describe()
    gen = build_reduced_generator(params)
    st = reduced_steady_state(gen, eliminate=args.eliminate)
    files = [sw.write_table(out / "reduced_levels.tsv", ("n", "region", "eps", "population"), st.level_table(), meta),
             sw.write_table(out / "reduced_pairs.tsv", ("n", "t", "mismatch", "abs_rho13", "current"),
                            st.pair_table(), meta),
             sw.write_table(out / "reduced_summary.tsv", ("m", "P1", "P2", "P3"),
                            [[point["m"], *st.occupations()]], meta)]
    print("P1={:.6g} P2={:.6g} P3={:.6g}".format(*st.occupations()))
    return _finish(out, files, meta)


def _fpe_files(out: Path, tag: str, dist, meta, point) -> list[Path]:
    e13 = dist.eps[1]
    p3 = np.interp(e13, dist.eps[3], dist.P[3])
    info = dict(meta, eps_crit=dist.eps_crit, eps_res=dist.eps_res, J=dist.flow_J)
    res = dist.eps_res if dist.eps_res is not None else math.nan
    crit = dist.eps_crit if dist.eps_crit is not None else math.nan
    return [sw.write_table(out / f"fpe{tag}_P13.tsv", ("eps", "P1", "P3"), np.column_stack([e13, dist.P[1], p3]), info),
            sw.write_table(out / f"fpe{tag}_P3_above.tsv", ("eps", "P3"),
                           np.column_stack([dist.eps[3][e13.size:], dist.P[3][e13.size:]]), info),
            sw.write_table(out / f"fpe{tag}_P2.tsv", ("eps", "P2"), np.column_stack([dist.eps[2], dist.P[2]]), info),
            sw.write_table(out / f"fpe{tag}_summary.tsv", ("m", "eps_crit", "eps_res", "J", "P1", "P2", "P3"),
                           [[point["m"], crit, res, dist.flow_J, *dist.occupations]], info)]


def cmd_fpe(cfg, args) -> int:
    from .fpe import bvp_cross_check, stationary_solution, sup_mismatch
    from .tunneling import lambda_profile

    point, params = _single(cfg)
    out, meta = Path(cfg.output_dir), cfg.describe()
    prof = lambda_profile(params)
    dist = stationary_solution(params, prof, tunneling=not args.no_tunneling)
    files = _fpe_files(out, "", dist, meta, point)
    if args.check:
        bvp = bvp_cross_check(params, prof, dist.diagnostics["tables"], tunneling=not args.no_tunneling)
        mm = sup_mismatch(dist, bvp)
        files.append(sw.write_table(out / "fpe_check.tsv", ("region", "sup_mismatch"), sorted(mm.items()), meta))
        print("closed form vs finite volume:", {k: f"{v:.3e}" for k, v in mm.items()})
    print("P1={:.6g} P2={:.6g} P3={:.6g} J={:.6g}".format(*dist.occupations, dist.flow_J))
    return _finish(out, files, meta)


def cmd_sweep(cfg, args) -> int:
    res = sw.run_experiment(cfg)
    print(f"{len(res.points)} points, status {res.status}; manifest {res.manifest}")
    return res.exit_code


def cmd_compare(cfg, args) -> int:
    out = Path(cfg.output_dir)
    if args.run or not (out / "summary.tsv").exists():
        if len(cfg.tiers) < 2:
            raise sw.ConfigError("compare needs at least two tiers (use --tiers)")
        sw.run_experiment(cfg)
    summary = sw.load_summary(out)
    rep = sw.compare_tiers(summary)
    meta = cfg.describe()
    files = [out / "summary.tsv"]
    for name in ("quantum.tsv", "reduced.tsv", "fpe.tsv"):
        if (out / name).exists():
            files.insert(-1, out / name)
    files.append(sw.write_table(out / "compare.tsv", rep.columns, rep.rows,
                                dict(meta, bound=sw.TIER_AGREEMENT, peak_deltas=rep.peak_deltas)))
    print(f"max in-band deviation {rep.max_deviation:.3g}; {rep.flagged} flagged points")
    return _finish(out, files, meta)


def cmd_preset(cfg, args) -> int:
    name = args.name
    out = Path(cfg.output_dir)
    if name in ("fig5", "fig6", "fig7"):
        pc = sw.preset_config(name, output_dir=str(out), quick=args.quick)
        if cfg.workers is not None:
            pc.workers = cfg.workers
        if args.tiers:
            pc.tiers = cfg.tiers
        if args.nmax is not None:
            pc.n_max = cfg.n_max
        res = sw.run_experiment(pc)
        print(f"{name}: {len(res.points)} points, status {res.status}")
        return res.exit_code
    meta = {"preset": name}
    if name == "fig2":
        from .spectrum import detuning_grid, track_levels

        files = []
        pts = 61 if args.quick else 401
        for a3 in (0.0, 0.005):
            grid = detuning_grid(8.0, 0.1, 1.5, pts, alpha3_ratio=a3)
            scan = track_levels(grid, 40, workers=cfg.workers or sw.default_workers())
            rows = [(2 * d, j, scan.energies[k, j], scan.weight_1[k, j])
                    for k, d in enumerate(scan.deltas) for j in range(scan.energies.shape[1])
                    if scan.in_window[k, j]]
            files.append(sw.write_table(out / f"fig2_levels_alpha3_{a3:g}.tsv", ("m", "track", "eps", "weight_1"),
                                        rows, dict(meta, f_ratio=0.1, alpha3_ratio=a3, n_max=40)))
        return _finish(out, files, meta)
    if name == "fig3":
        from .tunneling import lambda_profile

        files = []
        for dm in (-0.02, 0.0, 0.02, 0.05):
            p = ModelParams.from_ratios(20 + dm, 0.2, alpha3_ratio=1e-5, gamma=1e-3, n_thermal=0.5)
            prof = lambda_profile(p, points=60 if args.quick else 120)
            files.append(sw.write_table(out / f"fig3_profile_dm_{dm:g}.tsv",
                                        ("eps", "t", "delta_eps13", "gamma13", "lambda_T"), prof.table(),
                                        dict(meta, m=20 + dm, eps_crit=prof.eps_crit, eps_res=prof.eps_res)))
        return _finish(out, files, meta)
    if name == "fig4":
        from .fpe import scaled_profile, stationary_solution
        from .tunneling import lambda_profile

        # alpha Q/(delta gamma) = 0.1 at 2 delta/alpha = 20 means N = 1/2
        point = {"m": 20.0716, "f_ratio": 0.2, "alpha3_ratio": 1e-4, "gamma": 1e-3, "n_thermal": 0.5}
        params = sw.point_params(point)
        prof = lambda_profile(params)
        files = []
        for tag, pr, tun in (("_with_pair", prof, True), ("_without_pair", scaled_profile(prof, res_weight=0.0), True),
                             ("_no_tunneling", prof, False)):
            dist = stationary_solution(params, pr, tunneling=tun)
            files += _fpe_files(out, tag, dist, dict(meta, **point), point)
        return _finish(out, files, meta)
    raise sw.ConfigError(f"unknown preset {name!r}")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kerrmp", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        _common(p)
        _point_args(p)
        p.set_defaults(func=func)
        return p

    p = add("spectrum", cmd_spectrum, "quasienergy spectrum and anticrossing scan")
    p.add_argument("--half-width", type=float, default=0.0, help="scan 2 delta/alpha within +- this width")
    p.add_argument("--points", type=int, default=201)
    p = add("classical", cmd_classical, "stationary points and orbit coefficients")
    p.add_argument("--ordering", choices=("weyl", "cnumber"), default="weyl")
    p.add_argument("--points", type=int, default=41)
    p = add("tunneling", cmd_tunneling, "tunneling amplitude, mismatch and rate profile")
    p.add_argument("--points", type=int, default=120)
    p.add_argument("--prefactor", type=float, default=1.0)
    add("steady", cmd_steady, "stationary density matrix of the full master equation")
    p = add("reduced", cmd_reduced, "stationary state of the region-basis master equation")
    p.add_argument("--eliminate", action="store_true", help="eliminate the coherences")
    p = add("fpe", cmd_fpe, "stationary quasienergy distribution")
    p.add_argument("--no-tunneling", action="store_true")
    p.add_argument("--check", action="store_true", help="also run the finite-volume solve")
    add("sweep", cmd_sweep, "multi-tier parameter sweep")
    p = add("compare", cmd_compare, "compare P2 across tiers on a common grid")
    p.add_argument("--run", action="store_true", help="run the sweep even if a summary exists")
    p = add("preset", cmd_preset, "figure recipes")
    p.add_argument("name", choices=("fig2", "fig3", "fig4", "fig5", "fig6", "fig7"))
    p.add_argument("--quick", action="store_true", help="coarser grids")
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    try:
        cfg = build_config(args)
        return args.func(cfg, args)
    except sw.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return sw.EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
