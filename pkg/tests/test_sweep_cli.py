import json

import numpy as np
import pytest

from kerrmp import cli
from kerrmp import sweep as sw


def _cfg(tmp_path, **kw):
    base = dict(m=[6.0, 6.2], f_ratio=0.4, gamma=0.05, n_thermal=0.5, tiers=["quantum"], n_max=30,
                output_dir=str(tmp_path), workers=1)
    base.update(kw)
    return sw.ExperimentConfig.from_dict(base)


@pytest.mark.parametrize("bad", [
    {"tiers": []}, {"tiers": ["exact"]}, {"n_max": 0}, {"workers": 0}, {"nonsense": 1},
    {"m": {"start": 1.0}}, {"m": "x"},
])
def test_invalid_configuration_rejected(tmp_path, bad):
    with pytest.raises(sw.ConfigError):
        _cfg(tmp_path, **bad)


def test_grid_is_a_cartesian_product(tmp_path):
    cfg = _cfg(tmp_path, m={"start": 6.0, "stop": 6.4, "num": 3}, gamma=[0.01, 0.02])
    pts = cfg.grid()
    assert len(pts) == 6
    np.testing.assert_allclose(sorted({p["m"] for p in pts}), [6.0, 6.2, 6.4])


def test_rerun_is_byte_identical(tmp_path):
    a = sw.run_experiment(_cfg(tmp_path / "a"))
    b = sw.run_experiment(_cfg(tmp_path / "b"))
    assert a.status == "success" and a.exit_code == sw.EXIT_OK
    for fa, fb in zip(a.files + [a.manifest], b.files + [b.manifest]):
        assert fa.read_bytes() == fb.read_bytes()
    man = json.loads(a.manifest.read_text())
    assert {e["file"] for e in man["files"]} == {"quantum.tsv", "summary.tsv"}
    assert all(e["sha256"] == sw.sha256(tmp_path / "a" / e["file"]) for e in man["files"])


def test_failed_points_are_isolated(tmp_path):
    part = sw.run_experiment(_cfg(tmp_path / "p", m=6.0, gamma=[0.0, 0.05]))
    assert part.status == "partial" and part.exit_code == sw.EXIT_PARTIAL
    assert part.errors["quantum"][0] and not part.errors["quantum"][1]
    assert np.isnan(part.p2("quantum")[0]) and np.isfinite(part.p2("quantum")[1])
    fail = sw.run_experiment(_cfg(tmp_path / "f", m=6.0, gamma=0.0))
    assert fail.status == "failed" and fail.exit_code == sw.EXIT_FAILED
    assert json.loads(fail.manifest.read_text())["failures"]


def test_compare_against_itself_and_grid_mismatch():
    grid = [{"m": m, "f_ratio": 0.3, "alpha3_ratio": 0.0, "gamma": 1e-3, "n_thermal": 3.0} for m in (16.0, 16.1)]
    p2 = np.array([0.6, 0.7])
    rep = sw.compare_tiers({"quantum": (grid, p2), "fpe": (grid, p2.copy())})
    assert rep.max_deviation == 0.0 and rep.flagged == 0
    with pytest.raises(ValueError):
        sw.compare_tiers({"quantum": (grid, p2), "fpe": (grid[:1], p2[:1])})
    # outside the quasiclassical band every point is flagged
    low = [dict(g, m=6.0 + k) for k, g in enumerate(grid)]
    assert sw.compare_tiers({"quantum": (low, p2), "fpe": (low, p2)}).flagged == 2


def test_worker_count_from_environment(monkeypatch):
    monkeypatch.setenv("KERRMP_WORKERS", "3")
    assert sw.default_workers() == 3
    monkeypatch.setenv("KERRMP_WORKERS", "junk")
    assert sw.default_workers() == 1
    monkeypatch.delenv("KERRMP_WORKERS")
    assert sw.default_workers() == 1


def test_cli_steady_and_config_file(tmp_path):
    out = tmp_path / "steady"
    code = cli.main(["steady", "--m", "6", "--f-ratio", "0.4", "--gamma", "0.05", "--nmax", "30", "--out", str(out)])
    assert code == 0
    assert (out / "manifest.json").exists()
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"m": [6.0, 6.2], "f_ratio": 0.4, "gamma": [0.0, 0.05], "n_max": 30}))
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s")]) == sw.EXIT_PARTIAL
    assert cli.main(["sweep", "--config", str(cfg), "--nmax", "-3", "--out", str(tmp_path / "e")]) == 2
    assert cli.main(["sweep", "--config", str(cfg), "--tiers", "bogus", "--out", str(tmp_path / "e")]) == 2


def test_presets_are_well_formed():
    for name in ("fig5", "fig6", "fig7"):
        cfg = sw.preset_config(name, quick=True)
        assert cfg.grid()
        assert set(cfg.tiers) <= set(sw.TIERS)
