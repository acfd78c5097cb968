import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from activegas import cli, io
from activegas.errors import ParameterError


def run_cli(*argv):
    return cli.main(list(argv))


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_coeffs_csv(tmp_path):
    assert run_cli("coeffs", "--rho-points", "101", "--out", str(tmp_path)) == 0
    rows = read_csv(tmp_path / "coeffs.csv")
    assert len(rows) == 101
    assert float(rows[0]["rho"]) == 0.0 and float(rows[0]["ds"]) == 1.0
    assert float(rows[-1]["rho"]) == 1.0 and float(rows[-1]["ds"]) == 0.0
    q = [float(r["Q"]) for r in rows]
    assert all(b > a for a, b in zip(q, q[1:]))


def test_stability_eigen_signs(tmp_path, capsys):
    assert run_cli("stability", "eigen", "--phi", "0.92", "--pe", "10",
                   "--ell", "0.5", "--out", str(tmp_path / "u")) == 0
    rows = read_csv(tmp_path / "u" / "eigen.csv")
    assert float(rows[0]["re_lambda"]) > 0
    assert run_cli("stability", "eigen", "--phi", "0.5", "--pe", "0",
                   "--out", str(tmp_path / "s")) == 0
    rows = read_csv(tmp_path / "s" / "eigen.csv")
    assert float(rows[0]["re_lambda"]) < 0


def test_stability_spinodal_asymptote(tmp_path):
    assert run_cli("stability", "spinodal", "--phi-grid", "0.9:0.999:0.001",
                   "--out", str(tmp_path)) == 0
    rows = read_csv(tmp_path / "spinodal.csv")
    pe = [float(r["pe_star"]) for r in rows]
    assert all(b > a for a, b in zip(pe, pe[1:]))  # rising toward phi = 1
    assert pe[-1] > 3 * pe[0]


def test_stability_boundary_csv(tmp_path):
    assert run_cli("stability", "boundary", "--phi-grid", "0.9:0.94:0.02",
                   "--n", "30", "--out", str(tmp_path)) == 0
    rows = read_csv(tmp_path / "boundary.csv")
    assert len(rows) == 3
    for r in rows:
        assert 4.0 < float(r["pe_star"]) < 12.0


def test_pde_run_passive_free_energy(tmp_path):
    assert run_cli("pde", "run", "--phi", "0.6", "--pe", "0",
                   "--grid", "8x8x8", "--T", "0.05", "--delta", "0.01",
                   "--out", str(tmp_path)) == 0
    rows = read_csv(tmp_path / "series.csv")
    fe = [float(r["free_energy"]) for r in rows]
    assert all(b <= a + 1e-13 for a, b in zip(fe, fe[1:]))
    mass = [float(r["mass"]) for r in rows]
    assert all(abs(m - 0.6) < 1e-12 for m in mass)
    snaps = sorted(tmp_path.glob("snapshot_*.raw"))
    assert snaps
    values, meta = io.read_field_snapshot(snaps[0])
    assert values.shape == (8, 8, 8)
    assert meta["phi"] == 0.6 and meta["schema_version"] == 1


def test_pde_classify_verdict(tmp_path, capsys):
    assert run_cli("pde", "classify", "--phi", "0.7", "--pe", "12",
                   "--ic", "eigenmode", "--grid", "16x16x8", "--T", "1",
                   "--out", str(tmp_path)) == 0
    verdict = json.loads((tmp_path / "verdict.json").read_text())
    assert verdict["verdict"] == "unstable"
    assert verdict["sup_norm"] > 2e-4
    printed = json.loads(capsys.readouterr().out.strip())
    assert printed == verdict


def test_pde_sweep(tmp_path):
    assert run_cli("pde", "sweep", "--phi-grid", "0.7:0.7:0.1",
                   "--pe-grid", "0:12:12", "--ic", "eigenmode",
                   "--grid", "16x16x8", "--T", "0.5",
                   "--out", str(tmp_path)) == 0
    rows = {(r["phi"], r["pe"]): r["verdict"] for r in read_csv(tmp_path / "sweep.csv")}
    assert rows[("0.7", "0.0")] == "stable"
    assert rows[("0.7", "12.0")] == "unstable"


def test_micro_scale_error_exit_code(tmp_path, capsys):
    rc = run_cli("micro", "run", "--N", "16", "--phi", "0.3", "--pe", "30",
                 "--out", str(tmp_path))
    assert rc == 2
    assert "need N >= 30" in capsys.readouterr().err


def test_micro_run_outputs(tmp_path):
    assert run_cli("micro", "run", "--N", "32", "--phi", "0.3", "--pe", "5",
                   "--T", "0.04", "--seeds", "2", "--series-dt", "0.01",
                   "--snapshot-dt", "0.02", "--out", str(tmp_path)) == 0
    series = read_csv(tmp_path / "phi_series_00.csv")
    assert series[0]["t"] == "0.0"
    mean = read_csv(tmp_path / "phi_series_mean.csv")
    assert {"t", "mean", "stderr"} <= set(mean[0])
    cfg_rows = read_csv(tmp_path / "config_00.csv")
    assert {"z1", "z2", "theta"} <= set(cfg_rows[0])
    dens = sorted(tmp_path.glob("dens_00_*.raw"))
    assert len(dens) >= 2
    values, meta = io.read_field_snapshot(dens[0])
    assert values.shape == (32, 32)
    assert 0 <= values.min() and values.max() <= 1


def test_replay_bitwise(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert run_cli("micro", "run", "--N", "32", "--phi", "0.4", "--pe", "8",
                   "--T", "0.03", "--seeds", "2", "--out", str(a)) == 0
    assert run_cli("--config", str(a / "resolved_config.json"),
                   "--out", str(b)) == 0
    files_a = sorted(p.name for p in a.iterdir())
    files_b = sorted(p.name for p in b.iterdir())
    assert files_a == files_b
    for name in files_a:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_unknown_config_key_rejected(tmp_path, capsys):
    out = tmp_path / "r"
    assert run_cli("coeffs", "--rho-points", "5", "--out", str(out)) == 0
    cfg = json.loads((out / "resolved_config.json").read_text())
    cfg["bogus_key"] = 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(cfg))
    assert run_cli("--config", str(bad), "--out", str(tmp_path / "x")) == 2
    assert "bogus_key" in capsys.readouterr().err


def test_micro_histogram_and_compare(tmp_path):
    run_dir = tmp_path / "run"
    assert run_cli("micro", "run", "--N", "32", "--phi", "0.3", "--pe", "5",
                   "--T", "0.02", "--seeds", "1", "--snapshot-dt", "0.01",
                   "--out", str(run_dir)) == 0
    hdir = tmp_path / "h"
    assert run_cli("micro", "histogram", "--run-dir", str(run_dir),
                   "--t-min", "0", "--t-max", "1", "--out", str(hdir)) == 0
    rows = read_csv(hdir / "histogram.csv")
    total = sum(float(r["probability"]) for r in rows)
    assert total == pytest.approx(1.0, abs=1e-12)
    cdir = tmp_path / "c"
    assert run_cli("compare", "--micro-dir", str(run_dir),
                   "--macro-dir", str(run_dir), "--t-min", "0", "--t-max", "1",
                   "--out", str(cdir)) == 0
    result = json.loads((cdir / "compare.json").read_text())
    assert result["distance"] == 0.0


def test_compare_empty_dir_exit_code(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    rc = run_cli("compare", "--micro-dir", str(empty),
                 "--macro-dir", str(empty), "--out", str(tmp_path / "o"))
    assert rc == 2


def test_lf_line_endings_and_utf8(tmp_path):
    assert run_cli("coeffs", "--rho-points", "5", "--out", str(tmp_path)) == 0
    raw = (tmp_path / "coeffs.csv").read_bytes()
    assert b"\r" not in raw
    raw.decode("utf-8")


def test_parse_helpers():
    assert cli._parse_grid("64x32x16") == (64, 32, 16)
    with pytest.raises(ParameterError):
        cli._parse_grid("64x32")
    assert cli._parse_range("0:1:0.5") == [0.0, 0.5, 1.0]
    with pytest.raises(ParameterError):
        cli._parse_range("1:0:0.5")
