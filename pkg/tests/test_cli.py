import csv

import numpy as np
import pytest

from elastic_afem import cli
from elastic_afem.adaptive import CSV_HEADER, AdaptiveConfig, read_trace_csv, run
from elastic_afem.assembly import MaterialParams


def test_run_writes_case_directory(tmp_path):
    code = cli.main(["run", "--geometry", "unit_square", "--nu", "0.35", "--mode", "uniform", "--levels", "3", "--out", str(tmp_path)])
    assert code == 0
    case = tmp_path / "unit_square_0.35_uniform"
    assert {p.name for p in case.iterdir()} >= {"trace.csv", "final.vtk", "meta.txt"}
    rows = read_trace_csv(case / "trace.csv")
    assert len(rows) == 3
    meta = (case / "meta.txt").read_text()
    assert "nu = 0.35" in meta and "scipy =" in meta and "status = ok" in meta


def test_cli_matches_library(tmp_path):
    cli.main(["run", "--geometry", "lshape2d", "--nu", "0.49", "--max-dofs", "3000", "--out", str(tmp_path)])
    rows = read_trace_csv(tmp_path / "lshape2d_0.49_adaptive" / "trace.csv")
    lib = run(AdaptiveConfig(geometry="lshape2d", nu=0.49, max_dofs=3000))
    assert [r["omega_h"] for r in rows] == list(lib.omegas)
    assert [r["N"] for r in rows] == [int(n) for n in lib.N]


def test_uniform_limit_monotone(tmp_path):
    cli.main(["run", "--geometry", "lshape2d", "--nu", "0.5", "--mode", "uniform", "--levels", "6", "--out", str(tmp_path)])
    om = [r["omega_h"] for r in read_trace_csv(tmp_path / "lshape2d_0.5_uniform" / "trace.csv")]
    assert len(om) == 6 and np.all(np.diff(om) > 0)


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('geometry = "unit_square"\nnu = 0.3\nmode = "uniform"\nlevels = 2\nref-omega = 4.0\n')
    code = cli.main(["run", "--config", str(cfg), "--nu", "0.25", "--out", str(tmp_path), "--vtk-every", "1"])
    assert code == 0
    case = tmp_path / "unit_square_0.25_uniform"
    assert (case / "iter_000.vtk").exists() and (case / "iter_001.vtk").exists()
    rows = read_trace_csv(case / "trace.csv")
    assert len(rows) == 2 and not np.isnan(rows[0]["err"])


def test_bad_config_key(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("colour = 3\n")
    with pytest.raises(SystemExit):
        cli.main(["run", "--config", str(cfg)])


def test_run_reports_failure(tmp_path, capsys):
    assert cli.main(["run", "--geometry", "unit_square", "--beta", "1.5", "--out", str(tmp_path)]) != 0
    assert "error" in capsys.readouterr().err


def test_selftest_verbose(capsys):
    assert cli.main(["selftest", "--verbose"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") >= 4


def test_selftest_catches_corrupted_c_trace(monkeypatch, capsys):
    real = MaterialParams.c_trace
    monkeypatch.setattr(MaterialParams, "c_trace", lambda self, n: -real(self, n))
    assert cli.main(["selftest"]) != 0
    assert "FAIL" in capsys.readouterr().out


def test_paper_reduced(tmp_path, capsys):
    code = cli.main(["paper", "--out", str(tmp_path), "--max-dofs-2d", "2500", "--skip-3d", "--workers", "1"])
    assert code == 0
    with open(tmp_path / "table2.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["nu"]) for r in rows] == [0.35, 0.49, 0.5]
    with open(tmp_path / "slopes.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 6
    for nu in ("0.35", "0.49", "0.5"):
        for mode in ("uniform", "adaptive"):
            header = (tmp_path / f"lshape2d_{nu}_{mode}" / "trace.csv").read_text().splitlines()[0]
            assert header == ",".join(CSV_HEADER)
    assert "table2 nu=0.49" in capsys.readouterr().out


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("ELASTIC_AFEM_THREADS", "1")
    assert cli.max_workers() == 1
