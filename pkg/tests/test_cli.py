import csv
import filecmp
import os
from pathlib import Path

import pytest

from minentlab import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("cfg", sorted(p.name for p in CONFIGS.glob("*.toml")))
def test_bundled_configs_pass(cfg, tmp_path):
    assert cli.main(["run", str(CONFIGS / cfg), "--out", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "report.txt").exists()
    assert list((tmp_path / "out" / "data").glob("*.csv"))


def test_cap_report_mentions_T_and_interval(tmp_path):
    assert cli.main(["run", str(CONFIGS / "cap.toml"), "--out", str(tmp_path)]) == 0
    rep = (tmp_path / "report.txt").read_text()
    assert "T_delta = 10," in rep
    assert "interval [0.276385, 1.10554]" in rep
    assert (tmp_path / "plots" / "cap_profile.svg").read_text().startswith("<svg")


def test_algebraic_report(tmp_path):
    cfg = _write(tmp_path, 'experiment = "algebraic"\n[algebraic]\nn = 3\ndraws = 10\n')
    assert cli.main(["run", cfg, "--out", str(tmp_path / "o")]) == 0
    rep = (tmp_path / "o" / "report.txt").read_text()
    assert "max 0.649519 at (0.333333, 0.333333, 0.333333)" in rep


def test_malformed_config_exit_1(tmp_path, capsys):
    cfg = _write(tmp_path, 'experiment = "cap"\n[cap]\ndelta = = 0.1\n')
    assert cli.main(["run", cfg]) == 1
    assert "line 3" in capsys.readouterr().err


def test_missing_and_bad_fields_exit_1(tmp_path, capsys):
    assert cli.main(["run", _write(tmp_path, 'experiment = "cap"\n[cap]\nell = 1.0\n')]) == 1
    assert "'delta'" in capsys.readouterr().err
    assert cli.main(["run", _write(tmp_path, 'experiment = "cap"\n[cap]\ndelta = "x"\n')]) == 1
    assert "field 'delta'" in capsys.readouterr().err
    assert cli.main(["run", _write(tmp_path, 'experiment = "nope"\n')]) == 1
    assert cli.main(["run", _write(tmp_path, 'experiment = "cap"\n[cap]\ndelta = 0.1\ntypo = 1\n')]) == 1
    assert "typo" in capsys.readouterr().err
    # precondition violations are configuration errors
    assert cli.main(["run", _write(tmp_path, 'experiment = "tube"\n[tube]\nL = 1.0\nr = 0.5\n')]) == 1


def test_failed_check_exit_2(tmp_path, capsys):
    cfg = _write(tmp_path, 'experiment = "compat"\n[compat]\nboundary_count = 2\n'
                           'boundary_products = [[1.0, 0.5], [2.0, -0.5]]\nexpect = true\n')
    assert cli.main(["run", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "compatibility matches expectation" in capsys.readouterr().err
    assert "FAIL" in (tmp_path / "o" / "report.txt").read_text()


def test_determinism(tmp_path):
    for name in ("cap.toml", "algebraic.toml", "barycenter.toml", "jacobi.toml"):
        a, b = tmp_path / f"a_{name}", tmp_path / f"b_{name}"
        assert cli.main(["run", str(CONFIGS / name), "--out", str(a), "--seed", "42"]) == 0
        assert cli.main(["run", str(CONFIGS / name), "--out", str(b), "--seed", "42"]) == 0
        files = sorted(os.listdir(a / "data"))
        match, mismatch, errors = filecmp.cmpfiles(a / "data", b / "data", files, shallow=False)
        assert not mismatch and not errors


def test_seed_changes_random_outputs(tmp_path):
    cli.main(["run", str(CONFIGS / "jacobi.toml"), "--out", str(tmp_path / "a"), "--seed", "1"])
    cli.main(["run", str(CONFIGS / "jacobi.toml"), "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a/data/jacobi_random.csv").read_bytes() != (tmp_path / "b/data/jacobi_random.csv").read_bytes()


def test_flatten_sweep_monotone(tmp_path):
    out = tmp_path / "s"
    assert cli.main(["sweep", str(CONFIGS / "flatten.toml"), "--param", "delta", "--values", "0.2,0.1,0.05",
                     "--out", str(out)]) == 0
    rows = _rows(out / "sweep.csv")
    d = [float(r["log10_abs_vol_diff"]) for r in rows]
    assert d[0] > d[1] > d[2]
    assert _rows(out / "data" / "sweep_volume.csv")[0]["delta"] == "0.20000000000000001"


def test_freeproduct_sweep_flag_flips_once(tmp_path):
    cfg = _write(tmp_path, 'experiment = "freeproduct"\n[freeproduct]\nL = 3.0\ns_grid = [0.5]\ncutoff = 12.0\n'
                           '[freeproduct.factor1]\nkind = "free"\nrank = 1\n'
                           '[freeproduct.factor2]\nkind = "free"\nrank = 1\n')
    out = tmp_path / "s"
    assert cli.main(["sweep", cfg, "--param", "L", "--values", "0.5,0.8,1.0,1.2,1.5,2.0", "--out", str(out)]) == 0
    flags = [r["converged"] for r in _rows(out / "sweep.csv")]
    assert flags == ["0", "0", "0", "1", "1", "1"]


def test_sweep_empty_values(tmp_path):
    assert cli.main(["sweep", str(CONFIGS / "flatten.toml"), "--param", "delta", "--values", "",
                     "--out", str(tmp_path)]) == 1


def test_sweep_nested_param(tmp_path):
    out = tmp_path / "s"
    # a dotted name addresses a field of a named table
    assert cli.main(["sweep", str(CONFIGS / "conformal.toml"), "--param", "cusp.delta", "--values", "0.2,0.1",
                     "--out", str(out)]) == 0
    assert len(_rows(out / "sweep.csv")) == 2


def test_grid_flag(tmp_path):
    assert cli.main(["run", str(CONFIGS / "cap.toml"), "--out", str(tmp_path), "--grid", "1"]) == 1
    assert cli.main(["run", str(CONFIGS / "cap.toml"), "--out", str(tmp_path), "--grid", "500"]) == 0
