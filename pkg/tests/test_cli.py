import csv
import datetime as dt
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from gevre import gev
from gevre.blocks import BlockSeries, write_blocks_csv
from gevre.cli import main, replicate_seeds
from gevre.mcmc import ChainDraws


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def fifty(tmp_path):
    x = gev.sample(gev.GevParams(10, 2, 0.1), 50, np.random.default_rng(3))
    bs = BlockSeries.from_values(x, tags={"series": ["a", "b"] * 25})
    path = tmp_path / "maxima.csv"
    write_blocks_csv(bs, path)
    return path


def const_chain(tmp_path, mu=0.0, sigma=1.0, eps=0.0, n=50):
    d = ChainDraws(("mu", "sigma", "eps"), np.tile([mu, sigma, eps], (n, 1)))
    d.to_csv(tmp_path / "chain.csv")
    return tmp_path / "chain.csv"


# --- blocks ---------------------------------------------------------------

def test_blocks_three_rows(tmp_path, capsys):
    src = tmp_path / "sp.csv"
    src.write_text("date,value\n1984-01-02,1.0\n1984-05-01,3.2\n1984-09-09,2.1\n")
    code, out, _ = run(capsys, "blocks", "--input", src, "--rule", "year", "--out", tmp_path / "o")
    assert code == 0
    assert rows(tmp_path / "o" / "blocks.csv") == [["block", "series", "year", "maximum"], ["1984", "sp", "1984", "3.2"]]
    assert (tmp_path / "o" / "summary.txt").exists() and (tmp_path / "o" / "manifest.txt").exists()
    assert "3.20" in out


def test_blocks_monthly_brute_force(tmp_path, capsys):
    rng = np.random.default_rng(0)
    d0 = dt.date(2003, 2, 1)
    days = [d0 + dt.timedelta(days=i) for i in range(28 + 31)]
    vals = rng.normal(size=len(days))
    src = tmp_path / "d.csv"
    src.write_text("date,value\n" + "".join(f"{d},{float(v)!r}\n" for d, v in zip(days, vals)))
    code, _, _ = run(capsys, "blocks", "--input", src, "--rule", "month", "--out", tmp_path / "o")
    assert code == 0
    body = rows(tmp_path / "o" / "blocks.csv")[1:]
    assert [r[0] for r in body] == ["2003-02", "2003-03"]
    assert [float(r[-1]) for r in body] == [vals[:28].max(), vals[28:].max()]


def test_blocks_missing_file(tmp_path, capsys):
    code, _, err = run(capsys, "blocks", "--input", tmp_path / "absent.csv", "--out", tmp_path / "o")
    assert code == 2
    assert err.startswith("error[DATA]:") and "absent.csv" in err
    assert len(err.strip().splitlines()) == 1


def test_blocks_bad_row_reports_line(tmp_path, capsys):
    src = tmp_path / "bad.csv"
    src.write_text("date,value\n2000-01-01,1\n2000-01-02,x\n")
    code, _, err = run(capsys, "blocks", "--input", src, "--out", tmp_path / "o")
    assert code == 2 and "bad.csv:3" in err


# --- fit ------------------------------------------------------------------

def test_fit_smoke_and_determinism(tmp_path, capsys, fifty):
    t0 = time.perf_counter()
    args = ["fit", "--input", fifty, "--iterations", 2000, "--burn-in", 500, "--seed", 4]
    code, out, _ = run(capsys, *args, "--out", tmp_path / "a")
    assert time.perf_counter() - t0 < 30
    assert code == 0
    params = [ln[12:32].strip() for ln in out.splitlines()[2:5]]
    assert params == ["eps", "mu", "sigma"]
    for name in ("chain.csv", "summary.txt", "diagnostics.json", "manifest.txt"):
        assert (tmp_path / "a" / name).exists()
    assert run(capsys, *args, "--out", tmp_path / "b")[0] == 0
    assert (tmp_path / "a" / "chain.csv").read_bytes() == (tmp_path / "b" / "chain.csv").read_bytes()
    diag = json.loads((tmp_path / "a" / "diagnostics.json").read_text())
    assert diag["retained"] == 300


def test_fit_random_rows(tmp_path, capsys, fifty):
    code, out, _ = run(capsys, "fit", "--input", fifty, "--mode", "random", "--group-tag", "series",
                       "--iterations", 2000, "--burn-in", 500, "--out", tmp_path / "r")
    assert code == 0
    for name in ("tau2", "delta[a]", "delta[b]", "R^10"):
        assert name in out
    header = rows(tmp_path / "r" / "chain.csv")[0]
    assert header == ["mu", "sigma", "eps", "tau", "tau2", "delta[a]", "delta[b]"]


def test_fit_absent_group_tag(tmp_path, capsys, fifty):
    code, _, err = run(capsys, "fit", "--input", fifty, "--mode", "random", "--group-tag", "station",
                       "--iterations", 200, "--burn-in", 50, "--out", tmp_path / "o")
    assert code == 2
    assert "station" in err and err.startswith("error[MODEL]")


# --- returns --------------------------------------------------------------

def test_returns_constant_chain(tmp_path, capsys, fifty):
    chain = const_chain(tmp_path, 10.0, 2.0, 0.1)
    code, _, _ = run(capsys, "returns", "--chain", chain, "--input", fifty, "--k", 10, "--out", tmp_path / "o")
    assert code == 0
    rep = json.loads((tmp_path / "o" / "report_k10.json").read_text())
    assert rep["sd"] == 0.0
    assert rep["estimate"] == rep["lower95"] == rep["upper95"]


def test_returns_gumbel_chain(tmp_path, capsys, fifty):
    chain = const_chain(tmp_path)
    code, out, _ = run(capsys, "returns", "--chain", chain, "--input", fifty, "--k", 10, "--k", 100,
                       "--out", tmp_path / "o")
    assert code == 0
    rep = json.loads((tmp_path / "o" / "report_k10.json").read_text())
    assert rep["estimate"] == pytest.approx(2.250367, abs=1e-6)
    assert (tmp_path / "o" / "report_k100.txt").exists()
    assert len(rows(tmp_path / "o" / "rk_draws_k10.csv")) == 51
    assert "2.25" in out


def test_returns_k_one(tmp_path, capsys, fifty):
    code, _, err = run(capsys, "returns", "--chain", const_chain(tmp_path), "--input", fifty, "--k", 1,
                       "--out", tmp_path / "o")
    assert code != 0 and "k must exceed 1" in err


def test_returns_schema_mismatch(tmp_path, capsys, fifty):
    bad = tmp_path / "c.csv"
    bad.write_text("alpha,beta\n1,2\n")
    code, _, err = run(capsys, "returns", "--chain", bad, "--input", fifty, "--out", tmp_path / "o")
    assert code == 2 and "missing" in err


# --- simulate / mle -------------------------------------------------------

def test_simulate_and_mle(tmp_path, capsys):
    sim = ["simulate", "--tau", 0, "--groups", 1, "--per-group", 100, "--seed", 7]
    assert run(capsys, *sim, "--out", tmp_path / "s1")[0] == 0
    panel = tmp_path / "s1" / "panel.csv"
    assert len(rows(panel)) == 101
    assert run(capsys, *sim, "--out", tmp_path / "s2")[0] == 0
    assert panel.read_bytes() == (tmp_path / "s2" / "panel.csv").read_bytes()
    code, out, _ = run(capsys, "mle", "--input", panel, "--out", tmp_path / "m")
    assert code == 0
    fit = json.loads((tmp_path / "m" / "mle.json").read_text())
    assert fit["converged"] is True
    assert json.loads(out) == fit


def test_mle_too_small(tmp_path, capsys):
    small = tmp_path / "three.csv"
    write_blocks_csv(BlockSeries.from_values([1.0, 2.0, 3.0]), small)
    code, _, err = run(capsys, "mle", "--input", small, "--out", tmp_path / "m")
    assert code == 2 and "at least 10" in err


# --- manifests, config and exit codes -------------------------------------

def test_manifest_replays_run(tmp_path, capsys, monkeypatch, fifty):
    monkeypatch.chdir(tmp_path)
    code, _, _ = run(capsys, "fit", "--input", fifty, "--iterations", 1500, "--burn-in", 300, "--seed", 9,
                     "--out", "first")
    assert code == 0
    manifest = (tmp_path / "first" / "manifest.txt").read_text()
    assert "seed=9" in manifest and "iterations=1500" in manifest
    code, _, _ = run(capsys, "fit", "--config", "first/manifest.txt", "--out", "second")
    assert code == 0
    assert (tmp_path / "first" / "chain.csv").read_bytes() == (tmp_path / "second" / "chain.csv").read_bytes()
    assert (tmp_path / "second" / "manifest.txt").read_text() == manifest


def test_flags_override_config(tmp_path, capsys, fifty):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"input={fifty}\niterations=900\nburn_in=100\nthin=4\n# comment\n")
    code, _, _ = run(capsys, "fit", "--config", cfg, "--thin", 2, "--out", tmp_path / "o")
    assert code == 0
    assert len(rows(tmp_path / "o" / "chain.csv")) == 1 + 400


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour=red\n")
    code, _, err = run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "o")
    assert code == 1 and "colour" in err


def test_usage_errors(capsys):
    assert run(capsys)[0] == 1
    assert run(capsys, "fit", "--bogus")[0] == 1
    code, _, err = run(capsys, "fit")
    assert code == 1 and err.startswith("error[USAGE]") and "--input" in err


def test_replicate_seeds_are_stable():
    a = replicate_seeds(5, 4)
    assert a == replicate_seeds(5, 4)
    assert a[:2] == replicate_seeds(5, 2)
    assert len({s for pair in a for s in pair}) == 8


def test_replicate_study_small(tmp_path, capsys):
    code, out, _ = run(capsys, "replicate-study", "--mode", "fixed", "--groups", 1, "--per-group", 60,
                       "--replicates", 2, "--iterations", 1200, "--burn-in", 200, "--out", tmp_path / "o")
    assert code == 0
    study = json.loads((tmp_path / "o" / "study.json").read_text())
    assert set(study) == {"mu", "sigma", "eps", "R10"}
    assert all(v["replicates"] == 2 for v in study.values())


def test_module_entry_point_exit_code(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gevre", "mle", "--input", str(tmp_path / "none.csv")],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert proc.stderr.startswith("error[DATA]")
