import json

import numpy as np
import pytest

from rabitrack.cli import main
from rabitrack.simulate import load_record


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_simulate_writes_expected_length(tmp_path, capsys):
    path = tmp_path / "rec.csv"
    code, _, _ = run(capsys, "simulate", "--f", 1.0, "--tau-m", 1.0, "--dt", 0.01, "--T", 50, "--seed", 7, "--out", path)
    assert code == 0
    rec = load_record(path)
    assert rec.n == 5000 and rec.model.tau_m == 1.0 and rec.seed == (7,)


def test_simulate_binary_and_drift(tmp_path, capsys):
    path = tmp_path / "rec.bin"
    code, _, _ = run(capsys, "simulate", "--T", 100, "--drift", 0.4, "--eta", 0.5, "--t1", 50, "--t2", 30, "--seed", 1, "--out", path)
    assert code == 0
    rec = load_record(path)
    assert rec.n == 10000 and rec.model.eta == 0.5


def test_fft_then_mle_pipeline(tmp_path, capsys):
    errs = []
    for seed in range(10):
        path = tmp_path / f"rec{seed}.csv"
        run(capsys, "simulate", "--f", 1.0, "--tau-m", 1.0, "--dt", 0.01, "--T", 50, "--seed", seed, "--out", path)
        code, out, _ = run(capsys, "estimate", "fft", path)
        assert code == 0 and "f_fft_mhz" in json.loads(out)
        code, out, _ = run(capsys, "estimate", "mle", path, "--seed-from-fft")
        assert code == 0
        errs.append(abs(json.loads(out)["f_ml"] - 1.0))
    assert np.median(errs) < 0.02


def test_estimate_writes_curve_and_spectrum(tmp_path, capsys):
    rec = tmp_path / "rec.csv"
    run(capsys, "simulate", "--T", 20, "--seed", 2, "--out", rec)
    assert run(capsys, "estimate", "mle", rec, "--curve", tmp_path / "c.csv", "--out", tmp_path / "e.json")[0] == 0
    assert (tmp_path / "c.csv").read_text().startswith("f_mhz,loglik\n")
    assert "f_ml" in json.loads((tmp_path / "e.json").read_text())
    assert run(capsys, "estimate", "fft", rec, "--spectrum", tmp_path / "s.csv")[0] == 0
    assert (tmp_path / "s.csv").read_text().startswith("f_mhz,power\n")


def test_track(tmp_path, capsys):
    rec = tmp_path / "rec.csv"
    run(capsys, "simulate", "--T", 100, "--tau-m", 0.65, "--drift", 0.4, "--seed", 3, "--out", rec)
    code, out, _ = run(capsys, "track", rec)
    lines = out.splitlines()
    assert code == 0 and lines[0] == "t_mid_us,f_ml_mhz,sigma_mhz,f_fft_mhz" and len(lines) == 8


def test_sweep_rows_and_determinism(tmp_path, capsys):
    cfg = tmp_path / "s.toml"
    cfg.write_text('[sweep]\nT_us = [5.0, 10.0]\ntau_m_us = [0.5, 0.65, 1.0]\nn_ensemble = 3\n')
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(capsys, "sweep", "--config", cfg, "--out", a)[0] == 0
    assert run(capsys, "sweep", "--config", cfg, "--out", b, "--threads", 2)[0] == 0

    def body(p):
        return [line for line in p.read_text().splitlines() if not line.startswith("# generated")]

    assert body(a) == body(b)
    assert len([line for line in body(a) if not line.startswith("#")]) == 1 + 2 * 3


def test_projective(capsys, tmp_path):
    code, out, _ = run(capsys, "projective", "--n-meas", 400, "--seed", 1)
    doc = json.loads(out)
    assert code == 0 and doc["N"] == 400 and set(doc) >= {"n", "N", "omega_ml", "sigma"}
    bits = tmp_path / "bits.txt"
    bits.write_text("0011 0\n")
    code, out, _ = run(capsys, "projective", "--bits", bits)
    assert code == 0 and json.loads(out)["n"] == 2


@pytest.mark.parametrize(
    "argv",
    [["bogus"], ["simulate", "--nope"], [], ["estimate"], ["simulate", "--seed", "x"], ["simulate"], ["sweep"], ["estimate", "fft", "r.csv", "--band", "2", "1"]],
)
def test_usage_errors_exit_1(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "r.csv").write_text("# n=1\n# dt_us=0.01\n# tau_m_us=1\n# eta=1\n# t1_us=inf\n# t2_us=inf\n# seed=\n0.1\n")
    assert main(argv) == 1


def test_data_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("# n=2\n# dt_us=0.01\n# tau_m_us=1\n# eta=1\n# t1_us=inf\n# t2_us=inf\n0.5\n")
    assert main(["estimate", "mle", str(bad)]) == 2
    assert main(["estimate", "fft", str(tmp_path / "missing.csv")]) == 2
    cfg = tmp_path / "c.toml"
    cfg.write_text("T_us = [10]\ntau_m = [1]\n")
    assert main(["sweep", "--config", str(cfg)]) == 2
    bits = tmp_path / "b.txt"
    bits.write_text("01x")
    assert main(["projective", "--bits", str(bits)]) == 2


def test_help_exits_0(capsys):
    assert main(["--help"]) == 0
