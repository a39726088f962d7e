import json
import math
import time

import pytest
from hypothesis import given
from hypothesis import strategies as st

import rabitrack.harness as harness
from rabitrack.harness import CSV_COLUMNS, ConfigError, SweepConfig, rms_error, run_sweep
from rabitrack.simulate import make_rng, simulate_record
from rabitrack.model import MeasurementModel
from rabitrack.spectral import fft_estimate

SMALL = dict(T_us=[5.0, 10.0], tau_m_us=[0.5, 1.0], n_ensemble=4, seed=3)


def strip_stamp(text):
    return "\n".join(line for line in text.splitlines() if not line.startswith("# generated:"))


class TestRms:
    def test_exact(self):
        assert rms_error([1.0, 1.0, 1.0], 1.0) == 0.0

    def test_symmetric_pair(self):
        assert rms_error([1.3, 0.7], 1.0) == pytest.approx(0.3, rel=1e-14)

    def test_empty(self):
        with pytest.raises(ValueError):
            rms_error([], 1.0)

    @given(st.integers(0, 10_000), st.integers(1, 200))
    def test_matches_two_pass_mean_of_squares(self, seed, n):
        x = make_rng(seed).normal(1.0, 0.3, n)
        total = 0.0
        for v in x:
            total += (v - 1.0) ** 2
        assert rms_error(x, 1.0) == pytest.approx(math.sqrt(total / n), rel=1e-12)


class TestConfig:
    def test_toml(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text('[sweep]\nT_us = [10.0]\ntau_m_us = [0.5, 1.0]\nn_ensemble = 3\nt1_us = 50.0\n')
        cfg = SweepConfig.load(path)
        assert cfg.T_us == (10.0,) and cfg.tau_m_us == (0.5, 1.0) and cfg.t1_us == 50.0
        assert math.isinf(cfg.t2_us)
        assert len(cfg.cells()) == 2

    def test_json(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"T_us": [10, 20], "tau_m_us": 0.5, "estimator": "fft", "t2_us": None}))
        cfg = SweepConfig.load(path)
        assert cfg.cells() == [(10.0, 0.5), (20.0, 0.5)]
        assert cfg.estimator == "fft"

    def test_shipped_configs_parse(self):
        from pathlib import Path

        root = Path(__file__).resolve().parents[1] / "configs"
        desk = SweepConfig.load(root / "sweep_desk.toml")
        assert len(desk.cells()) == 25
        assert len(SweepConfig.load(root / "sweep_full.toml").cells()) == 50 * 16

    @pytest.mark.parametrize(
        "data,match",
        [
            ({"T_us": [10], "tau_m": [1]}, "unknown config keys"),
            ({"T_us": [10]}, "missing"),
            ({"T_us": [], "tau_m_us": [1]}, "nonempty"),
            ({"T_us": [10], "tau_m_us": [1], "n_ensemble": 0}, "n_ensemble"),
            ({"T_us": [10], "tau_m_us": [1], "estimator": "x"}, "estimator"),
            ({"T_us": [10], "tau_m_us": [-1]}, "positive"),
            ({"T_us": [10], "tau_m_us": [1], "band_mhz": [2, 1]}, "band"),
        ],
    )
    def test_invalid(self, data, match):
        with pytest.raises(ConfigError, match=match):
            SweepConfig.from_dict(data)

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text("T_us = [1,\n")
        with pytest.raises(ConfigError):
            SweepConfig.load(path)


@pytest.fixture(scope="module")
def baseline():
    return run_sweep(SweepConfig(**SMALL))


class TestSweep:
    def test_shape_and_columns(self, baseline):
        assert len(baseline.cells) == 4
        text = baseline.to_csv(timestamp="x")
        header = [line for line in text.splitlines() if not line.startswith("#")][0]
        assert header.split(",") == list(CSV_COLUMNS)
        assert all(c.rms_mle_mhz >= 0 and c.rms_fft_mhz >= 0 for c in baseline.cells)

    def test_member_streams(self, baseline):
        cfg = SweepConfig(**SMALL)
        rec = simulate_record(1.0, MeasurementModel(tau_m=1.0, dt=0.01), 1000, seed=(3, 3, 2))
        assert baseline.cell(10.0, 1.0).f_fft[2] == fft_estimate(rec, band=cfg.band_mhz)[0]

    def test_threads_reproduce_serial(self, baseline):
        par = run_sweep(SweepConfig(**SMALL), threads=3)
        assert strip_stamp(par.to_csv()) == strip_stamp(baseline.to_csv())

    def test_cell_order_irrelevant(self, baseline):
        perm = run_sweep(SweepConfig(**SMALL), order=[3, 1, 0, 2])
        assert strip_stamp(perm.to_csv()) == strip_stamp(baseline.to_csv())

    def test_seed_changes_results(self, baseline):
        other = run_sweep(SweepConfig(**dict(SMALL, seed=4)))
        assert strip_stamp(other.to_csv()) != strip_stamp(baseline.to_csv())

    def test_bad_order(self):
        with pytest.raises(ValueError):
            run_sweep(SweepConfig(**SMALL), order=[0, 0, 1, 2])

    def test_failures_are_counted(self, monkeypatch):
        real = harness.estimate_frequency
        calls = {"n": 0}

        def flaky(rec, **kw):
            calls["n"] += 1
            if calls["n"] % 2:
                raise FloatingPointError("boom")
            return real(rec, **kw)

        monkeypatch.setattr(harness, "estimate_frequency", flaky)
        res = run_sweep(SweepConfig(**dict(SMALL, estimator="mle")))
        assert sum(c.failed_mle for c in res.cells) == 8
        assert all(math.isnan(c.rms_fft_mhz) for c in res.cells)
        assert all(math.isfinite(c.rms_mle_mhz) for c in res.cells)

    def test_csv_metadata(self, baseline, tmp_path):
        baseline.to_csv(tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0].startswith("# generated:")
        assert "# master_seed=3" in lines


def test_fft_cost_n_log_n():
    def best_time(n):
        r = make_rng(1).normal(size=n)
        from rabitrack.spectral import periodogram, peak_estimate, triangular_filter

        times = []
        for _ in range(7):
            t0 = time.perf_counter()
            peak_estimate(triangular_filter(periodogram(r, 0.01), 4))
            times.append(time.perf_counter() - t0)
        return min(times)

    n = 2**19
    ratio = best_time(2 * n) / best_time(n)
    expected = 2 * math.log(2 * n) / math.log(n)
    assert expected / 2.2 < ratio < expected * 2.2
