import time
import warnings

import numpy as np
import pytest

import rabitrack.tracker as tracker_mod
from rabitrack.mle import EstimateResult, GaussianPrior, Likelihood, estimate_frequency
from rabitrack.model import MeasurementModel, ParaState
from rabitrack.simulate import OmegaProfile, simulate_record
from rabitrack.tracker import DriftTrace, PriorDominanceWarning, TrackerConfig, track, window_estimate

MODEL = MeasurementModel(tau_m=0.65, dt=0.01)


@pytest.fixture(scope="module")
def constant_record():
    return simulate_record(1.0, MODEL, 20000, seed=(91, 0))


class TestConfig:
    @pytest.mark.parametrize(
        "kw", [dict(step=0), dict(step=50.0), dict(seed_mode="x"), dict(window_initial="x"), dict(drift_allowance=-1)]
    )
    def test_rejects_invalid(self, kw):
        with pytest.raises(ValueError):
            TrackerConfig(**kw)

    def test_defaults_follow_the_moving_window_setup(self):
        cfg = TrackerConfig()
        assert (cfg.window, cfg.step, cfg.drift_allowance) == (40.0, 10.0, 0.05)
        assert cfg.initial_state() == ParaState.mixed()


class TestWindowEstimate:
    def test_without_prior_is_static_fft_then_mle(self):
        rec = simulate_record(1.0, MODEL, 4000, seed=1)
        cfg = TrackerConfig()
        est, f_fft = window_estimate(rec, MODEL, None, cfg)
        ref = estimate_frequency(Likelihood(rec, MODEL, ParaState.mixed()), seed_f=f_fft, halo=cfg.mle_halo)
        assert est.f_ml == ref.f_ml and est.sigma == ref.sigma

    def test_tight_prior_dominates_and_warns(self):
        rec = simulate_record(1.0, MODEL, 4000, seed=2)
        prior = GaussianPrior(1.1, 1e-5)
        with pytest.warns(PriorDominanceWarning):
            est, _ = window_estimate(rec, MODEL, prior, TrackerConfig())
        assert est.f_ml == pytest.approx(1.1, abs=1e-4)

    def test_loose_prior_does_not_warn(self):
        rec = simulate_record(1.0, MODEL, 4000, seed=3)
        with warnings.catch_warnings():
            warnings.simplefilter("error", PriorDominanceWarning)
            window_estimate(rec, MODEL, GaussianPrior(1.0, 0.1), TrackerConfig())

    def test_sweet_spot_window_rms(self):
        def rms(tau):
            m = MeasurementModel(tau_m=tau, dt=0.01)
            errs = [window_estimate(simulate_record(1.0, m, 4000, seed=(4, s)), m, None, TrackerConfig())[0].f_ml - 1 for s in range(40)]
            return np.sqrt(np.mean(np.square(errs)))

        assert rms(0.65) < rms(0.05)


class TestTrack:
    def test_timestamps(self, constant_record):
        cfg = TrackerConfig(window=40.0, step=10.0)
        tr = track(constant_record, MODEL, cfg)
        k = np.arange(len(tr))
        np.testing.assert_array_equal(tr.t_mid, k * 10.0 + 20.0)
        assert len(tr) == (200 - 40) // 10 + 1
        np.testing.assert_allclose(tr.t_end - tr.t_start, 40.0)

    def test_constant_frequency_flat(self, constant_record):
        tr = track(constant_record, MODEL)
        assert tr.converged.all()
        assert np.all(np.abs(tr.f_ml - 1.0) < 3 * tr.sigma)

    def test_unchained_threads_identical(self, constant_record):
        cfg = TrackerConfig(chain=False)
        a = track(constant_record, MODEL, cfg, threads=1)
        b = track(constant_record, MODEL, cfg, threads=3)
        np.testing.assert_array_equal(a.f_ml, b.f_ml)
        np.testing.assert_array_equal(a.sigma, b.sigma)

    def test_failed_window_breaks_the_chain(self, constant_record, monkeypatch):
        seen = []
        real = tracker_mod.window_estimate

        def fake(slice_, model, prior, cfg, initial):
            seen.append(prior)
            est, f = real(slice_, model, prior, cfg, initial)
            if len(seen) == 2:
                est = EstimateResult(est.f_ml, float("nan"), False, est.loglik_max, est.fit_slice)
            return est, f

        monkeypatch.setattr(tracker_mod, "window_estimate", fake)
        tr = track(constant_record, MODEL, TrackerConfig())
        assert not tr.converged[1]
        assert seen[0] is None and seen[1] is not None and seen[2] is None and seen[3] is not None

    def test_record_shorter_than_window(self):
        with pytest.raises(ValueError):
            track(simulate_record(1.0, MODEL, 100, seed=0), MODEL)

    def test_csv(self, constant_record, tmp_path):
        tr = track(constant_record, MODEL, TrackerConfig(chain=False))
        text = tr.to_csv(tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "t_mid_us,f_ml_mhz,sigma_mhz,f_fft_mhz"
        assert len(lines) == len(tr) + 1 and text == (tmp_path / "t.csv").read_text()

    def test_rms_deviation(self):
        tr = DriftTrace(np.array([1.0, 2.0]), np.array([1.1, 0.9]), np.ones(2), np.ones(2), np.zeros(2), np.ones(2), np.ones(2, bool))
        assert tr.rms_deviation(OmegaProfile.constant(1.0)) == pytest.approx(0.1)
        assert tr.rms_deviation(lambda t: np.ones_like(t), which="f_fft") == 0.0


@pytest.fixture(scope="module")
def profiles():
    t = np.linspace(0, 480, 961)
    sine = OmegaProfile(tuple(t), tuple(1 + 0.2 * np.sin(2 * np.pi * t / 80)), "sine80")
    return {"sine": sine, "const": OmegaProfile.constant(1.0)}


class TestWindowTradeoff:
    def _rms_pair(self, prof, seed):
        rec = simulate_record(prof, MODEL, 48000, seed=(90, seed))
        out = []
        for w in (40.0, 80.0):
            tr = track(rec, MODEL, TrackerConfig(window=w, step=10.0))
            out.append(tr.rms_deviation(prof))
        return out

    @pytest.mark.parametrize("seed", [0, 1])
    def test_short_window_follows_fast_drift(self, profiles, seed):
        short, long_ = self._rms_pair(profiles["sine"], seed)
        assert short < long_

    @pytest.mark.parametrize("seed", [0, 1])
    def test_long_window_wins_without_drift(self, profiles, seed):
        short, long_ = self._rms_pair(profiles["const"], seed)
        assert long_ < short


def test_cost_linear_in_record_length():
    cfg = TrackerConfig(chain=False)

    def best_time(n):
        rec = simulate_record(1.0, MODEL, n, seed=5)
        track(rec, MODEL, cfg)
        times = []
        for _ in range(3):
            t0 = time.perf_counter()
            track(rec, MODEL, cfg)
            times.append(time.perf_counter() - t0)
        return min(times)

    ratio = best_time(40000) / best_time(20000)
    assert 2 / 2.2 < ratio < 2 * 2.2
