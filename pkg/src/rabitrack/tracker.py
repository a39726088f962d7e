"""Moving-window tracking of a drifting Rabi frequency.

Each window is estimated by a filtered-periodogram seed followed by a
maximum-likelihood refinement. With chaining enabled, the previous window
supplies a Gaussian prior (its estimate, with its uncertainty inflated by a
drift allowance), which narrows the search and is added to the
log-likelihood.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mle import EstimateResult, FrequencyGrid, GaussianPrior, Likelihood, default_spacing, estimate_frequency, refine_and_fit
from .model import MeasurementModel, ParaState, PureState
from .simulate import ReadoutRecord
from .spectral import default_half_width, fft_estimate


class PriorDominanceWarning(UserWarning):
    """The prior, not the data, determines a window estimate."""


@dataclass(frozen=True)
class TrackerConfig:
    """Settings for :func:`track`; durations in us, frequencies in MHz.

    ``seed_mode`` selects how the search grid of a window is centred:
    ``"fft"`` on the periodogram peak, ``"previous"`` on the last estimate,
    ``"both"`` on the last estimate but widened to cover the FFT peak.
    """

    window: float = 40.0
    step: float = 10.0
    seed_mode: str = "both"
    drift_allowance: float = 0.05
    band: tuple[float, float] | None = (0.0, 2.0)
    fft_halo: float = 0.3
    mle_halo: float = 0.3
    resolution: float | None = None
    filter_half_width: int | None = None
    exclude_dc_bins: int = 2
    chain: bool = True
    window_initial: str = "mixed"

    def __post_init__(self) -> None:
        if not 0 < self.step <= self.window:
            raise ValueError("need 0 < step <= window")
        if self.seed_mode not in ("fft", "previous", "both"):
            raise ValueError(f"unknown seed_mode {self.seed_mode!r}")
        if self.window_initial not in ("mixed", "ground"):
            raise ValueError(f"unknown window_initial {self.window_initial!r}")
        if self.drift_allowance < 0:
            raise ValueError("drift_allowance must be >= 0")

    def initial_state(self):
        return ParaState.mixed() if self.window_initial == "mixed" else PureState.ground()


@dataclass
class DriftTrace:
    t_mid: np.ndarray
    f_ml: np.ndarray
    sigma: np.ndarray
    f_fft: np.ndarray
    t_start: np.ndarray
    t_end: np.ndarray
    converged: np.ndarray
    estimates: list[EstimateResult] = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return self.t_mid.size

    def rms_deviation(self, truth, which: str = "f_ml") -> float:
        """RMS distance to ``truth`` (a profile or a callable of t in us)."""
        f = getattr(self, which)
        ref = truth.frequency(self.t_mid) if hasattr(truth, "frequency") else truth(self.t_mid)
        return float(np.sqrt(np.mean((f - ref) ** 2)))

    def to_csv(self, path=None) -> str:
        """Write (and return) the trace as CSV."""
        lines = ["t_mid_us,f_ml_mhz,sigma_mhz,f_fft_mhz"]
        for row in zip(self.t_mid.tolist(), self.f_ml.tolist(), self.sigma.tolist(), self.f_fft.tolist()):
            lines.append(",".join(repr(v) for v in row))
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def _fft_band(prior: GaussianPrior | None, cfg: TrackerConfig):
    if prior is None:
        return cfg.band
    lo = max(0.0, prior.mean - cfg.fft_halo)
    return (lo, prior.mean + cfg.fft_halo)


def window_estimate(
    record_slice: ReadoutRecord,
    model: MeasurementModel,
    seed_prior: GaussianPrior | None,
    cfg: TrackerConfig,
    initial=None,
) -> tuple[EstimateResult, float]:
    """Estimate one window; returns ``(estimate, fft_peak_mhz)``.

    Without a prior this is a plain FFT-seeded MLE of the slice.
    """
    initial = cfg.initial_state() if initial is None else initial
    T = record_slice.duration
    hw = cfg.filter_half_width or default_half_width(T, model.tau_m)
    f_fft, _ = fft_estimate(record_slice, _fft_band(seed_prior, cfg), hw, cfg.exclude_dc_bins, tau_m=model.tau_m)
    lik = Likelihood(record_slice.samples, model, initial)
    if seed_prior is None:
        est = estimate_frequency(lik, seed_f=f_fft, halo=cfg.mle_halo, resolution=cfg.resolution)
        return est, f_fft

    half = 3.0 * seed_prior.std
    use_fft = cfg.seed_mode != "previous" and seed_prior.std >= 1.0 / T
    if cfg.seed_mode == "fft":
        center = f_fft
    else:
        center = seed_prior.mean
        if use_fft:
            half = max(half, abs(f_fft - seed_prior.mean) + seed_prior.std)
    n = max(21, int(math.ceil(2 * half / default_spacing(T))) + 1)
    grid = FrequencyGrid.around(center, half, n, origin="seeded")
    est = refine_and_fit(lik, grid, prior=seed_prior, resolution=cfg.resolution)

    if est.converged:
        prior_curv = 1.0 / seed_prior.std**2
        data_curv = 1.0 / est.sigma**2 - prior_curv
        if data_curv * 10.0 < prior_curv:
            what = f"the data curvature {data_curv:.3g}" if data_curv > 0 else "a likelihood that is not concave there"
            warnings.warn(
                f"prior curvature {prior_curv:.3g} dominates {what}",
                PriorDominanceWarning,
                stacklevel=2,
            )
    return est, f_fft


def track(
    record: ReadoutRecord,
    model: MeasurementModel | None = None,
    cfg: TrackerConfig | None = None,
    initial=None,
    threads: int = 1,
) -> DriftTrace:
    """Slide a window over ``record`` and estimate the frequency in each.

    Window ``k`` covers ``[k step, k step + window)`` and is reported at its
    midpoint. With chaining, a window whose fit fails passes no prior on, so
    the next one falls back to an unchained FFT-seeded search. Without
    chaining the windows are independent and ``threads`` of them run at
    once; the output does not depend on ``threads``.
    """
    model = model or record.model
    cfg = cfg or TrackerConfig()
    dt = record.dt
    n_win = int(round(cfg.window / dt))
    n_step = int(round(cfg.step / dt))
    if n_win > record.n:
        raise ValueError(f"record ({record.duration} us) shorter than the window ({cfg.window} us)")
    starts = list(range(0, record.n - n_win + 1, n_step))

    def run(s, prior):
        return window_estimate(record.slice(s, s + n_win), model, prior, cfg, initial)

    if cfg.chain:
        outputs = []
        prev: EstimateResult | None = None
        for s in starts:
            prior = None
            if prev is not None and prev.converged:
                prior = GaussianPrior(prev.f_ml, prev.sigma + cfg.drift_allowance)
            outputs.append(run(s, prior))
            prev = outputs[-1][0]
    elif threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            outputs = list(pool.map(lambda s: run(s, None), starts))
    else:
        outputs = [run(s, None) for s in starts]

    ests = [o[0] for o in outputs]
    k = np.arange(len(starts))
    return DriftTrace(
        t_mid=k * cfg.step + cfg.window / 2,
        f_ml=np.array([e.f_ml for e in ests]),
        sigma=np.array([e.sigma for e in ests]),
        f_fft=np.array([o[1] for o in outputs]),
        t_start=np.array(starts) * dt,
        t_end=(np.array(starts) + n_win) * dt,
        converged=np.array([e.converged for e in ests], dtype=bool),
        estimates=ests,
    )
