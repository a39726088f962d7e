"""Periodogram-based frequency estimation.

PSD normalization: ``S(f_j) = |DFT(r)_j|^2 dt / N`` with the unnormalized
forward DFT. Only the non-negative frequencies are kept and they are *not*
doubled, so white readout noise of variance ``tau_m/dt`` sits at
``S = tau_m`` and the Rabi peak rises about ``4 tau_m`` above it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .simulate import ReadoutRecord


@dataclass
class Spectrum:
    freqs: np.ndarray
    power: np.ndarray
    n_samples: int
    dt: float
    meta: dict = field(default_factory=dict)

    @property
    def df(self) -> float:
        return 1.0 / (self.n_samples * self.dt)

    def total_power(self) -> float:
        """``sum S df`` over the full two-sided spectrum; equals ``mean(r^2)``."""
        w = np.full(self.power.size, 2.0)
        w[0] = 1.0
        if self.n_samples % 2 == 0:
            w[-1] = 1.0
        return float(np.sum(w * self.power) * self.df)

    def to_csv(self, path) -> None:
        rows = "\n".join(f"{f!r},{p!r}" for f, p in zip(self.freqs.tolist(), self.power.tolist()))
        Path(path).write_text("f_mhz,power\n" + rows + "\n", encoding="utf-8")


def periodogram(record, dt: float | None = None) -> Spectrum:
    """Raw PSD of a record (or of a bare sample array with ``dt``)."""
    if isinstance(record, ReadoutRecord):
        samples, dt = record.samples, record.dt
    else:
        samples = np.asarray(record, dtype=float)
        if dt is None:
            raise ValueError("dt is required for a bare sample array")
    n = samples.size
    if n < 2:
        raise ValueError("periodogram needs at least 2 samples")
    spec = np.fft.rfft(samples)
    power = (spec.real**2 + spec.imag**2) * dt / n
    freqs = np.fft.rfftfreq(n, dt)
    return Spectrum(freqs, power, n, dt, {"filter": "none"})


def triangular_filter(spec: Spectrum, half_width_bins: int) -> Spectrum:
    """Centre-weighted moving average over ``2 h + 1`` bins.

    Kernel weights are ``h + 1 - |k|``; near the edges the kernel is
    renormalized over the bins that exist.
    """
    h = int(half_width_bins)
    if h < 1:
        raise ValueError("half_width_bins must be >= 1")
    if 2 * h + 1 > spec.power.size:
        raise ValueError("filter kernel wider than the spectrum")
    kernel = (h + 1 - np.abs(np.arange(-h, h + 1))).astype(float)
    num = np.convolve(spec.power, kernel, mode="same")
    den = np.convolve(np.ones_like(spec.power), kernel, mode="same")
    meta = dict(spec.meta, filter=f"triangular(half_width={h})")
    return Spectrum(spec.freqs, num / den, spec.n_samples, spec.dt, meta)


def default_half_width(duration: float, tau_m: float) -> int:
    """Half the number of bins inside the Lorentzian peak, at least 2."""
    return max(2, int(round(duration / (2.0 * math.pi * tau_m) / 2.0)))


def peak_estimate(
    spec: Spectrum,
    band: tuple[float, float] | None = None,
    exclude_dc_bins: int = 2,
    interpolate: bool = True,
) -> float:
    """Frequency (MHz) of the largest power in ``band``.

    The lowest ``exclude_dc_bins`` bins are skipped to avoid the zero-frequency
    peak that appears under strong measurement. The argmax bin is refined by
    a three-point parabola through the log power when both neighbours exist.
    """
    f, p = spec.freqs, spec.power
    mask = np.ones(f.size, dtype=bool)
    mask[: max(0, int(exclude_dc_bins))] = False
    if band is not None:
        mask &= (f >= band[0]) & (f <= band[1])
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError(f"no spectral bins in band {band}")
    k = int(idx[np.argmax(p[idx])])
    if not interpolate or k == 0 or k == f.size - 1:
        return float(f[k])
    if not mask[k - 1] or not mask[k + 1]:
        return float(f[k])
    y0, y1, y2 = p[k - 1], p[k], p[k + 1]
    if min(y0, y1, y2) <= 0:
        return float(f[k])
    a, b, c = math.log(y0), math.log(y1), math.log(y2)
    denom = a - 2 * b + c
    if denom >= 0:
        return float(f[k])
    shift = 0.5 * (a - c) / denom
    return float(f[k] + shift * (f[1] - f[0]))


def lorentzian_model(f, f0: float, tau_m: float):
    """Reference PSD: floor ``tau_m`` plus a peak of height ``4 tau_m``.

    The full width at half maximum is ``1/(2 pi tau_m)`` MHz for ``tau_m``
    in us.
    """
    if not tau_m > 0:
        raise ValueError("tau_m must be positive")
    f = np.asarray(f, dtype=float)
    hw = 0.5 / (2.0 * math.pi * tau_m)
    return tau_m + 4.0 * tau_m * hw**2 / ((f - f0) ** 2 + hw**2)


def fft_estimate(
    record: ReadoutRecord,
    band: tuple[float, float] | None = None,
    half_width_bins: int | None = None,
    exclude_dc_bins: int = 2,
    interpolate: bool = True,
    tau_m: float | None = None,
) -> tuple[float, Spectrum]:
    """Filtered-periodogram peak; returns ``(f_mhz, filtered spectrum)``."""
    raw = periodogram(record)
    if half_width_bins is None:
        half_width_bins = default_half_width(record.duration, tau_m or record.model.tau_m)
    half_width_bins = min(half_width_bins, (raw.power.size - 1) // 2)
    filt = triangular_filter(raw, half_width_bins) if half_width_bins >= 1 else raw
    return peak_estimate(filt, band, exclude_dc_bins, interpolate), filt
