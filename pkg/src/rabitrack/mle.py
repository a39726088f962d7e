"""Maximum-likelihood estimation of the Rabi frequency from a raw record.

The log-likelihood of a record is ``ln Tr[M_N rho M_N^dagger]`` with
``M_N = M_{r_N} ... M_{r_1}``. Rather than forming the matrix product we
push the initial state through the chain and accumulate the log of the
norm lost at every step, which costs ``O(d^2 N)`` per trial frequency and
never over- or underflows. The Gaussian prefactors of the readout
densities are dropped, so values are defined up to an additive constant
that does not depend on the frequency.

Frequencies in this module's public API are ordinary frequencies in MHz.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .model import (
    TWO_PI,
    MeasurementModel,
    PureState,
    as_para,
    measurement_coefficients,
    paravector_measurement,
    paravector_unitary,
    povm_sqrt_rescaled,
    rotation_matrix,
)
from .simulate import ReadoutRecord


class LikelihoodError(FloatingPointError):
    """A non-finite value appeared while propagating the record."""

    def __init__(self, step: int):
        super().__init__(f"non-finite likelihood intermediate at step {step}")
        self.step = step


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing trial frequencies (MHz)."""

    values: np.ndarray
    origin: str = "uniform"

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 3:
            raise ValueError("a frequency grid needs at least 3 points")
        if np.any(np.diff(v) <= 0):
            raise ValueError("grid values must be strictly increasing")
        object.__setattr__(self, "values", v)

    @classmethod
    def uniform(cls, lo: float, hi: float, n: int, origin: str = "uniform") -> FrequencyGrid:
        return cls(np.linspace(lo, hi, int(n)), origin)

    @classmethod
    def around(cls, center: float, half_span: float, n: int, origin: str = "seeded") -> FrequencyGrid:
        return cls(np.linspace(center - half_span, center + half_span, int(n)), origin)

    def __len__(self) -> int:
        return self.values.size

    @property
    def spacing(self) -> float:
        return float(np.min(np.diff(self.values)))

    @property
    def span(self) -> float:
        return float(self.values[-1] - self.values[0])


@dataclass(frozen=True)
class GaussianPrior:
    mean: float
    std: float

    def __post_init__(self) -> None:
        if not self.std > 0:
            raise ValueError("prior std must be positive")

    def log_density(self, f) -> np.ndarray:
        """Log prior up to a constant."""
        f = np.asarray(f, dtype=float)
        return -0.5 * ((f - self.mean) / self.std) ** 2


@dataclass
class LikelihoodCurve:
    grid: FrequencyGrid
    loglik: np.ndarray

    def __post_init__(self) -> None:
        self.loglik = np.asarray(self.loglik, dtype=float)
        if self.loglik.shape != self.grid.values.shape:
            raise ValueError("loglik must have one value per grid point")
        if not np.all(np.isfinite(self.loglik)):
            raise ValueError("log-likelihood values must be finite")

    @property
    def freqs(self) -> np.ndarray:
        return self.grid.values

    def argmax(self) -> int:
        # np.argmax returns the first (lowest-frequency) maximum
        return int(np.argmax(self.loglik))

    def to_csv(self, path) -> None:
        rows = "\n".join(f"{f!r},{v!r}" for f, v in zip(self.freqs.tolist(), self.loglik.tolist()))
        Path(path).write_text("f_mhz,loglik\n" + rows + "\n", encoding="utf-8")


@dataclass
class EstimateResult:
    """Outcome of a likelihood maximization.

    ``fit_slice`` indexes ``curve`` (every evaluated point, sorted) and marks
    the contiguous window used for the parabola.
    """

    f_ml: float
    sigma: float
    converged: bool
    loglik_max: float
    fit_slice: tuple[int, int]
    at_boundary: bool = False
    curve: LikelihoodCurve | None = field(default=None, repr=False)
    rounds: int = 0
    message: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("curve")
        d["fit_slice"] = list(self.fit_slice)
        return d

    def to_json(self, **extra) -> str:
        d = self.to_dict()
        d.update(extra)
        return json.dumps(d, indent=2, sort_keys=True)


def _check_finite(*arrays) -> None:
    for a in arrays:
        bad = np.flatnonzero(~np.isfinite(a))
        if bad.size:
            raise LikelihoodError(int(bad[0]))


class Likelihood:
    """Log-likelihood of one record as a function of trial frequency.

    The Omega-independent per-step measurement factors are computed once on
    construction. A pure initial state with an ideal model runs the 2x2
    amplitude recursion; everything else runs on the Bloch paravector.

    Parameters
    ----------
    record : ReadoutRecord or array
        Readout samples.
    model : MeasurementModel
        Calibration used for estimation; it may differ from the one that
        generated the record (e.g. an ideal model on nonideal data).
    initial : PureState or ParaState
        Known state at the start of the record; defaults to ``|0>``.
    path : {"auto", "pure", "paravector"}
    threads : int
        Worker threads used to split a grid.
    """

    def __init__(self, record, model: MeasurementModel | None = None, initial=None, path: str = "auto", threads: int = 1):
        if isinstance(record, ReadoutRecord):
            samples = record.samples
            model = model or record.model
        else:
            samples = np.ascontiguousarray(record, dtype=float)
        if model is None:
            raise ValueError("a measurement model is required")
        if samples.size < 1:
            raise ValueError("record is empty")
        initial = PureState.ground() if initial is None else initial
        if path == "auto":
            path = "pure" if isinstance(initial, PureState) and model.is_ideal else "paravector"
        if path == "pure":
            if not isinstance(initial, PureState) or not model.is_ideal:
                raise ValueError("the pure path needs a PureState and an ideal model")
            psi = initial.normalized()
            half = 0.5 * samples * model.dt / model.tau_m
            with np.errstate(over="ignore"):
                self._e0 = np.exp(-half)
                self._e1 = np.exp(half)
            self._psi = psi.as_array()
            _check_finite(self._e0, self._e1)
        elif path == "paravector":
            v = as_para(initial).normalized()
            self._coef = measurement_coefficients(samples, model)
            self._v = v.as_array()
            _check_finite(*self._coef[:3])
        else:
            raise ValueError(f"unknown path {path!r}")
        self.path = path
        self.model = model
        self.n = samples.size
        self.threads = max(1, int(threads))

    @property
    def duration(self) -> float:
        return self.n * self.model.dt

    def _eval(self, omegas: np.ndarray) -> np.ndarray:
        if self.path == "pure":
            out, bad = _kernels.loglik_pure(omegas, self._e0, self._e1, self.model.dt, self._psi)
        else:
            fuu, fwu, fww, d = self._coef
            out, bad = _kernels.loglik_para(omegas, fuu, fwu, fww, d, self.model.dt, self._v)
        if bad >= 0:
            raise LikelihoodError(int(bad))
        return out

    def __call__(self, f_mhz) -> np.ndarray | float:
        scalar = np.ndim(f_mhz) == 0
        omegas = TWO_PI * np.atleast_1d(np.asarray(f_mhz, dtype=float))
        if self.threads == 1 or omegas.size < 2 * self.threads:
            out = self._eval(omegas)
        else:
            chunks = np.array_split(omegas, self.threads)
            with ThreadPoolExecutor(self.threads) as pool:
                out = np.concatenate(list(pool.map(self._eval, chunks)))
        return float(out[0]) if scalar else out

    def gradient(self, f_mhz: float) -> tuple[float, float]:
        """``(L, dL/df)`` at one frequency, with ``df`` in MHz."""
        omega = TWO_PI * float(f_mhz)
        if self.path == "pure":
            val, g, bad = _kernels.loglik_grad_pure(omega, self._e0, self._e1, self.model.dt, self._psi)
        else:
            fuu, fwu, fww, d = self._coef
            val, g, bad = _kernels.loglik_grad_para(omega, fuu, fwu, fww, d, self.model.dt, self._v)
        if bad >= 0:
            raise LikelihoodError(int(bad))
        return float(val), TWO_PI * float(g)


def log_likelihood(record, f_mhz: float, model: MeasurementModel | None = None, initial=None, path: str = "auto") -> float:
    return Likelihood(record, model, initial, path)(float(f_mhz))


def log_likelihood_gradient(record, f_mhz: float, model: MeasurementModel | None = None, initial=None, path: str = "auto"):
    """Return ``(L, dL/df)`` from the forward derivative recursion."""
    return Likelihood(record, model, initial, path).gradient(f_mhz)


def log_likelihood_products(samples, f_mhz: float, model: MeasurementModel, initial=None) -> float:
    """Reference evaluation through explicit matrix products.

    Slow; used to cross-check the vector recursion. Products are rescaled
    every step to keep them finite.
    """
    omega = TWO_PI * f_mhz
    initial = PureState.ground() if initial is None else initial
    if isinstance(initial, PureState) and model.is_ideal:
        u = rotation_matrix(omega, model.dt)
        m = np.eye(2)
        acc = 0.0
        for r in np.asarray(samples, dtype=float):
            m = u @ povm_sqrt_rescaled(r, model) @ m
            s = np.abs(m).max()
            m /= s
            acc += 2.0 * math.log(s)
        rho = np.outer(initial.as_array(), initial.as_array())
        return acc + math.log(np.trace(m.T @ m @ rho))
    v = paravector_unitary(omega, model.dt)
    m = np.eye(4)
    acc = 0.0
    for r in np.asarray(samples, dtype=float):
        m = v @ paravector_measurement(r, model) @ m
        s = np.abs(m).max()
        m /= s
        acc += math.log(s)
    return acc + math.log((m @ as_para(initial).as_array())[3])


def grid_evaluate(
    record,
    grid: FrequencyGrid,
    model: MeasurementModel | None = None,
    initial=None,
    prior: GaussianPrior | None = None,
    threads: int = 1,
) -> LikelihoodCurve:
    """Log-likelihood (plus optional log prior) on every grid point."""
    lik = record if isinstance(record, Likelihood) else Likelihood(record, model, initial, threads=threads)
    vals = lik(grid.values)
    if prior is not None:
        vals = vals + prior.log_density(grid.values)
    return LikelihoodCurve(grid, vals)


def fit_parabola(f: np.ndarray, loglik: np.ndarray) -> tuple[float, float, float]:
    """Least-squares fit ``L = c - (f - f0)^2 / (2 sigma^2)``.

    Returns ``(f0, sigma, curvature)`` with ``curvature = d^2L/df^2``;
    ``sigma`` is NaN when the fitted curvature is not negative.
    """
    f = np.asarray(f, dtype=float)
    y = np.asarray(loglik, dtype=float)
    if f.size < 3:
        raise ValueError("need at least 3 points for a parabola")
    center = f[np.argmax(y)]
    scale = max(float(np.ptp(f)), 1e-300)
    x = (f - center) / scale
    a, b, _ = np.polyfit(x, y - y.max(), 2)
    curv = 2.0 * a / scale**2
    if not a < 0:
        return center, math.nan, curv
    x0 = -b / (2.0 * a)
    return center + x0 * scale, math.sqrt(-1.0 / curv), curv


def _contiguous_window(y: np.ndarray, i: int, drop: float) -> tuple[int, int]:
    level = y[i] - drop
    lo = i
    while lo > 0 and y[lo - 1] >= level:
        lo -= 1
    hi = i
    while hi < y.size - 1 and y[hi + 1] >= level:
        hi += 1
    # at least three points for the fit
    while hi - lo < 2:
        if lo > 0 and (hi == y.size - 1 or y[lo - 1] >= y[hi + 1]):
            lo -= 1
        elif hi < y.size - 1:
            hi += 1
        else:
            break
    return lo, hi + 1


def refine_and_fit(
    record,
    initial_grid: FrequencyGrid,
    model: MeasurementModel | None = None,
    initial=None,
    prior: GaussianPrior | None = None,
    *,
    resolution: float | None = None,
    shrink: float = 5.0,
    refine_points: int = 21,
    window: float = 2.0,
    max_rounds: int = 12,
    threads: int = 1,
) -> EstimateResult:
    """Adaptive grid search followed by a parabola fit at the peak.

    After the initial grid, each round lays ``refine_points`` points around
    the best frequency seen so far, with the local spacing reduced by
    ``shrink`` per round, until the spacing drops below ``resolution``
    (default ``1/(10 T)``). A parabola is then fitted to every evaluated
    point in the contiguous region where ``L >= L_max - window``; its
    vertex is the estimate and its curvature gives ``sigma``.
    """
    lik = record if isinstance(record, Likelihood) else Likelihood(record, model, initial, threads=threads)
    if resolution is None:
        resolution = 1.0 / (10.0 * lik.duration)

    def evaluate(freqs):
        vals = lik(freqs)
        if prior is not None:
            vals = vals + prior.log_density(freqs)
        return vals

    fs = [initial_grid.values]
    ls = [evaluate(initial_grid.values)]
    first = ls[0]
    i0 = int(np.argmax(first))
    at_boundary = i0 in (0, first.size - 1)
    best = initial_grid.values[i0]
    spacing = initial_grid.spacing
    span = min(initial_grid.span / shrink, 4.0 * spacing)
    rounds = 0
    while spacing >= resolution and rounds < max_rounds:
        rounds += 1
        pts = np.linspace(best - span / 2, best + span / 2, refine_points)
        fs.append(pts)
        ls.append(evaluate(pts))
        allf = np.concatenate(fs)
        alll = np.concatenate(ls)
        best = allf[np.argmax(alll)]
        spacing = span / (refine_points - 1)
        span /= shrink

    allf = np.concatenate(fs)
    alll = np.concatenate(ls)
    order = np.argsort(allf, kind="stable")
    allf, alll = allf[order], alll[order]
    keep = np.concatenate(([True], np.diff(allf) > 0))
    allf, alll = allf[keep], alll[keep]
    curve = LikelihoodCurve(FrequencyGrid(allf, "refined"), alll)
    ibest = curve.argmax()
    lo, hi = _contiguous_window(alll, ibest, window)
    f0, sigma, _ = fit_parabola(allf[lo:hi], alll[lo:hi])
    converged = math.isfinite(sigma)
    message = ""
    if not converged:
        f0 = allf[ibest]
        message = "fit window is not concave"
    elif not allf[lo] <= f0 <= allf[hi - 1]:
        message = "parabola vertex outside fit window; using grid argmax"
        f0 = allf[ibest]
    if at_boundary:
        message = (message + "; " if message else "") + "peak at edge of initial grid"
    return EstimateResult(
        f_ml=float(f0),
        sigma=float(sigma),
        converged=converged,
        loglik_max=float(alll[ibest]),
        fit_slice=(lo, hi),
        at_boundary=at_boundary,
        curve=curve,
        rounds=rounds,
        message=message,
    )


@dataclass
class NewtonResult:
    f: float
    converged: bool
    fallback: bool
    iterations: int
    gradients: list[float]


def newton_polish(
    record,
    start: float,
    model: MeasurementModel | None = None,
    initial=None,
    *,
    max_iter: int = 20,
    xtol: float | None = None,
    gtol: float = 1e-8,
) -> NewtonResult:
    """Safeguarded Newton iteration on the analytic gradient.

    The second derivative comes from a central difference of the gradient
    and is then updated by secants. A step that does not reduce ``|dL/df|``
    is halved up to five times; a convex region or a persistent failure
    triggers a grid-refinement fallback around ``start``.
    """
    lik = record if isinstance(record, Likelihood) else Likelihood(record, model, initial)
    T = lik.duration
    if xtol is None:
        xtol = 1e-9 / T
    h = 1e-3 / T
    max_step = 2.0 / T

    def grad(f):
        return lik.gradient(f)[1]

    def fallback(it, hist):
        grid = FrequencyGrid.around(start, 4.0 / T, 41, origin="seeded")
        est = refine_and_fit(lik, grid)
        return NewtonResult(est.f_ml, est.converged, True, it, hist)

    f = float(start)
    g = grad(f)
    hist = [g]
    if abs(g) <= gtol:
        return NewtonResult(f, True, False, 0, hist)
    curv = (grad(f + h) - grad(f - h)) / (2 * h)
    for it in range(1, max_iter + 1):
        if not curv < 0:
            return fallback(it, hist)
        step = -g / curv
        if abs(step) <= xtol:
            return NewtonResult(f, True, False, it, hist)
        step = max(-max_step, min(max_step, step))
        for _ in range(6):
            g_new = grad(f + step)
            if abs(g_new) < abs(g):
                break
            step *= 0.5
        else:
            return fallback(it, hist)
        secant = (g_new - g) / step
        f += step
        g = g_new
        hist.append(g)
        if abs(g) <= gtol or abs(step) <= xtol:
            return NewtonResult(f, True, False, it, hist)
        curv = secant if secant < 0 else (grad(f + h) - grad(f - h)) / (2 * h)
    return NewtonResult(f, False, False, max_iter, hist)


def default_spacing(duration: float) -> float:
    """Initial grid spacing ``1/(2T)``, fine enough to resolve the peak."""
    return 1.0 / (2.0 * duration)


def estimate_frequency(
    record,
    model: MeasurementModel | None = None,
    initial=None,
    *,
    band: tuple[float, float] | None = (0.0, 2.0),
    seed_f: float | None = None,
    halo: float = 0.1,
    prior: GaussianPrior | None = None,
    resolution: float | None = None,
    threads: int = 1,
) -> EstimateResult:
    """Static MLE: brute-force grid over ``band`` or around ``seed_f``, then refine.

    With ``seed_f`` (e.g. an FFT estimate) the initial grid spans
    ``seed_f +- halo``; otherwise it covers ``band`` at spacing ``1/(2T)``.
    """
    lik = record if isinstance(record, Likelihood) else Likelihood(record, model, initial, threads=threads)
    spacing = default_spacing(lik.duration)
    if seed_f is not None:
        lo, hi, origin = seed_f - halo, seed_f + halo, "seeded"
    elif band is not None:
        lo, hi, origin = band[0], band[1], "uniform"
    else:
        raise ValueError("need either a band or a seed frequency")
    n = max(21, int(math.ceil((hi - lo) / spacing)) + 1)
    grid = FrequencyGrid.uniform(lo, hi, n, origin)
    return refine_and_fit(lik, grid, prior=prior, resolution=resolution)
