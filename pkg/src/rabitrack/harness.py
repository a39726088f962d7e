"""Batch experiments: ensembles of simulated records over a (T, tau_m) grid.

Every ensemble member draws from its own random stream
``(master_seed, cell_index, member_index)``, so results do not depend on
the order or the number of threads the cells run on.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .mle import estimate_frequency
from .model import MeasurementModel
from .simulate import simulate_record
from .spectral import fft_estimate

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


ESTIMATORS = ("mle", "fft", "both")
CSV_COLUMNS = (
    "T_us",
    "tau_m_us",
    "n_ensemble",
    "rms_mle_mhz",
    "rms_fft_mhz",
    "failed_mle",
    "failed_fft",
    "unconverged_mle",
)


class ConfigError(ValueError):
    """A sweep configuration is missing keys or has invalid values."""


def rms_error(estimates, f_true: float) -> float:
    """Root-mean-square deviation of ``estimates`` from ``f_true`` (MHz)."""
    e = np.asarray(estimates, dtype=float)
    if e.size == 0:
        raise ValueError("rms_error needs at least one estimate")
    return float(np.sqrt(np.mean((e - f_true) ** 2)))


@dataclass(frozen=True)
class SweepConfig:
    """Parameters of a sweep; key names carry their units."""

    T_us: tuple[float, ...]
    tau_m_us: tuple[float, ...]
    n_ensemble: int = 100
    f_mhz: float = 1.0
    dt_us: float = 0.01
    eta: float = 1.0
    t1_us: float = math.inf
    t2_us: float = math.inf
    estimator: str = "both"
    seed: int = 2024
    band_mhz: tuple[float, float] = (0.0, 2.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "T_us", tuple(float(v) for v in np.atleast_1d(self.T_us)))
        object.__setattr__(self, "tau_m_us", tuple(float(v) for v in np.atleast_1d(self.tau_m_us)))
        object.__setattr__(self, "band_mhz", tuple(float(v) for v in self.band_mhz))
        if not self.T_us or not self.tau_m_us:
            raise ConfigError("T_us and tau_m_us must be nonempty")
        if any(v <= 0 for v in self.T_us + self.tau_m_us):
            raise ConfigError("T_us and tau_m_us values must be positive")
        if self.n_ensemble < 1:
            raise ConfigError("n_ensemble must be >= 1")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if len(self.band_mhz) != 2 or not self.band_mhz[0] < self.band_mhz[1]:
            raise ConfigError("band_mhz must be [lo, hi] with lo < hi")
        for T in self.T_us:
            if round(T / self.dt_us) < 2:
                raise ConfigError(f"T_us={T} holds fewer than 2 bins of dt_us={self.dt_us}")

    @classmethod
    def from_dict(cls, d: dict) -> SweepConfig:
        d = dict(d.get("sweep", d))
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}; physical keys need unit suffixes (e.g. tau_m_us)")
        for key in ("T_us", "tau_m_us"):
            if key not in d:
                raise ConfigError(f"missing required key {key!r}")
        for key in ("t1_us", "t2_us"):
            if d.get(key) is None:
                d.pop(key, None)
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> SweepConfig:
        """Read a TOML (``.toml``) or JSON file."""
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        try:
            data = tomllib.loads(text) if path.suffix.lower() == ".toml" else json.loads(text)
        except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def model(self, tau_m: float) -> MeasurementModel:
        return MeasurementModel(tau_m=tau_m, dt=self.dt_us, eta=self.eta, t1=self.t1_us, t2=self.t2_us)

    def cells(self) -> list[tuple[float, float]]:
        """``(T, tau_m)`` pairs in row-major order (T outer)."""
        return [(T, tau) for T in self.T_us for tau in self.tau_m_us]


@dataclass
class CellResult:
    T_us: float
    tau_m_us: float
    n_ensemble: int
    rms_mle_mhz: float
    rms_fft_mhz: float
    failed_mle: int
    failed_fft: int
    unconverged_mle: int
    f_mle: np.ndarray = field(repr=False, default=None)
    f_fft: np.ndarray = field(repr=False, default=None)

    def row(self) -> list[str]:
        return [_fmt(getattr(self, c)) for c in CSV_COLUMNS]


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "nan" if math.isnan(v) else repr(float(v))


@dataclass
class SweepResult:
    config: SweepConfig
    cells: list[CellResult]
    wall_time: float = 0.0

    def cell(self, T: float, tau_m: float) -> CellResult:
        for c in self.cells:
            if math.isclose(c.T_us, T) and math.isclose(c.tau_m_us, tau_m):
                return c
        raise KeyError((T, tau_m))

    def to_csv(self, path=None, timestamp: str | None = None) -> str:
        """Write (and return) the CSV, metadata lines first.

        Only the ``# generated:`` line varies between identical runs.
        """
        cfg = self.config
        stamp = timestamp or time.strftime("%Y-%m-%dT%H:%M:%S%z")
        meta = {
            "master_seed": cfg.seed,
            "f_mhz": cfg.f_mhz,
            "dt_us": cfg.dt_us,
            "eta": cfg.eta,
            "t1_us": cfg.t1_us,
            "t2_us": cfg.t2_us,
            "estimator": cfg.estimator,
            "band_mhz": "{}:{}".format(*cfg.band_mhz),
        }
        lines = [f"# generated: {stamp}"]
        lines += [f"# {k}={v}" for k, v in meta.items()]
        lines.append(",".join(CSV_COLUMNS))
        lines += [",".join(c.row()) for c in self.cells]
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def _run_member(cfg: SweepConfig, cell_index: int, member: int, T: float, model: MeasurementModel):
    n_steps = int(round(T / cfg.dt_us))
    rec = simulate_record(cfg.f_mhz, model, n_steps, seed=(cfg.seed, cell_index, member))
    f_mle = f_fft = math.nan
    converged = True
    if cfg.estimator in ("mle", "both"):
        try:
            est = estimate_frequency(rec, band=cfg.band_mhz)
            f_mle, converged = est.f_ml, est.converged
        except (ArithmeticError, ValueError):
            pass
    if cfg.estimator in ("fft", "both"):
        try:
            f_fft, _ = fft_estimate(rec, band=cfg.band_mhz)
        except (ArithmeticError, ValueError):
            pass
    return f_mle, f_fft, converged


def _summarize(cfg, T, tau, f_mle, f_fft, conv) -> CellResult:
    def rms(values, enabled):
        ok = values[np.isfinite(values)]
        return rms_error(ok, cfg.f_mhz) if enabled and ok.size else math.nan

    use_mle = cfg.estimator in ("mle", "both")
    use_fft = cfg.estimator in ("fft", "both")
    return CellResult(
        T_us=T,
        tau_m_us=tau,
        n_ensemble=cfg.n_ensemble,
        rms_mle_mhz=rms(f_mle, use_mle),
        rms_fft_mhz=rms(f_fft, use_fft),
        failed_mle=int(np.count_nonzero(~np.isfinite(f_mle))) if use_mle else 0,
        failed_fft=int(np.count_nonzero(~np.isfinite(f_fft))) if use_fft else 0,
        unconverged_mle=int(np.count_nonzero(~conv)) if use_mle else 0,
        f_mle=f_mle,
        f_fft=f_fft,
    )


def run_sweep(cfg: SweepConfig, threads: int = 1, order=None) -> SweepResult:
    """Simulate and estimate every ensemble member of every cell.

    ``order`` optionally permutes the execution order of cells; it exists to
    check that results are independent of scheduling.
    """
    t0 = time.perf_counter()
    cells = cfg.cells()
    models = [cfg.model(tau) for _, tau in cells]
    order = list(range(len(cells))) if order is None else list(order)
    if sorted(order) != list(range(len(cells))):
        raise ValueError("order must be a permutation of the cell indices")
    tasks = [(ci, m) for ci in order for m in range(cfg.n_ensemble)]

    def work(task):
        ci, m = task
        return _run_member(cfg, ci, m, cells[ci][0], models[ci])

    if threads <= 1:
        outputs = list(map(work, tasks))
    else:
        with ThreadPoolExecutor(threads) as pool:
            outputs = list(pool.map(work, tasks))
    by_task = dict(zip(tasks, outputs))
    results = []
    for ci, (T, tau) in enumerate(cells):
        vals = [by_task[(ci, m)] for m in range(cfg.n_ensemble)]
        f_mle = np.array([v[0] for v in vals])
        f_fft = np.array([v[1] for v in vals])
        conv = np.array([v[2] for v in vals], dtype=bool)
        results.append(_summarize(cfg, T, tau, f_mle, f_fft, conv))
    return SweepResult(cfg, results, time.perf_counter() - t0)
