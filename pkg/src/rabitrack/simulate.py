"""Stochastic readout records for a driven, weakly measured qubit.

Each step draws the readout from the exact two-component Gaussian mixture
(branch by the current Z populations, then a Gaussian of variance
``tau_m/dt`` around -1 or +1) and applies the conditional update
``M_r = V F_r``. The drive is held constant within a bin.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .model import MeasurementModel, ParaState, PureState, as_para, mhz_to_omega

_BINARY_MAGIC = b"RABIREC1"
# magic, n, dt, tau_m, eta, t1, t2, seed
_BINARY_HEADER = struct.Struct("<8sQdddddq")
assert _BINARY_HEADER.size == 64


class RecordFormatError(ValueError):
    """A record file is malformed or inconsistent with its header."""


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator from an int, a tuple of ints, or a SeedSequence.

    A tuple ``(master, i, j, ...)`` names an independent stream, so ensemble
    members can be generated in any order or in parallel.
    """
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    elif seed is None or isinstance(seed, (int, np.integer)):
        ss = np.random.SeedSequence(seed)
    else:
        seed = tuple(int(s) for s in seed)
        ss = np.random.SeedSequence(seed[0], spawn_key=seed[1:])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class OmegaProfile:
    """Drive frequency versus time, in MHz.

    Either a constant (one waypoint, no time bounds) or a piecewise-linear
    interpolation between ``(t_us, f_mhz)`` waypoints.
    """

    times: tuple[float, ...]
    freqs: tuple[float, ...]
    profile_id: str | None = None

    def __post_init__(self) -> None:
        if len(self.times) != len(self.freqs) or not self.freqs:
            raise ValueError("profile needs matching, nonempty times and frequencies")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("waypoint times must be strictly increasing")

    @classmethod
    def constant(cls, f_mhz: float, profile_id: str | None = None) -> OmegaProfile:
        return cls((0.0,), (float(f_mhz),), profile_id)

    @property
    def is_constant(self) -> bool:
        return len(self.freqs) == 1

    @property
    def horizon(self) -> float:
        return math.inf if self.is_constant else self.times[-1]

    def frequency(self, t) -> np.ndarray:
        """Frequency in MHz at times ``t`` (us)."""
        t = np.asarray(t, dtype=float)
        if self.is_constant:
            return np.full(t.shape, self.freqs[0])
        lo, hi = self.times[0], self.times[-1]
        if t.size and (t.min() < lo - 1e-9 or t.max() > hi + 1e-9):
            raise ValueError(f"profile defined on [{lo}, {hi}] us only")
        return np.interp(t, self.times, self.freqs)

    def omega(self, t) -> np.ndarray:
        return mhz_to_omega(self.frequency(t))

    def to_json(self) -> str:
        return json.dumps([[t, f] for t, f in zip(self.times, self.freqs)])

    @classmethod
    def from_json(cls, text: str, profile_id: str | None = None) -> OmegaProfile:
        pts = json.loads(text)
        return cls(tuple(float(p[0]) for p in pts), tuple(float(p[1]) for p in pts), profile_id)


def make_drift_profile(
    f0: float,
    fraction: float,
    min_timescale: float,
    horizon: float,
    seed=None,
) -> OmegaProfile:
    """Random piecewise-linear drift around ``f0`` (MHz).

    Waypoint gaps are uniform in ``[min_timescale, 2 min_timescale]`` and
    waypoint values uniform in ``f0 * [1 - fraction/2, 1 + fraction/2]``.
    The last waypoint lies at or beyond ``horizon``.
    """
    if not 0 <= fraction < 1:
        raise ValueError("fraction must lie in [0, 1)")
    if not min_timescale > 0:
        raise ValueError("min_timescale must be positive")
    if horizon < min_timescale:
        raise ValueError("horizon shorter than min_timescale")
    pid = f"drift(f0={f0},fraction={fraction},timescale={min_timescale},seed={seed})"
    if fraction == 0:
        return OmegaProfile((0.0, float(horizon)), (float(f0), float(f0)), pid)
    rng = make_rng(seed)
    times = [0.0]
    while times[-1] < horizon:
        times.append(times[-1] + rng.uniform(min_timescale, 2 * min_timescale))
    lo, hi = f0 * (1 - fraction / 2), f0 * (1 + fraction / 2)
    freqs = rng.uniform(lo, hi, size=len(times))
    return OmegaProfile(tuple(times), tuple(float(f) for f in freqs), pid)


@dataclass
class ReadoutRecord:
    """Time-binned readout ``r_j`` with the calibration that produced it."""

    samples: np.ndarray
    model: MeasurementModel
    seed: tuple[int, ...] | None = None
    profile_id: str | None = None
    final_state: ParaState | None = field(default=None, compare=False)
    z_path: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise ValueError("record needs at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("record samples must be finite")

    @property
    def dt(self) -> float:
        return self.model.dt

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.n * self.model.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n) * self.model.dt

    def slice(self, start: int, stop: int) -> ReadoutRecord:
        return ReadoutRecord(self.samples[start:stop], self.model, self.seed, self.profile_id)


def simulate_record(
    profile: OmegaProfile | float,
    model: MeasurementModel,
    n_steps: int,
    initial: PureState | ParaState | None = None,
    seed=None,
    keep_z: bool = False,
) -> ReadoutRecord:
    """Simulate ``n_steps`` readouts.

    Parameters
    ----------
    profile : OmegaProfile or float
        Drive frequency in MHz (a float means constant).
    model : MeasurementModel
        Ideal propagation is used when ``model.is_ideal``.
    initial : PureState or ParaState
        Normalized starting state; defaults to ``|0>``.
    seed
        Anything :func:`make_rng` accepts.
    keep_z : bool
        Store the Bloch ``z`` at the start of every bin on the record.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not isinstance(profile, OmegaProfile):
        profile = OmegaProfile.constant(float(profile))
    state = as_para(initial if initial is not None else PureState.ground())
    if abs(state.p - 1.0) > 1e-12:
        raise ValueError("initial state must be normalized (p = 1)")
    t = np.arange(n_steps) * model.dt
    if t[-1] > profile.horizon + 1e-9:
        raise ValueError(
            f"profile ends at {profile.horizon} us but the record runs to {t[-1]:.6g} us"
        )
    omegas = np.ascontiguousarray(profile.omega(t), dtype=np.float64)
    rng = make_rng(seed)
    uniforms = rng.random(n_steps)
    normals = rng.standard_normal(n_steps)
    vec = state.as_array()
    k1 = 0.0 if math.isinf(model.t1) else 1.0 / model.t1
    samples, z_before = _kernels.simulate_kernel(
        omegas,
        uniforms,
        normals,
        model.readout_std,
        model.is_ideal,
        model.dt,
        model.tau_m,
        k1,
        math.exp(-model.gamma * model.dt),
        vec,
    )
    return ReadoutRecord(
        samples,
        model,
        seed=_seed_tuple(seed),
        profile_id=profile.profile_id,
        final_state=ParaState.from_array(vec),
        z_path=z_before if keep_z else None,
    )


def _seed_tuple(seed):
    if seed is None or isinstance(seed, np.random.SeedSequence):
        return None
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)


# -- persistence ---------------------------------------------------------------


def _header_float(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


def save_record(record: ReadoutRecord, path, binary: bool | None = None) -> None:
    """Write a record as CSV (``# key=value`` header) or as a binary blob.

    ``binary=None`` picks by suffix (``.bin`` means binary).
    """
    path = Path(path)
    if binary is None:
        binary = path.suffix == ".bin"
    m = record.model
    if binary:
        seed = record.seed[0] if record.seed else -1
        header = _BINARY_HEADER.pack(
            _BINARY_MAGIC, record.n, m.dt, m.tau_m, m.eta, m.t1, m.t2, seed
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(record.samples.astype("<f8").tobytes())
        return
    lines = [
        f"# n={record.n}",
        f"# dt_us={_header_float(m.dt)}",
        f"# tau_m_us={_header_float(m.tau_m)}",
        f"# eta={_header_float(m.eta)}",
        f"# t1_us={_header_float(m.t1)}",
        f"# t2_us={_header_float(m.t2)}",
        "# seed=" + ("" if record.seed is None else ",".join(str(s) for s in record.seed)),
    ]
    if record.profile_id:
        lines.append(f"# profile_id={record.profile_id}")
    body = "\n".join(repr(float(v)) for v in record.samples)
    path.write_text("\n".join(lines) + "\n" + body + "\n", encoding="utf-8")


_REQUIRED = ("n", "dt_us", "tau_m_us", "eta", "t1_us", "t2_us")


def load_record(path) -> ReadoutRecord:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head == _BINARY_MAGIC:
        return _load_binary(path)
    meta: dict[str, str] = {}
    values: list[float] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, val = line[1:].strip().partition("=")
            if not sep:
                raise RecordFormatError(f"{path}:{lineno}: header line without '='")
            meta[key.strip()] = val.strip()
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise RecordFormatError(f"{path}:{lineno}: not a number: {line!r}") from None
    missing = [k for k in _REQUIRED if k not in meta]
    if missing:
        raise RecordFormatError(f"{path}: header missing {', '.join(missing)}")
    try:
        n = int(meta["n"])
        model = MeasurementModel(
            tau_m=float(meta["tau_m_us"]),
            dt=float(meta["dt_us"]),
            eta=float(meta["eta"]),
            t1=float(meta["t1_us"]),
            t2=float(meta["t2_us"]),
        )
    except ValueError as exc:
        raise RecordFormatError(f"{path}: bad header: {exc}") from None
    if n != len(values):
        raise RecordFormatError(f"{path}: header says n={n} but found {len(values)} samples")
    samples = np.array(values, dtype=np.float64)
    if not np.all(np.isfinite(samples)):
        raise RecordFormatError(f"{path}: non-finite sample values")
    seed_text = meta.get("seed", "")
    seed = tuple(int(s) for s in seed_text.split(",")) if seed_text else None
    return ReadoutRecord(samples, model, seed=seed, profile_id=meta.get("profile_id"))


def _load_binary(path: Path) -> ReadoutRecord:
    raw = path.read_bytes()
    if len(raw) < _BINARY_HEADER.size:
        raise RecordFormatError(f"{path}: truncated header")
    _, n, dt, tau_m, eta, t1, t2, seed = _BINARY_HEADER.unpack_from(raw)
    body = raw[_BINARY_HEADER.size :]
    if len(body) != 8 * n:
        raise RecordFormatError(f"{path}: header says n={n} but found {len(body) // 8} samples")
    samples = np.frombuffer(body, dtype="<f8").astype(np.float64)
    if not np.all(np.isfinite(samples)):
        raise RecordFormatError(f"{path}: non-finite sample values")
    try:
        model = MeasurementModel(tau_m=tau_m, dt=dt, eta=eta, t1=t1, t2=t2)
    except ValueError as exc:
        raise RecordFormatError(f"{path}: bad header: {exc}") from None
    return ReadoutRecord(samples, model, seed=None if seed < 0 else (seed,))
