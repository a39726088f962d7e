"""Physical model of a continuously Z-measured, Rabi-driven qubit.

Units: times in microseconds, angular frequencies in rad/us. The public
estimation API takes ordinary frequencies in MHz and converts here.

State conventions
-----------------
A pure state is a pair of real amplitudes ``(a0, a1)`` on ``|0>, |1>``.
The Bloch paravector is ``(x, y, z, p)`` with ``x = Tr[X rho]``,
``z = Tr[Z rho] = rho11 - rho00`` and ``p = Tr[rho]``. Readouts are
centred on ``-1`` for ``|0>`` and ``+1`` for ``|1>``.

The drive ``H = (Omega/2) Y`` rotates the Bloch vector in the x-z plane,
so the paravector rotation acts on the (x, z) pair. The measurement acts
as a hyperbolic rotation of (z, p).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

# series cutoff for sinh(u)/u
_SINHC_SMALL = 1e-4


def mhz_to_omega(f_mhz):
    """Ordinary frequency in MHz to angular frequency in rad/us."""
    return TWO_PI * np.asarray(f_mhz, dtype=float) if np.ndim(f_mhz) else TWO_PI * float(f_mhz)


def omega_to_mhz(omega):
    """Angular frequency in rad/us to ordinary frequency in MHz."""
    return np.asarray(omega, dtype=float) / TWO_PI if np.ndim(omega) else float(omega) / TWO_PI


@dataclass(frozen=True)
class MeasurementModel:
    """Calibration of the measurement chain.

    Parameters
    ----------
    tau_m : float
        Characteristic measurement time (us). Per-bin readout variance is
        ``tau_m / dt``.
    dt : float
        Time-bin width (us).
    eta : float
        Collection efficiency in (0, 1].
    t1, t2 : float
        Energy relaxation and environmental dephasing times (us); ``inf``
        disables the process.
    """

    tau_m: float
    dt: float
    eta: float = 1.0
    t1: float = math.inf
    t2: float = math.inf

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.tau_m > 0:
            raise ValueError(f"tau_m must be positive, got {self.tau_m}")
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if not self.t1 > 0 or not self.t2 > 0:
            raise ValueError("t1 and t2 must be positive (use inf to disable)")
        if self.dt / self.tau_m > 0.1:
            warnings.warn(
                f"dt/tau_m = {self.dt / self.tau_m:.3g} > 0.1; the weak-measurement "
                "time-slicing is only accurate for dt << tau_m",
                stacklevel=3,
            )

    @property
    def gamma_m(self) -> float:
        """Measurement-induced dephasing rate ``1/(2 eta tau_m)`` (1/us)."""
        return 1.0 / (2.0 * self.eta * self.tau_m)

    @property
    def gamma(self) -> float:
        """Total transverse dephasing rate (1/us)."""
        return self.gamma_m + 1.0 / self.t2 + 1.0 / (2.0 * self.t1)

    @property
    def is_ideal(self) -> bool:
        return self.eta == 1.0 and math.isinf(self.t1) and math.isinf(self.t2)

    @property
    def readout_std(self) -> float:
        return math.sqrt(self.tau_m / self.dt)

    def ideal(self) -> MeasurementModel:
        """Same tau_m and dt with all nonidealities removed."""
        return MeasurementModel(tau_m=self.tau_m, dt=self.dt)


@dataclass(frozen=True)
class PureState:
    """Real pure qubit state ``a0|0> + a1|1>`` (not necessarily normalized)."""

    a0: float
    a1: float

    @classmethod
    def ground(cls) -> PureState:
        return cls(1.0, 0.0)

    @classmethod
    def excited(cls) -> PureState:
        return cls(0.0, 1.0)

    @classmethod
    def plus(cls) -> PureState:
        return cls(math.sqrt(0.5), math.sqrt(0.5))

    @property
    def norm_sq(self) -> float:
        return self.a0 * self.a0 + self.a1 * self.a1

    def normalized(self) -> PureState:
        n = math.sqrt(self.norm_sq)
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return PureState(self.a0 / n, self.a1 / n)

    def as_array(self) -> np.ndarray:
        return np.array([self.a0, self.a1], dtype=float)

    def to_para(self) -> ParaState:
        return ParaState(
            x=2.0 * self.a0 * self.a1,
            y=0.0,
            z=self.a1 * self.a1 - self.a0 * self.a0,
            p=self.norm_sq,
        )


@dataclass(frozen=True)
class ParaState:
    """Bloch paravector ``(x, y, z, p)``; ``p`` is the unnormalized trace."""

    x: float
    y: float
    z: float
    p: float = 1.0

    @classmethod
    def mixed(cls) -> ParaState:
        return cls(0.0, 0.0, 0.0, 1.0)

    @classmethod
    def from_array(cls, v) -> ParaState:
        x, y, z, p = (float(c) for c in v)
        return cls(x, y, z, p)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.p], dtype=float)

    def normalized(self) -> ParaState:
        if not self.p > 0:
            raise ValueError(f"state norm p must be positive, got {self.p}")
        return ParaState(self.x / self.p, self.y / self.p, self.z / self.p, 1.0)

    @property
    def purity_radius_sq(self) -> float:
        """``(x^2 + y^2 + z^2) / p^2``; equals 1 for pure states."""
        return (self.x**2 + self.y**2 + self.z**2) / self.p**2


def as_para(state) -> ParaState:
    if isinstance(state, ParaState):
        return state
    if isinstance(state, PureState):
        return state.to_para()
    raise TypeError(f"expected PureState or ParaState, got {type(state).__name__}")


# -- single-step propagators -------------------------------------------------


def rotation_matrix(omega: float, dt: float) -> np.ndarray:
    """Unitary step of the drive on real amplitudes (half-angle rotation)."""
    h = 0.5 * omega * dt
    c, s = math.cos(h), math.sin(h)
    return np.array([[c, -s], [s, c]])


def povm_sqrt_rescaled(r: float, model: MeasurementModel) -> np.ndarray:
    """Square root of the rescaled POVM element, ``diag(e^{-a/2}, e^{a/2})``.

    ``a = r dt / tau_m``. It differs from the normalized element by an
    r-dependent, state-independent factor only.
    """
    half = 0.5 * r * model.dt / model.tau_m
    return np.diag([math.exp(-half), math.exp(half)])


def readout_density(r, mean: float, model: MeasurementModel):
    """Gaussian readout density with variance ``tau_m/dt`` around ``mean``."""
    r = np.asarray(r, dtype=float)
    k = model.dt / model.tau_m
    return np.sqrt(k / TWO_PI) * np.exp(-0.5 * k * (r - mean) ** 2)


def povm_element_normalized(r: float, model: MeasurementModel) -> np.ndarray:
    """Normalized POVM element ``diag(P(r|0), P(r|1))``."""
    return np.diag([float(readout_density(r, -1.0, model)), float(readout_density(r, 1.0, model))])


def paravector_unitary(omega: float, dt: float) -> np.ndarray:
    """Drive step on the paravector: full-angle rotation of (x, z).

    ``x' = cos(w dt) x - sin(w dt) z`` and ``z' = sin(w dt) x + cos(w dt) z``;
    y and p are untouched.
    """
    c, s = math.cos(omega * dt), math.sin(omega * dt)
    v = np.eye(4)
    v[0, 0], v[0, 2] = c, -s
    v[2, 0], v[2, 2] = s, c
    return v


def paravector_measurement_ideal(r: float, model: MeasurementModel) -> np.ndarray:
    a = r * model.dt / model.tau_m
    ch, sh = math.cosh(a), math.sinh(a)
    f = np.eye(4)
    f[2, 2], f[2, 3] = ch, sh
    f[3, 2], f[3, 3] = sh, ch
    return f


def _sinhc(u: float) -> float:
    if abs(u) < _SINHC_SMALL:
        return 1.0 + u * u / 6.0
    return math.sinh(u) / u


def zp_block_nonideal(r: float, model: MeasurementModel) -> np.ndarray:
    """Closed-form ``exp(dt * [[-k, a - k], [a, 0]])`` with ``k = 1/T1``, ``a = r/tau_m``.

    The generator has real eigenvalues ``-k/2 +- |a - k/2|``, so
    ``exp(dt B) = e^{-k dt/2} [cosh(q dt) I + dt sinhc(q dt) (B + k/2 I)]``
    with ``q = a - k/2``.
    """
    k = 1.0 / model.t1
    a = r / model.tau_m
    dt = model.dt
    q = a - 0.5 * k
    ch = math.cosh(q * dt)
    shc = dt * _sinhc(q * dt)
    pre = math.exp(-0.5 * k * dt)
    return pre * np.array(
        [
            [ch - 0.5 * k * shc, (a - k) * shc],
            [a * shc, ch + 0.5 * k * shc],
        ]
    )


def paravector_measurement_nonideal(r: float, model: MeasurementModel) -> np.ndarray:
    """Measurement step with inefficiency, dephasing and relaxation."""
    d = math.exp(-model.gamma * model.dt)
    f = np.zeros((4, 4))
    f[0, 0] = f[1, 1] = d
    f[2:, 2:] = zp_block_nonideal(r, model)
    return f


def paravector_measurement(r: float, model: MeasurementModel) -> np.ndarray:
    """Ideal or nonideal measurement step, chosen from the model."""
    if model.is_ideal:
        return paravector_measurement_ideal(r, model)
    return paravector_measurement_nonideal(r, model)


def measurement_coefficients(samples: np.ndarray, model: MeasurementModel, ideal: bool | None = None):
    """Per-sample measurement step in light-cone coordinates.

    With ``u = p + z`` and ``w = p - z`` the (z, p) block becomes lower
    triangular with non-negative entries::

        u' = fuu u
        w' = fwu u + fww w

    (``fwu = 0`` without relaxation). Propagating ``u`` and ``w`` instead of
    ``z`` and ``p`` avoids the cancellation in ``p - |z|`` that otherwise
    destroys a strongly pinned state. Returns ``(fuu, fwu, fww, d)`` where
    ``d`` is the scalar x/y damping factor per step.
    """
    r = np.asarray(samples, dtype=float)
    dt = model.dt
    if ideal is None:
        ideal = model.is_ideal
    a = r * dt / model.tau_m
    if ideal:
        with np.errstate(over="ignore"):
            return np.exp(a), np.zeros_like(a), np.exp(-a), 1.0
    k = 1.0 / model.t1
    u = a - 0.5 * k * dt
    small = np.abs(u) < _SINHC_SMALL
    # overflow leaves inf/nan entries, which the likelihood reports by step
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        fuu = np.exp(a - k * dt)
        fww = np.exp(-a)
        shc = np.where(small, 1.0 + u * u / 6.0, np.sinh(u) / np.where(small, 1.0, u))
        fwu = k * dt * math.exp(-0.5 * k * dt) * shc
    return fuu, fwu, fww, math.exp(-model.gamma * dt)
