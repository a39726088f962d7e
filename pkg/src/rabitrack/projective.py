"""Periodic projective measurement: an exactly solvable baseline.

A qubit driven at angular frequency ``omega`` is projectively measured every
``tau``. Between measurements it precesses by ``omega * tau``, so each outcome
repeats the previous one with probability ``cos^2(omega tau / 2)`` and flips
with ``sin^2(omega tau / 2)``. The number of flips ``n`` in ``N``
measurements is binomial and is a sufficient statistic for ``omega``.

Frequencies in this module are angular (rad/us), matching the closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .simulate import make_rng


@dataclass(frozen=True)
class ProjectiveRecord:
    bits: np.ndarray
    tau: float
    initial_bit: int = 0

    def __post_init__(self) -> None:
        b = np.asarray(self.bits, dtype=np.int8)
        if b.ndim != 1 or b.size < 1:
            raise ValueError("a projective record needs at least one outcome")
        if np.any((b != 0) & (b != 1)):
            raise ValueError("outcomes must be 0 or 1")
        if self.initial_bit not in (0, 1):
            raise ValueError("initial_bit must be 0 or 1")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        object.__setattr__(self, "bits", b)

    @property
    def n_meas(self) -> int:
        return int(self.bits.size)


def flip_probability(omega: float, tau: float) -> float:
    return math.sin(0.5 * omega * tau) ** 2


def simulate_projective(omega: float, tau: float, n_meas: int, initial_bit: int = 0, seed=0) -> ProjectiveRecord:
    """Draw ``n_meas`` outcomes of the flip/stay Markov chain."""
    if n_meas < 1:
        raise ValueError("n_meas must be >= 1")
    p_d = flip_probability(omega, tau)
    flips = make_rng(seed).random(n_meas) < p_d
    bits = (initial_bit + np.cumsum(flips)) % 2
    return ProjectiveRecord(bits.astype(np.int8), tau, initial_bit)


def count_switches(rec: ProjectiveRecord) -> int:
    """Adjacent unequal pairs, with the known initial bit as element zero."""
    b = np.concatenate(([rec.initial_bit], rec.bits))
    return int(np.count_nonzero(b[1:] != b[:-1]))


def _xlogy(x: float, y: float) -> float:
    return 0.0 if x == 0 else x * math.log(y)


def projective_loglike(n: int, N: int, omega: float, tau: float) -> float:
    """Binomial log-probability of ``n`` switches in ``N`` measurements.

    Uses ``0 ln 0 = 0``, so the boundary values ``p_d in {0, 1}`` give finite
    results when the matching count vanishes (and ``-inf`` otherwise).
    """
    if not 0 <= n <= N:
        raise ValueError("need 0 <= n <= N")
    h = 0.5 * omega * tau
    s2, c2 = math.sin(h) ** 2, math.cos(h) ** 2
    logc = gammaln(N + 1) - gammaln(n + 1) - gammaln(N - n + 1)
    try:
        return float(logc + _xlogy(n, s2) + _xlogy(N - n, c2))
    except ValueError:
        return -math.inf


def projective_mle(n: int, N: int, tau: float) -> tuple[float, float, bool]:
    """Closed-form ``(omega_ml, sigma, boundary)``.

    ``omega_ml = 2 arcsin(sqrt(n/N)) / tau`` lies in ``[0, pi/tau]``;
    frequencies ``omega`` and ``2 pi/tau - omega`` cannot be told apart.
    ``sigma = 1/(tau sqrt(N))`` is the Cramer-Rao width, which does not
    depend on ``omega``. At ``n = 0`` or ``n = N`` the estimate sits where
    its slope in ``n`` diverges and ``boundary`` is set.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if not 0 <= n <= N:
        raise ValueError("need 0 <= n <= N")
    omega = 2.0 * math.asin(math.sqrt(n / N)) / tau
    return omega, 1.0 / (tau * math.sqrt(N)), n in (0, N)


def projective_fisher(N: int, tau: float) -> float:
    """Fisher information ``N tau^2`` about ``omega``."""
    return N * tau**2


def projective_fisher_numeric(N: int, tau: float, omega: float, h: float | None = None) -> float:
    """``sum_n P(n) (d ln P / d omega)^2`` with a central-difference score.

    Kept as an independent check on :func:`projective_fisher`; ``omega``
    must avoid the points where ``p_d`` is 0 or 1.
    """
    h = 1e-6 / tau if h is None else h
    ns = np.arange(N + 1)

    def logp(w):
        s2 = math.sin(0.5 * w * tau) ** 2
        return gammaln(N + 1) - gammaln(ns + 1) - gammaln(N - ns + 1) + ns * math.log(s2) + (N - ns) * math.log(1 - s2)

    lp = logp(omega)
    score = (logp(omega + h) - logp(omega - h)) / (2 * h)
    return float(np.sum(np.exp(lp) * score**2))
