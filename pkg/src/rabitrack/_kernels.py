"""Compiled inner loops.

All kernels work in rad/us and take per-step measurement coefficients
precomputed from the record, so the only per-frequency work is the
rotation and the renormalization. Each grid point runs its own
independent recursion; kernels release the GIL so callers may split a
grid across threads.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True, fastmath=False)

# steps between renormalizations in the likelihood loops
BLOCK = 16


@njit(**_JIT)
def simulate_kernel(omegas, uniforms, normals, sigma, ideal, dt, tau_m, k1, damp, state):
    """Propagate the paravector while drawing readouts.

    ``state`` (x, y, z, p) is updated in place and left normalized.
    Internally (z, p) is carried as ``u = p + z``, ``w = p - z`` (see
    :func:`loglik_para`). Returns ``(samples, z_before)``.
    """
    n = omegas.shape[0]
    samples = np.empty(n)
    z_before = np.empty(n)
    x = state[0] / state[3]
    y = state[1] / state[3]
    u = 1.0 + state[2] / state[3]
    w = 1.0 - state[2] / state[3]
    pre = math.exp(-0.5 * k1 * dt)
    for j in range(n):
        z = 0.5 * (u - w)
        z_before[j] = z
        mean = 1.0 if uniforms[j] < 0.5 * (1.0 + z) else -1.0
        r = mean + sigma * normals[j]
        samples[j] = r
        a = r * dt / tau_m
        if ideal:
            u *= math.exp(a)
            w *= math.exp(-a)
        else:
            x *= damp
            y *= damp
            q = a - 0.5 * k1 * dt
            shc = 1.0 + q * q / 6.0 if abs(q) < 1e-4 else math.sinh(q) / q
            w = k1 * dt * pre * shc * u + math.exp(-a) * w
            u *= math.exp(a - k1 * dt)
        h = 0.5 * omegas[j] * dt
        cc = math.cos(h) ** 2
        ss = math.sin(h) ** 2
        s = math.sin(2.0 * h)
        c = math.cos(2.0 * h)
        u, w, x = cc * u + ss * w + s * x, ss * u + cc * w - s * x, c * x - 0.5 * s * (u - w)
        inv = 2.0 / (u + w)
        x *= inv
        y *= inv
        u *= inv
        w *= inv
    state[0] = x
    state[1] = y
    state[2] = 0.5 * (u - w)
    state[3] = 1.0
    return samples, z_before


@njit(**_JIT)
def loglik_pure(omegas, e0, e1, dt, psi):
    """Log of ``||M_N psi||^2`` for each trial angular frequency.

    ``e0, e1`` are the diagonal entries of the rescaled POVM square root per
    step. The vector is renormalized every ``BLOCK`` steps, which bounds its
    growth to ``exp(BLOCK * max|r| dt / 2 tau_m)``. Returns
    ``(loglik, bad_step)`` where ``bad_step`` is -1 when every intermediate
    was finite, else the last step of the first offending block.
    """
    n = omegas.shape[0]
    nsteps = e0.shape[0]
    out = np.empty(n)
    bad = -1
    for i in range(n):
        h = 0.5 * omegas[i] * dt
        c = math.cos(h)
        s = math.sin(h)
        v0 = psi[0]
        v1 = psi[1]
        acc = 0.0
        for j in range(nsteps):
            w0 = e0[j] * v0
            w1 = e1[j] * v1
            v0 = c * w0 - s * w1
            v1 = s * w0 + c * w1
            if (j + 1) % BLOCK == 0 or j == nsteps - 1:
                nrm = v0 * v0 + v1 * v1
                if not (nrm > 0.0 and nrm < math.inf):
                    if bad < 0 or j < bad:
                        bad = j
                    acc = math.nan
                    break
                acc += math.log(nrm)
                inv = 1.0 / math.sqrt(nrm)
                v0 *= inv
                v1 *= inv
        out[i] = acc
    return out, bad


@njit(**_JIT)
def loglik_para(omegas, fuu, fwu, fww, damp, dt, v):
    """Log of the final trace ``p`` of ``M_N v`` on the paravector.

    The state is carried as ``(x, u, w)`` with ``u = p + z``, ``w = p - z``
    (y never reaches p). The drive rotation of (x, z) reads::

        u' = cos^2(h) u + sin^2(h) w + sin(2h) x
        w' = sin^2(h) u + cos^2(h) w - sin(2h) x
        x' = cos(2h) x - sin(2h) (u - w) / 2

    with ``h = omega dt / 2``.
    """
    n = omegas.shape[0]
    nsteps = fuu.shape[0]
    out = np.empty(n)
    bad = -1
    for i in range(n):
        h = 0.5 * omegas[i] * dt
        cc = math.cos(h) ** 2
        ss = math.sin(h) ** 2
        s = math.sin(2.0 * h)
        c = math.cos(2.0 * h)
        x = v[0]
        u = v[3] + v[2]
        w = v[3] - v[2]
        acc = 0.0
        for j in range(nsteps):
            x *= damp
            w = fwu[j] * u + fww[j] * w
            u = fuu[j] * u
            u, w, x = cc * u + ss * w + s * x, ss * u + cc * w - s * x, c * x - 0.5 * s * (u - w)
            if (j + 1) % BLOCK == 0 or j == nsteps - 1:
                p = 0.5 * (u + w)
                if not (p > 0.0 and p < math.inf):
                    if bad < 0 or j < bad:
                        bad = j
                    acc = math.nan
                    break
                acc += math.log(p)
                inv = 1.0 / p
                x *= inv
                u *= inv
                w *= inv
        out[i] = acc
    return out, bad


@njit(**_JIT)
def loglik_grad_pure(omega, e0, e1, dt, psi):
    """Log-likelihood and its derivative in omega, pure path.

    The derivative vector obeys ``w <- (dU) E v + U E w``; both vectors are
    scaled by the same factor each step so their ratio stays exact.
    """
    h = 0.5 * omega * dt
    c = math.cos(h)
    s = math.sin(h)
    dc = -0.5 * dt * s
    ds = 0.5 * dt * c
    v0 = psi[0]
    v1 = psi[1]
    g0 = 0.0
    g1 = 0.0
    acc = 0.0
    bad = -1
    for j in range(e0.shape[0]):
        a0 = e0[j] * v0
        a1 = e1[j] * v1
        b0 = e0[j] * g0
        b1 = e1[j] * g1
        v0 = c * a0 - s * a1
        v1 = s * a0 + c * a1
        g0 = dc * a0 - ds * a1 + c * b0 - s * b1
        g1 = ds * a0 + dc * a1 + s * b0 + c * b1
        nrm = v0 * v0 + v1 * v1
        if not (nrm > 0.0 and nrm < math.inf):
            bad = j
            return math.nan, math.nan, bad
        acc += math.log(nrm)
        inv = 1.0 / math.sqrt(nrm)
        v0 *= inv
        v1 *= inv
        g0 *= inv
        g1 *= inv
    return acc, 2.0 * (v0 * g0 + v1 * g1), bad


@njit(**_JIT)
def loglik_grad_para(omega, fuu, fwu, fww, damp, dt, v):
    """Log-likelihood and its omega-derivative on the paravector."""
    h = 0.5 * omega * dt
    cc = math.cos(h) ** 2
    ss = math.sin(h) ** 2
    s = math.sin(2.0 * h)
    c = math.cos(2.0 * h)
    # derivatives in omega of cc, ss, s, c
    dcc = -0.5 * dt * s
    dss = 0.5 * dt * s
    ds = dt * c
    dc = -dt * s
    x = v[0]
    u = v[3] + v[2]
    w = v[3] - v[2]
    gx = 0.0
    gu = 0.0
    gw = 0.0
    acc = 0.0
    bad = -1
    for j in range(fuu.shape[0]):
        x *= damp
        gx *= damp
        w = fwu[j] * u + fww[j] * w
        u = fuu[j] * u
        gw = fwu[j] * gu + fww[j] * gw
        gu = fuu[j] * gu
        gu, gw, gx = (
            cc * gu + ss * gw + s * gx + dcc * u + dss * w + ds * x,
            ss * gu + cc * gw - s * gx + dss * u + dcc * w - ds * x,
            c * gx - 0.5 * s * (gu - gw) + dc * x - 0.5 * ds * (u - w),
        )
        u, w, x = cc * u + ss * w + s * x, ss * u + cc * w - s * x, c * x - 0.5 * s * (u - w)
        p = 0.5 * (u + w)
        if not (p > 0.0 and p < math.inf):
            bad = j
            return math.nan, math.nan, bad
        acc += math.log(p)
        inv = 1.0 / p
        x *= inv
        u *= inv
        w *= inv
        gx *= inv
        gu *= inv
        gw *= inv
    return acc, 0.5 * (gu + gw), bad
