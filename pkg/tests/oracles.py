"""Independent reference implementations shared by the test modules."""

import math

import numpy as np

from rabitrack.model import povm_element_normalized, rotation_matrix


def bayes_loglik(samples, f_mhz, model, psi):
    """Sum of ln P(r_j | rho_j) with full Gaussian densities and normalized updates."""
    u = rotation_matrix(2 * math.pi * f_mhz, model.dt)
    rho = np.outer(psi, psi)
    acc = 0.0
    for r in samples:
        e = povm_element_normalized(r, model)
        prob = float(np.trace(e @ rho))
        acc += math.log(prob)
        k = np.sqrt(e)
        rho = u @ k @ rho @ k @ u.T / prob
    return acc


def richardson_derivative(fun, f, h):
    """Central difference with one Richardson step; error O(h^4)."""

    def cd(step):
        return (fun(f + step) - fun(f - step)) / (2 * step)

    return (4 * cd(h / 2) - cd(h)) / 3
