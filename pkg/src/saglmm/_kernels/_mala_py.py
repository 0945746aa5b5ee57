"""Pure-numpy MALA transition kernel (fallback backend).

Semantics are identical to the compiled backend: both consume the same
pre-drawn noise arrays in the same order, so trajectories agree up to
floating-point rounding differences between numpy's vectorised
transcendentals and libm.
"""
from __future__ import annotations

import math

import numpy as np

from ..model import expit, log1pexp

BACKEND_NAME = "python"


def mala_chain(u0, eps, y, eta_fixed, Z, inv_var, preconditioned,
               sigma, chol, precision, normals, uniforms):
    """Advance one chain by len(uniforms) Metropolis-adjusted Langevin steps.

    The target is exp(-potential(u)) with

        potential(u) = sum(inv_var * u * u) / 2 - y'(Z u) + sum(log1pexp(eta_fixed + Z u)).

    Each step proposes u* = xi + eps * L n, where xi is the drifted mean
    u - (eps^2/2) Sigma grad carried from the last accepted state, and
    accepts with probability min(1, rho) using the step-size-scaled
    quadratic forms of the proposal kernel.

    Returns:
        (u_new, accepts, ok) where ok is False when a non-finite
        potential or gradient was encountered (state returned as-is).
    """
    u = np.array(u0, dtype=float)
    steps = uniforms.shape[0]
    half_step = 0.5 * eps * eps

    eta_z = Z @ u
    eta = eta_fixed + eta_z
    pot = 0.5 * float((inv_var * u) @ u) - float(y @ eta_z - np.sum(log1pexp(eta)))
    grad = inv_var * u - Z.T @ (y - expit(eta))
    if not (math.isfinite(pot) and np.all(np.isfinite(grad))):
        return u, 0, False
    xi = u - half_step * (sigma @ grad if preconditioned else grad)

    accepts = 0
    for i in range(steps):
        noise = chol @ normals[i] if preconditioned else normals[i]
        u_star = xi + eps * noise

        eta_z = Z @ u_star
        eta = eta_fixed + eta_z
        pot_star = 0.5 * float((inv_var * u_star) @ u_star) - float(
            y @ eta_z - np.sum(log1pexp(eta)))
        grad_star = inv_var * u_star - Z.T @ (y - expit(eta))
        if not (math.isfinite(pot_star) and np.all(np.isfinite(grad_star))):
            return u, accepts, False
        xi_star = u_star - half_step * (sigma @ grad_star if preconditioned else grad_star)

        fwd = u_star - xi
        back = u - xi_star
        if preconditioned:
            quad_fwd = float(fwd @ (precision @ fwd))
            quad_back = float(back @ (precision @ back))
        else:
            quad_fwd = float(fwd @ fwd)
            quad_back = float(back @ back)
        log_rho = pot - pot_star + (quad_fwd - quad_back) / (2.0 * eps * eps)

        if log_rho >= 0.0 or uniforms[i] < math.exp(log_rho):
            u, xi, pot = u_star, xi_star, pot_star
            accepts += 1

    return u, accepts, True
