"""Independent brute-force checks: finite differences and quadrature.

Nothing here shares code with the analytic derivative or estimation
paths; these routines exist to validate them. The quadrature marginal
likelihood applies when each observation loads on exactly one latent
coordinate (one random intercept per cluster), in which case the
marginal factorises over clusters into one-dimensional integrals.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .model import GlmmData, Scale, Theta

__all__ = [
    "fd_gradient",
    "fd_hessian",
    "QuadratureRule",
    "marginal_loglik_quadrature",
    "quadrature_mle",
]


def fd_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient, error O(h^2)."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        hi, lo = f(x + step), f(x - step)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise FloatingPointError("non-finite evaluation in fd_gradient")
        grad[i] = (hi - lo) / (2.0 * h)
    return grad


def fd_hessian(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian, symmetric by construction."""
    x = np.asarray(x, dtype=float)
    d = x.size
    H = np.empty((d, d))
    f0 = f(x)
    if not np.isfinite(f0):
        raise FloatingPointError("non-finite evaluation in fd_hessian")
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        H[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / h**2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            val = (f(x + ei + ej) - f(x + ei - ej)
                   - f(x - ei + ej) + f(x - ei - ej)) / (4.0 * h**2)
            H[i, j] = H[j, i] = val
    if not np.all(np.isfinite(H)):
        raise FloatingPointError("non-finite evaluation in fd_hessian")
    return H


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite nodes/weights for integrals against exp(-t^2)."""

    nodes: np.ndarray
    weights: np.ndarray

    @staticmethod
    def gauss_hermite(order: int = 50) -> "QuadratureRule":
        nodes, weights = np.polynomial.hermite.hermgauss(order)
        return QuadratureRule(nodes, weights)


def _clusters(data: GlmmData) -> list[tuple[int, np.ndarray]]:
    """(group index, observation rows) per latent coordinate.

    Requires every row of Z to have exactly one nonzero entry equal to 1.
    """
    nz_per_row = np.count_nonzero(data.Z, axis=1)
    if not np.all(nz_per_row == 1):
        raise ValueError("quadrature needs exactly one latent per observation")
    cols = np.argmax(data.Z != 0.0, axis=1)
    if not np.all(data.Z[np.arange(data.n), cols] == 1.0):
        raise ValueError("quadrature needs unit loadings on the latent coordinates")
    group_of_col = np.repeat(np.arange(data.K), data.groups)
    return [(int(group_of_col[c]), np.flatnonzero(cols == c)) for c in range(data.q)]


def marginal_loglik_quadrature(theta: Theta, data: GlmmData,
                               rule: QuadratureRule | None = None) -> float:
    """log of the integrated likelihood, cluster by cluster.

    Integrates each cluster's Bernoulli likelihood against its Gaussian
    latent via the substitution u = sqrt(2 sigma^2) t.
    """
    if rule is None:
        rule = QuadratureRule.gauss_hermite()
    theta = theta.with_scale(Scale.SIGMA2)
    if np.any(theta.var <= 0.0):
        raise ValueError("variance components must be positive")
    log_w = np.log(rule.weights)
    total = 0.0
    for group, rows in _clusters(data):
        scale = np.sqrt(2.0 * theta.var[group])
        eta0 = data.X[rows] @ theta.beta
        y = data.y[rows]
        # (rows, nodes) matrix of linear predictors
        eta = eta0[:, None] + scale * rule.nodes[None, :]
        loglik_nodes = np.sum(y[:, None] * eta - np.logaddexp(0.0, eta), axis=0)
        total += logsumexp(log_w + loglik_nodes) - 0.5 * np.log(np.pi)
    return float(total)


def quadrature_mle(data: GlmmData, rule: QuadratureRule | None = None,
                   theta0: Theta | None = None) -> Theta:
    """Marginal MLE via quadrature: quasi-Newton start, Newton polish.

    Optimises over (beta, log sigma^2); the polish iterates
    finite-difference Newton steps until the gradient sup-norm falls
    below 1e-8 (backtracking halves steps that do not improve).
    """
    if rule is None:
        rule = QuadratureRule.gauss_hermite()
    p = data.p

    def objective(vec: np.ndarray) -> float:
        theta = Theta(vec[:p], np.exp(vec[p:]), Scale.SIGMA2)
        return -marginal_loglik_quadrature(theta, data, rule)

    if theta0 is None:
        x0 = np.zeros(p + data.K)
    else:
        t0 = theta0.with_scale(Scale.SIGMA2)
        x0 = np.concatenate([t0.beta, np.log(t0.var)])

    res = minimize(objective, x0, method="L-BFGS-B",
                   jac=lambda v: fd_gradient(objective, v, 1e-6),
                   options={"maxiter": 200, "ftol": 1e-14, "gtol": 1e-10})
    x = res.x
    fx = objective(x)
    for _ in range(40):
        grad = fd_gradient(objective, x, 1e-5)
        if np.max(np.abs(grad)) < 1e-8:
            break
        H = fd_hessian(objective, x, 1e-4)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = grad
        scale = 1.0
        for _ in range(30):
            cand = x - scale * step
            fc = objective(cand)
            if fc <= fx:
                x, fx = cand, fc
                break
            scale *= 0.5
        else:
            break
    return Theta(x[:p], np.exp(x[p:]), Scale.SIGMA2)
