"""Logistic regression with a fixed offset, fitted by IRLS.

This is the fixed-effects maximiser used inside the imputation-
maximisation loop: given an imputed latent vector u, beta maximises

    sum_i [y_i (x_i' beta) - log(1 + exp(x_i' beta + offset_i))]

with offset_i = z_i' u held fixed. Newton steps solve the weighted
normal equations via a Cholesky factorisation (p is small); a
step-halving line search guards against overshoot under the extreme
offsets early SA iterations can produce.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .model import expit, log1pexp

__all__ = [
    "IrlsConfig",
    "GlmError",
    "NonConvergence",
    "Separation",
    "RankDeficient",
    "fit_logistic_offset",
]


class GlmError(Exception):
    """Base class for IRLS failures."""


class NonConvergence(GlmError):
    """Iteration limit reached before the tolerance was met."""


class Separation(GlmError):
    """The data are (quasi-)separated; the MLE lies at infinity."""


class RankDeficient(GlmError):
    """The weighted normal equations are singular."""


@dataclass(frozen=True)
class IrlsConfig:
    max_iterations: int = 25
    tolerance: float = 1e-8       # relative change in beta
    divergence_norm: float = 1e3  # sup-norm bound on beta

    def __post_init__(self):
        if self.max_iterations <= 0 or self.tolerance <= 0 or self.divergence_norm <= 0:
            raise ValueError("IrlsConfig fields must be positive")


def _objective(beta, y, X, offset):
    eta = X @ beta + offset
    return float(y @ (X @ beta) - np.sum(log1pexp(eta)))


def _separated(beta, y, X) -> bool:
    """Exact certificate that the MLE lies at infinity.

    If every observation with x_i'beta != 0 satisfies (2y_i - 1) x_i'beta > 0,
    the objective is strictly increasing along the ray t*beta (for any
    offset), so no finite maximiser exists.
    """
    s = X @ beta
    active = s != 0.0
    if not np.any(active):
        return False
    return bool(np.all((2.0 * y[active] - 1.0) * s[active] > 0.0))


def fit_logistic_offset(
    y: np.ndarray,
    X: np.ndarray,
    offset: np.ndarray,
    config: IrlsConfig = IrlsConfig(),
) -> np.ndarray:
    """Maximum-likelihood logistic coefficients with a fixed offset.

    Args:
        y: binary responses, length n.
        X: design matrix, n x p, full column rank.
        offset: fixed additive term of the linear predictor, length n.
        config: iteration limits and thresholds.

    Returns:
        The fitted coefficient vector, length p.

    Raises:
        Separation: the logistic MLE diverges (detected exactly via the
            ray certificate, or via the sup-norm threshold).
        RankDeficient: the weighted normal equations could not be factorised.
        NonConvergence: no convergence within ``config.max_iterations``.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    X = np.asarray(X, dtype=float)
    offset = np.asarray(offset, dtype=float).reshape(-1)
    n, p = X.shape
    if y.shape[0] != n or offset.shape[0] != n:
        raise ValueError("y, X, offset must agree on the number of observations")

    beta = np.zeros(p)
    obj = _objective(beta, y, X, offset)
    for _ in range(config.max_iterations):
        eta = X @ beta + offset
        mu = expit(eta)
        grad = X.T @ (y - mu)
        w = mu * (1.0 - mu)
        H = X.T @ (w[:, None] * X)
        try:
            step = cho_solve(cho_factor(H, lower=True), grad)
        except np.linalg.LinAlgError as exc:
            raise RankDeficient("weighted normal equations are singular") from exc
        except ValueError as exc:  # NaN/inf weights
            raise RankDeficient("weighted normal equations are not finite") from exc

        # Step-halving: never accept a step that lowers the objective.
        scale = 1.0
        for _ in range(30):
            cand = beta + scale * step
            cand_obj = _objective(cand, y, X, offset)
            if cand_obj >= obj:
                break
            scale *= 0.5
        else:
            raise NonConvergence("line search failed to improve the objective")

        rel_change = np.max(np.abs(cand - beta)) / max(1.0, np.max(np.abs(cand)))
        beta, obj = cand, cand_obj

        if np.max(np.abs(beta)) > config.divergence_norm or _separated(beta, y, X):
            raise Separation("logistic MLE is diverging (separated data)")
        if rel_change < config.tolerance:
            return beta

    raise NonConvergence(f"IRLS did not converge in {config.max_iterations} iterations")
