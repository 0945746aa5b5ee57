"""Preconditioned MALA sampling of the latent-vector conditional.

Each sweep runs a fixed number of Metropolis-adjusted Langevin steps
whose invariant density is the conditional of u given y at the current
parameters. The proposal's drift and noise can be preconditioned by the
inverse curvature of the potential at u = 0, and the step size is
adapted multiplicatively toward a target acceptance rate.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _kernels
from .model import GlmmData, Theta, potential_hessian

__all__ = [
    "PreconditionMode",
    "Preconditioner",
    "ChainState",
    "SamplerDivergence",
    "build_preconditioner",
    "pmala_sweep",
    "pmala_sweep_with_noise",
    "adapt_step_size",
]

STEP_SIZE_BOUNDS = (1e-6, 1e2)
ADAPT_GAIN = 0.5


class SamplerDivergence(RuntimeError):
    """Non-finite potential or gradient: the parameters upstream diverged."""


class PreconditionMode(enum.Enum):
    IDENTITY = "identity"
    INVERSE_HESSIAN_AT_ZERO = "inverse_hessian_at_zero"


@dataclass(frozen=True)
class Preconditioner:
    """Proposal covariance Sigma with the factorisations the kernel needs.

    Identity mode stores no matrices; the kernel skips the products.
    """

    mode: PreconditionMode
    sigma_matrix: np.ndarray | None = None   # Sigma
    chol: np.ndarray | None = None           # lower L with Sigma = L L'
    precision: np.ndarray | None = None      # Sigma^{-1}


@dataclass(frozen=True)
class ChainState:
    """One MCMC chain: latent position, step size and acceptance counters."""

    u: np.ndarray
    eps: float = 0.5
    accept_count: int = 0
    proposal_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))
        if not self.eps > 0.0:
            raise ValueError("step size must be positive")
        if self.accept_count > self.proposal_count:
            raise ValueError("accept_count cannot exceed proposal_count")

    @property
    def acceptance_rate(self) -> float:
        if self.proposal_count == 0:
            return float("nan")
        return self.accept_count / self.proposal_count


def build_preconditioner(theta: Theta, data: GlmmData,
                         mode: PreconditionMode) -> Preconditioner:
    """Sigma = I, or the inverse potential curvature at u = 0 (SPD)."""
    if mode is PreconditionMode.IDENTITY:
        return Preconditioner(mode=mode)
    curvature = potential_hessian(np.zeros(data.q), theta, data)
    try:
        factor = cho_factor(curvature, lower=True)
        sigma = cho_solve(factor, np.eye(data.q))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "potential curvature at u=0 is not positive definite") from exc
    sigma = 0.5 * (sigma + sigma.T)
    chol = np.linalg.cholesky(sigma)
    return Preconditioner(mode=mode, sigma_matrix=sigma, chol=chol,
                          precision=0.5 * (curvature + curvature.T))


def pmala_sweep_with_noise(chain: ChainState, precond: Preconditioner,
                           theta: Theta, data: GlmmData,
                           normals: np.ndarray, uniforms: np.ndarray) -> ChainState:
    """Advance a chain with caller-supplied noise (replay / testing hook).

    ``normals`` has shape (steps, q) and ``uniforms`` shape (steps,);
    step i consumes row i and uniforms[i].
    """
    normals = np.ascontiguousarray(normals, dtype=float)
    uniforms = np.ascontiguousarray(uniforms, dtype=float)
    if normals.ndim != 2 or normals.shape != (uniforms.shape[0], data.q):
        raise ValueError("normals must have shape (steps, q) matching uniforms")
    if uniforms.shape[0] < 1:
        raise ValueError("at least one step is required")
    sigma2 = theta.sigma2()
    if np.any(sigma2 <= 0.0):
        raise ValueError("variance components must be positive")
    eta_fixed = np.ascontiguousarray(data.X @ theta.beta)
    inv_var = np.ascontiguousarray(1.0 / data.expand_groups(sigma2))
    preconditioned = precond.mode is PreconditionMode.INVERSE_HESSIAN_AT_ZERO

    u_new, accepts, ok = _kernels.mala_chain(
        np.ascontiguousarray(chain.u), float(chain.eps),
        data.y, eta_fixed, data.Z, inv_var,
        preconditioned, precond.sigma_matrix, precond.chol, precond.precision,
        normals, uniforms)
    if not ok:
        raise SamplerDivergence("non-finite potential or gradient during the sweep")
    return replace(chain, u=np.asarray(u_new),
                   accept_count=chain.accept_count + int(accepts),
                   proposal_count=chain.proposal_count + uniforms.shape[0])


def pmala_sweep(chain: ChainState, precond: Preconditioner, theta: Theta,
                data: GlmmData, steps: int, rng: np.random.Generator) -> ChainState:
    """Advance a chain by ``steps`` MALA steps, drawing noise from ``rng``."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    normals = rng.standard_normal((steps, data.q))
    uniforms = rng.random(steps)
    return pmala_sweep_with_noise(chain, precond, theta, data, normals, uniforms)


def adapt_step_size(chain: ChainState, target_rate: float) -> ChainState:
    """Multiplicative step-size update toward the target acceptance rate.

    eps <- clip(eps * exp(0.5 * (observed - target)), 1e-6, 1e2); the
    counters reset so the next adaptation sees a fresh window.
    """
    if chain.proposal_count <= 0:
        raise ValueError("cannot adapt before any proposals were made")
    observed = chain.accept_count / chain.proposal_count
    eps = chain.eps * float(np.exp(ADAPT_GAIN * (observed - target_rate)))
    eps = min(max(eps, STEP_SIZE_BOUNDS[0]), STEP_SIZE_BOUNDS[1])
    return replace(chain, eps=eps, accept_count=0, proposal_count=0)
