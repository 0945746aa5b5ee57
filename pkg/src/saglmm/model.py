"""Logistic-normal mixed model and its complete-data likelihood.

The model for a binary response vector y of length n is

    P(y_i = 1 | u) = expit(x_i' beta + z_i' u),
    u ~ N(0, diag(v)),

where the latent vector u splits into K groups of sizes q_1..q_K and v
repeats each group's variance sigma2_k over its coordinates. Dropping
parameter-free constants, the joint log-density of (y, u) is

    loglik(theta, u) = sum_i [y_i eta_i - log(1 + exp(eta_i))]
                       - u' diag(v)^{-1} u / 2
                       - sum_k q_k log(sigma2_k) / 2,

with eta = X beta + Z u. Variance components live either on the
original sigma^2 scale or on the log-sigma scale tau_k = log(sigma_k)
= log(sigma2_k) / 2; :class:`Theta` carries an explicit scale tag and
every derivative routine states which scale it differentiates on.

The negative log of the conditional density of u given y (up to a
u-free constant), used by the samplers, is

    potential(u) = u' diag(v)^{-1} u / 2 - sum_i [y_i (z_i'u) - log(1 + exp(eta_i))],

with gradient diag(v)^{-1} u - Z'(y - expit(eta)) and Hessian
diag(v)^{-1} + Z' diag(expit(eta)(1 - expit(eta))) Z.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Scale",
    "GlmmData",
    "Theta",
    "expit",
    "log1pexp",
    "linear_predictor",
    "complete_loglik",
    "score_gradient",
    "complete_hessian",
    "potential_energy",
    "potential_gradient",
    "potential_hessian",
]

# Above this threshold log(1 + exp(x)) is computed as x + log1p(exp(-x))
# to avoid overflowing exp; below it the direct form is exact.
_LOG1PEXP_SWITCH = 30.0


class Scale(enum.Enum):
    """Parameterisation of the variance components."""

    SIGMA2 = "sigma2"        # original sigma_k^2
    LOG_SIGMA = "log_sigma"  # tau_k = log sigma_k


def log1pexp(x):
    """Numerically stable log(1 + exp(x)), elementwise."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    big = x > _LOG1PEXP_SWITCH
    out[big] = x[big] + np.log1p(np.exp(-x[big]))
    out[~big] = np.log1p(np.exp(x[~big]))
    return out


def expit(x):
    """Logistic function 1 / (1 + exp(-x)), elementwise, overflow-safe."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _as_float_array(a, name: str, ndim: int) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class GlmmData:
    """Observed data: binary responses and both design matrices.

    Attributes:
        y: binary response vector, length n.
        X: fixed-effects design, n x p.
        Z: random-effects design, n x q.
        groups: sizes (q_1, ..., q_K) of the variance groups; the groups
            partition the columns of Z in order.
    """

    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    groups: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "y", _as_float_array(self.y, "y", 1))
        object.__setattr__(self, "X", _as_float_array(self.X, "X", 2))
        object.__setattr__(self, "Z", _as_float_array(self.Z, "Z", 2))
        object.__setattr__(self, "groups", tuple(int(g) for g in self.groups))
        n = self.y.shape[0]
        if self.X.shape[0] != n or self.Z.shape[0] != n:
            raise ValueError("X and Z must have one row per observation")
        if not np.all((self.y == 0.0) | (self.y == 1.0)):
            raise ValueError("y must contain only 0/1 values")
        if any(g < 1 for g in self.groups):
            raise ValueError("all group sizes must be >= 1")
        if sum(self.groups) != self.Z.shape[1]:
            raise ValueError("group sizes must sum to the number of Z columns")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Z.shape[1]

    @property
    def K(self) -> int:
        return len(self.groups)

    def group_slices(self) -> list[slice]:
        """Column ranges of Z belonging to each variance group."""
        edges = np.concatenate([[0], np.cumsum(self.groups)])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    def expand_groups(self, values: np.ndarray) -> np.ndarray:
        """Repeat one value per group out to a length-q vector."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.K,):
            raise ValueError(f"expected {self.K} per-group values, got shape {values.shape}")
        return np.repeat(values, self.groups)


@dataclass(frozen=True)
class Theta:
    """Model parameters: fixed effects plus variance components.

    ``var`` holds sigma_k^2 when ``scale`` is SIGMA2 and tau_k = log sigma_k
    when it is LOG_SIGMA. Conversions between the two go through the
    ``with_scale`` / ``sigma2`` / ``log_sigma`` helpers so no caller does
    scale arithmetic by hand.
    """

    beta: np.ndarray
    var: np.ndarray
    scale: Scale = Scale.SIGMA2

    def __post_init__(self):
        object.__setattr__(self, "beta", _as_float_array(self.beta, "beta", 1))
        object.__setattr__(self, "var", _as_float_array(self.var, "var", 1))
        if not (np.all(np.isfinite(self.beta)) and np.all(np.isfinite(self.var))):
            raise ValueError("theta entries must be finite")
        if self.scale is Scale.SIGMA2 and np.any(self.var <= 0.0):
            raise ValueError("variance components must be positive on the sigma^2 scale")

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    @property
    def K(self) -> int:
        return self.var.shape[0]

    def sigma2(self) -> np.ndarray:
        """Variance components on the original scale."""
        if self.scale is Scale.SIGMA2:
            return self.var.copy()
        return np.exp(2.0 * self.var)

    def log_sigma(self) -> np.ndarray:
        """Variance components as tau_k = log sigma_k."""
        if self.scale is Scale.LOG_SIGMA:
            return self.var.copy()
        return 0.5 * np.log(self.var)

    def with_scale(self, scale: Scale) -> "Theta":
        if scale is self.scale:
            return self
        var = self.sigma2() if scale is Scale.SIGMA2 else self.log_sigma()
        return Theta(self.beta, var, scale)

    def as_vector(self) -> np.ndarray:
        """Concatenated (beta, var) on this theta's scale."""
        return np.concatenate([self.beta, self.var])

    @staticmethod
    def from_vector(vec: np.ndarray, p: int, scale: Scale) -> "Theta":
        vec = np.asarray(vec, dtype=float)
        return Theta(vec[:p], vec[p:], scale)


def _check_dims(theta: Theta, u: np.ndarray, data: GlmmData) -> np.ndarray:
    u = np.asarray(u, dtype=float).reshape(-1)
    if theta.p != data.p:
        raise ValueError(f"theta has {theta.p} fixed effects, data expects {data.p}")
    if theta.K != data.K:
        raise ValueError(f"theta has {theta.K} variance components, data expects {data.K}")
    if u.shape[0] != data.q:
        raise ValueError(f"latent vector has length {u.shape[0]}, data expects {data.q}")
    return u


def linear_predictor(theta: Theta, u: np.ndarray, data: GlmmData) -> np.ndarray:
    """eta = X beta + Z u."""
    u = _check_dims(theta, u, data)
    return data.X @ theta.beta + data.Z @ u


def group_sumsq(u: np.ndarray, data: GlmmData) -> np.ndarray:
    """Per-group sums of squares u^(k)' u^(k), length K."""
    u = np.asarray(u, dtype=float)
    return np.array([float(u[s] @ u[s]) for s in data.group_slices()])


def complete_loglik(theta: Theta, u: np.ndarray, data: GlmmData) -> float:
    """Joint log-density of (y, u), parameter-free constants dropped."""
    u = _check_dims(theta, u, data)
    sigma2 = theta.sigma2()
    if np.any(sigma2 <= 0.0):
        raise ValueError("variance components must be positive")
    eta = data.X @ theta.beta + data.Z @ u
    bernoulli = float(data.y @ eta - np.sum(log1pexp(eta)))
    inv_v = 1.0 / data.expand_groups(sigma2)
    quad = 0.5 * float(u @ (inv_v * u))
    logdet = 0.5 * float(np.array(data.groups) @ np.log(sigma2))
    return bernoulli - quad - logdet


def score_gradient(theta: Theta, u: np.ndarray, data: GlmmData) -> np.ndarray:
    """Gradient of the complete-data log-likelihood on the (beta, tau) scale.

    Returns the concatenation of

        d/d beta  = X'(y - expit(eta)),
        d/d tau_k = exp(-2 tau_k) u^(k)'u^(k) - q_k.
    """
    if theta.scale is not Scale.LOG_SIGMA:
        raise ValueError("score_gradient requires theta on the log-sigma scale")
    u = _check_dims(theta, u, data)
    eta = data.X @ theta.beta + data.Z @ u
    g_beta = data.X.T @ (data.y - expit(eta))
    g_tau = np.exp(-2.0 * theta.var) * group_sumsq(u, data) - np.array(data.groups, dtype=float)
    return np.concatenate([g_beta, g_tau])


def complete_hessian(theta: Theta, u: np.ndarray, data: GlmmData) -> np.ndarray:
    """Negative Hessian of the complete-data log-likelihood.

    Differentiates on theta's own scale, so the variance block is

        sigma^2 scale:  ||u^(k)||^2 / sigma2_k^3 - q_k / (2 sigma2_k^2),
        log-sigma scale: 2 exp(-2 tau_k) ||u^(k)||^2.

    The beta block is X' W X with W = diag(expit(eta)(1 - expit(eta)));
    cross blocks vanish because beta and the variances enter separate
    terms of the log-likelihood.
    """
    u = _check_dims(theta, u, data)
    eta = data.X @ theta.beta + data.Z @ u
    mu = expit(eta)
    w = mu * (1.0 - mu)
    p, K = theta.p, theta.K
    H = np.zeros((p + K, p + K))
    H[:p, :p] = data.X.T @ (w[:, None] * data.X)
    ss = group_sumsq(u, data)
    qk = np.array(data.groups, dtype=float)
    if theta.scale is Scale.SIGMA2:
        s2 = theta.var
        if np.any(s2 <= 0.0):
            raise ValueError("variance components must be positive")
        diag = ss / s2**3 - 0.5 * qk / s2**2
    else:
        diag = 2.0 * np.exp(-2.0 * theta.var) * ss
    H[p:, p:] = np.diag(diag)
    return H


def potential_energy(u: np.ndarray, theta: Theta, data: GlmmData) -> float:
    """Negative log of the conditional density of u given y, up to a constant."""
    u = _check_dims(theta, u, data)
    sigma2 = theta.sigma2()
    if np.any(sigma2 <= 0.0):
        raise ValueError("variance components must be positive")
    eta_z = data.Z @ u
    eta = data.X @ theta.beta + eta_z
    inv_v = 1.0 / data.expand_groups(sigma2)
    return 0.5 * float(u @ (inv_v * u)) - float(data.y @ eta_z - np.sum(log1pexp(eta)))


def potential_gradient(u: np.ndarray, theta: Theta, data: GlmmData) -> np.ndarray:
    """Gradient of :func:`potential_energy` in u."""
    u = _check_dims(theta, u, data)
    sigma2 = theta.sigma2()
    if np.any(sigma2 <= 0.0):
        raise ValueError("variance components must be positive")
    eta = data.X @ theta.beta + data.Z @ u
    inv_v = 1.0 / data.expand_groups(sigma2)
    return inv_v * u - data.Z.T @ (data.y - expit(eta))


def potential_hessian(u: np.ndarray, theta: Theta, data: GlmmData) -> np.ndarray:
    """Hessian of :func:`potential_energy` in u; symmetric positive definite."""
    u = _check_dims(theta, u, data)
    sigma2 = theta.sigma2()
    if np.any(sigma2 <= 0.0):
        raise ValueError("variance components must be positive")
    eta = data.X @ theta.beta + data.Z @ u
    mu = expit(eta)
    w = mu * (1.0 - mu)
    inv_v = 1.0 / data.expand_groups(sigma2)
    return np.diag(inv_v) + data.Z.T @ (w[:, None] * data.Z)
