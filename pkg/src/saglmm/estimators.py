"""Stochastic-approximation estimation loops.

Four fitting procedures share one imputation scaffold (parallel MALA
chains refreshed between parameter updates):

* ``run_imsa``: impute, maximise the complete-data likelihood per chain,
  average the maximisers, then shrink the current estimate toward the
  average by the step size (variance components on either the sigma^2
  or the log-sigma scale).
* ``run_im``: the step-size-one special case; reports the post-burn-in
  average of the iterates.
* ``run_scoresa``: ascend the chain-averaged complete-data score on the
  (beta, log-sigma) scale, with a divergence trip-wire.
* ``run_imsa_variance``: single-chain IMSA that additionally maintains
  online mean/covariance/curvature accumulators and returns a
  missing-information variance estimate of the fitted parameters.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rng_mod
from .glm import GlmError, IrlsConfig, fit_logistic_offset
from .model import GlmmData, Scale, Theta, complete_hessian, group_sumsq, score_gradient
from .sampler import (ChainState, PreconditionMode, SamplerDivergence,
                      adapt_step_size, build_preconditioner, pmala_sweep_with_noise)

__all__ = [
    "Algorithm",
    "StepSchedule",
    "RunConfig",
    "RunTrace",
    "FailureRecord",
    "VarianceAccumulators",
    "VarianceRunResult",
    "VarianceEstimateUnavailable",
    "maximize_complete",
    "step_size",
    "run_imsa",
    "run_im",
    "run_scoresa",
    "run_imsa_variance",
    "average_estimate",
]

SIGMA2_FLOOR = 1e-8
TAU_DIVERGENCE = 20.0
BETA_DIVERGENCE = 1e3


class Algorithm(enum.Enum):
    IM = "im"
    IMSA = "imsa"
    IMSA_LOG = "imsa-log"
    SCORE_SA = "scoresa"


@dataclass(frozen=True)
class StepSchedule:
    """Step-size sequence: 1/t, min(1/t, 1/t0), or a constant."""

    kind: str  # "harmonic" | "capped" | "constant"
    t0: int | None = None
    value: float | None = None

    def __post_init__(self):
        if self.kind not in ("harmonic", "capped", "constant"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "capped" and (self.t0 is None or self.t0 < 1):
            raise ValueError("capped schedule needs t0 >= 1")
        if self.kind == "constant" and self.value is None:
            raise ValueError("constant schedule needs a value")

    def gamma(self, t: int) -> float:
        if t < 1:
            raise ValueError("iteration index starts at 1")
        if self.kind == "harmonic":
            return 1.0 / t
        if self.kind == "capped":
            return min(1.0 / t, 1.0 / self.t0)
        return float(self.value)

    @staticmethod
    def harmonic() -> "StepSchedule":
        return StepSchedule(kind="harmonic")

    @staticmethod
    def capped(t0: int) -> "StepSchedule":
        return StepSchedule(kind="capped", t0=int(t0))

    @staticmethod
    def constant(value: float) -> "StepSchedule":
        return StepSchedule(kind="constant", value=float(value))


def step_size(t: int, schedule: StepSchedule) -> float:
    """Step size at iteration t (t >= 1)."""
    return schedule.gamma(t)


@dataclass(frozen=True)
class RunConfig:
    algorithm: Algorithm
    iterations: int
    theta_init: Theta
    schedule: StepSchedule = field(default_factory=StepSchedule.harmonic)
    chains: int = 4
    mcmc_steps: int = 20
    precondition_after: int = 500
    target_accept: float = 0.6
    initial_step: float = 0.5
    adapt_every: int = 50
    seed: int = 0
    burn_in: int | None = None  # IM averaging; defaults to iterations // 2
    sigma2_floor: float = SIGMA2_FLOOR
    irls: IrlsConfig = field(default_factory=IrlsConfig)
    # accumulator gains for the variance-estimation run
    mean_gain: StepSchedule = field(default_factory=StepSchedule.harmonic)
    cov_gain: StepSchedule = field(default_factory=StepSchedule.harmonic)
    curvature_gain: StepSchedule = field(default_factory=StepSchedule.harmonic)

    def __post_init__(self):
        if self.iterations < 1 or self.chains < 1 or self.mcmc_steps < 1:
            raise ValueError("iterations, chains and mcmc_steps must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        expected = Scale.LOG_SIGMA if self.algorithm in (
            Algorithm.IMSA_LOG, Algorithm.SCORE_SA) else Scale.SIGMA2
        if self.theta_init.scale is not expected:
            raise ValueError(
                f"{self.algorithm.value} expects theta_init on the {expected.value} scale")


@dataclass(frozen=True)
class FailureRecord:
    iteration: int
    kind: str
    message: str


@dataclass
class RunTrace:
    """Audit trail of one SA run (series are on the run's update scale)."""

    algorithm: Algorithm
    param_names: list[str]
    theta_series: np.ndarray        # (iterations_done, p + K)
    update_norms: np.ndarray        # sup-norm of the monitored update
    accept_rates: np.ndarray        # per-iteration acceptance fraction
    final_theta: Theta
    failure: FailureRecord | None = None

    @property
    def iterations_done(self) -> int:
        return self.theta_series.shape[0]


def param_names(p: int, K: int, scale: Scale) -> list[str]:
    var = "sigma2" if scale is Scale.SIGMA2 else "log_sigma"
    return [f"beta_{i + 1}" for i in range(p)] + [f"{var}_{k + 1}" for k in range(K)]


def maximize_complete(u: np.ndarray, data: GlmmData,
                      floor: float = SIGMA2_FLOOR,
                      irls: IrlsConfig = IrlsConfig()) -> Theta:
    """Argmax of the complete-data log-likelihood for a fixed latent vector.

    beta comes from logistic regression with offset Z u; the variance
    maximiser is the per-group mean square of u, floored away from zero.
    """
    u = np.asarray(u, dtype=float)
    beta = fit_logistic_offset(data.y, data.X, data.Z @ u, irls)
    sigma2 = np.maximum(group_sumsq(u, data) / np.array(data.groups, dtype=float), floor)
    return Theta(beta, sigma2, Scale.SIGMA2)


# ---------------------------------------------------------------------------
# shared sampling scaffold
# ---------------------------------------------------------------------------

def _initial_chains(config: RunConfig, data: GlmmData) -> list[ChainState]:
    sd = np.sqrt(data.expand_groups(config.theta_init.sigma2()))
    chains = []
    for j in range(config.chains):
        gen = rng_mod.stream(config.seed, rng_mod.NS_LATENT, j)
        chains.append(ChainState(u=gen.standard_normal(data.q) * sd,
                                 eps=config.initial_step))
    return chains


def _advance_chains(chains: list[ChainState], theta: Theta, data: GlmmData,
                    t: int, config: RunConfig) -> tuple[list[ChainState], float]:
    """One imputation round: every chain runs mcmc_steps MALA steps."""
    mode = (PreconditionMode.IDENTITY if t <= config.precondition_after
            else PreconditionMode.INVERSE_HESSIAN_AT_ZERO)
    precond = build_preconditioner(theta.with_scale(Scale.SIGMA2), data, mode)
    new_chains = []
    accepted = 0
    for j, chain in enumerate(chains):
        gen = rng_mod.stream(config.seed, rng_mod.NS_MCMC, j, t)
        normals = gen.standard_normal((config.mcmc_steps, data.q))
        uniforms = gen.random(config.mcmc_steps)
        advanced = pmala_sweep_with_noise(chain, precond, theta, data, normals, uniforms)
        accepted += advanced.accept_count - chain.accept_count
        new_chains.append(advanced)
    rate = accepted / (len(chains) * config.mcmc_steps)
    if t % config.adapt_every == 0:
        new_chains = [adapt_step_size(c, config.target_accept) for c in new_chains]
    return new_chains, rate


def _finish(algorithm, names, thetas, norms, rates, theta, failure) -> RunTrace:
    return RunTrace(
        algorithm=algorithm,
        param_names=names,
        theta_series=np.array(thetas, dtype=float).reshape(len(thetas), -1),
        update_norms=np.array(norms, dtype=float),
        accept_rates=np.array(rates, dtype=float),
        final_theta=theta,
        failure=failure,
    )


def _imputation_average(maximizers: list[Theta], log_scale: bool) -> np.ndarray:
    """Chain-average of the per-chain maximisers on the update scale."""
    betas = np.mean([m.beta for m in maximizers], axis=0)
    if log_scale:
        var = np.mean([0.5 * np.log(m.var) for m in maximizers], axis=0)
    else:
        var = np.mean([m.var for m in maximizers], axis=0)
    return np.concatenate([betas, var])


def _run_imputation_maximization(config: RunConfig, data: GlmmData,
                                 log_scale: bool) -> RunTrace:
    theta = config.theta_init
    names = param_names(data.p, data.K, theta.scale)
    chains = _initial_chains(config, data)
    thetas, norms, rates = [], [], []
    failure = None

    for t in range(1, config.iterations + 1):
        try:
            chains, rate = _advance_chains(chains, theta, data, t, config)
            maximizers = [maximize_complete(c.u, data, config.sigma2_floor, config.irls)
                          for c in chains]
        except SamplerDivergence as exc:
            failure = FailureRecord(t, "sampler_divergence", str(exc))
            break
        except GlmError as exc:
            failure = FailureRecord(t, type(exc).__name__.lower(), str(exc))
            break
        half = _imputation_average(maximizers, log_scale)
        prev = theta.as_vector()
        gamma = config.schedule.gamma(t)
        new = prev + gamma * (half - prev)
        theta = Theta.from_vector(new, data.p, theta.scale)
        thetas.append(new)
        norms.append(float(np.max(np.abs(half - prev))))
        rates.append(rate)

    return _finish(config.algorithm, names, thetas, norms, rates, theta, failure)


def run_imsa(config: RunConfig, data: GlmmData) -> RunTrace:
    """Imputation-maximisation with the shrinkage update."""
    if config.algorithm not in (Algorithm.IMSA, Algorithm.IMSA_LOG):
        raise ValueError("run_imsa expects an IMSA-family config")
    return _run_imputation_maximization(
        config, data, log_scale=config.algorithm is Algorithm.IMSA_LOG)


def average_estimate(trace: RunTrace, burn_in: int) -> Theta:
    """Mean of the post-burn-in iterates (the IM point estimate)."""
    if trace.iterations_done <= burn_in:
        raise ValueError("burn-in leaves no iterations to average")
    mean = trace.theta_series[burn_in:].mean(axis=0)
    return Theta.from_vector(mean, len(trace.final_theta.beta), trace.final_theta.scale)


def run_im(config: RunConfig, data: GlmmData) -> tuple[RunTrace, Theta | None]:
    """Full-replacement imputation-maximisation plus the averaged estimate.

    The averaged estimate is None when the run failed before the burn-in
    window ended.
    """
    if config.algorithm is not Algorithm.IM:
        raise ValueError("run_im expects an IM config")
    cfg = replace(config, schedule=StepSchedule.constant(1.0))
    trace = _run_imputation_maximization(cfg, data, log_scale=False)
    burn_in = config.burn_in if config.burn_in is not None else config.iterations // 2
    if trace.iterations_done <= burn_in:
        return trace, None
    return trace, average_estimate(trace, burn_in)


def run_scoresa(config: RunConfig, data: GlmmData) -> RunTrace:
    """Stochastic ascent of the chain-averaged complete-data score."""
    if config.algorithm is not Algorithm.SCORE_SA:
        raise ValueError("run_scoresa expects a ScoreSA config")
    theta = config.theta_init
    names = param_names(data.p, data.K, theta.scale)
    chains = _initial_chains(config, data)
    thetas, norms, rates = [], [], []
    failure = None

    for t in range(1, config.iterations + 1):
        try:
            chains, rate = _advance_chains(chains, theta, data, t, config)
        except SamplerDivergence as exc:
            failure = FailureRecord(t, "sampler_divergence", str(exc))
            break
        grad = np.mean([score_gradient(theta, c.u, data) for c in chains], axis=0)
        new = theta.as_vector() + config.schedule.gamma(t) * grad
        if not np.all(np.isfinite(new)):
            failure = FailureRecord(t, "divergence", "non-finite parameter update")
            break
        theta = Theta.from_vector(new, data.p, Scale.LOG_SIGMA)
        thetas.append(new)
        norms.append(float(np.max(np.abs(grad))))
        rates.append(rate)
        if (np.max(np.abs(theta.var)) > TAU_DIVERGENCE
                or np.max(np.abs(theta.beta)) > BETA_DIVERGENCE):
            failure = FailureRecord(t, "divergence",
                                    "parameter estimates exceeded the divergence bounds")
            break

    return _finish(config.algorithm, names, thetas, norms, rates, theta, failure)


# ---------------------------------------------------------------------------
# variance estimation (single-chain run with online accumulators)
# ---------------------------------------------------------------------------

class VarianceEstimateUnavailable(RuntimeError):
    """The accumulated matrices could not be inverted; partial outputs attached."""

    def __init__(self, message: str, result: "VarianceRunResult"):
        super().__init__(message)
        self.result = result


@dataclass
class VarianceAccumulators:
    """Online mean / covariance / curvature recursions.

    With all gains 1/t these reduce to running means and the batch
    covariance of the update sequence (single-pass, no history kept).
    """

    mean_update: np.ndarray        # running mean of r
    cov_update: np.ndarray         # running covariance of r
    mean_curvature: np.ndarray     # running mean of the negative Hessian

    @staticmethod
    def zeros(dim: int) -> "VarianceAccumulators":
        return VarianceAccumulators(np.zeros(dim), np.zeros((dim, dim)),
                                    np.zeros((dim, dim)))

    def update(self, r: np.ndarray, H: np.ndarray,
               rho: float, lam: float, nu: float) -> None:
        delta = r - self.mean_update  # deviation from the *previous* mean
        self.cov_update += lam * ((1.0 - lam) * np.outer(delta, delta) - self.cov_update)
        self.mean_update += rho * delta
        self.mean_curvature += nu * (H - self.mean_curvature)


@dataclass
class VarianceRunResult:
    trace: RunTrace
    accumulators: VarianceAccumulators
    update_series: np.ndarray      # (iterations_done, p + K), the r vectors
    curvature_series: np.ndarray   # (iterations_done, p + K, p + K)
    covariance: np.ndarray | None = None

    @property
    def point_estimate(self) -> Theta:
        return self.trace.final_theta


def run_imsa_variance(config: RunConfig, data: GlmmData) -> VarianceRunResult:
    """Single-chain IMSA with a missing-information variance estimate.

    The variance output is [Hbar (I - Rbar Hbar)]^{-1} evaluated at the
    final accumulator values; raises VarianceEstimateUnavailable (with
    the completed run attached) when that matrix cannot be formed.
    """
    if config.algorithm not in (Algorithm.IMSA, Algorithm.IMSA_LOG):
        raise ValueError("run_imsa_variance expects an IMSA-family config")
    if config.chains != 1:
        raise ValueError("the variance-estimation run is defined for a single chain")
    log_scale = config.algorithm is Algorithm.IMSA_LOG

    theta = config.theta_init
    names = param_names(data.p, data.K, theta.scale)
    chains = _initial_chains(config, data)
    dim = data.p + data.K
    acc = VarianceAccumulators.zeros(dim)
    thetas, norms, rates, r_series, h_series = [], [], [], [], []
    failure = None

    for t in range(1, config.iterations + 1):
        try:
            chains, rate = _advance_chains(chains, theta, data, t, config)
            maximizer = maximize_complete(chains[0].u, data, config.sigma2_floor,
                                          config.irls)
        except SamplerDivergence as exc:
            failure = FailureRecord(t, "sampler_divergence", str(exc))
            break
        except GlmError as exc:
            failure = FailureRecord(t, type(exc).__name__.lower(), str(exc))
            break
        half = _imputation_average([maximizer], log_scale)
        prev = theta.as_vector()
        r = half - prev
        H = complete_hessian(theta, chains[0].u, data)
        acc.update(r, H, config.mean_gain.gamma(t), config.cov_gain.gamma(t),
                   config.curvature_gain.gamma(t))
        theta = Theta.from_vector(prev + config.schedule.gamma(t) * r, data.p, theta.scale)
        thetas.append(theta.as_vector())
        norms.append(float(np.max(np.abs(r))))
        rates.append(rate)
        r_series.append(r)
        h_series.append(H)

    trace = _finish(config.algorithm, names, thetas, norms, rates, theta, failure)
    result = VarianceRunResult(
        trace=trace,
        accumulators=acc,
        update_series=np.array(r_series, dtype=float).reshape(len(r_series), -1),
        curvature_series=np.array(h_series, dtype=float).reshape(len(h_series), dim, dim),
    )

    hbar = acc.mean_curvature
    rbar = acc.cov_update
    info = hbar - hbar @ rbar @ hbar  # Hbar (I - Rbar Hbar), symmetric
    info = 0.5 * (info + info.T)
    if not np.all(np.isfinite(info)):
        raise VarianceEstimateUnavailable("accumulated information is not finite", result)
    try:
        covariance = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise VarianceEstimateUnavailable(str(exc), result) from exc
    if not np.all(np.isfinite(covariance)):
        raise VarianceEstimateUnavailable("variance estimate is not finite", result)
    result.covariance = 0.5 * (covariance + covariance.T)
    return result
