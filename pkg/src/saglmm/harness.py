"""Replicated-experiment harness: sweeps, diagnostics, CSV outputs.

A sweep generates one dataset per replicate, draws dispersed initial
values, runs every configured algorithm, and writes three kinds of
artifacts under the output directory:

* ``traces/rep{r}_{algo}.csv``: per-iteration estimates, update norms
  and acceptance rates;
* ``runs/rep{r}_{algo}.json``: the summary row (also the resume
  checkpoint: finished runs are loaded, not recomputed);
* ``summary.csv`` and ``aggregate.csv``: one row per run, and
  min/q25/median/q75/max per parameter per algorithm (boxplot-ready).

Runs are deterministic given the master seed, so a resumed sweep
reproduces the identical summary as an uninterrupted one.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as rng_mod
from .estimators import (Algorithm, RunConfig, RunTrace, StepSchedule, run_im,
                         run_imsa, run_scoresa)
from .model import GlmmData, Scale, Theta
from .simulate import (BOOTH_HOBERT_TRUTH, SALAMANDER_TRUTH, default_salamander_design,
                       gen_booth_hobert, gen_salamander, load_design)

__all__ = [
    "ALGORITHM_PRESETS",
    "SCORESA_T0",
    "ExperimentConfig",
    "DiagnosticSeries",
    "rolling_norm_diagnostic",
    "run_replicates",
    "SweepResult",
    "write_trace_csv",
    "read_trace_csv",
]

SCORESA_T0 = {f"scoresa-{i + 1}": t0 for i, t0 in enumerate((1, 5, 10, 25, 50, 100))}

ALGORITHM_PRESETS: dict[str, tuple[Algorithm, StepSchedule]] = {
    "im": (Algorithm.IM, StepSchedule.constant(1.0)),
    "imsa": (Algorithm.IMSA, StepSchedule.harmonic()),
    "imsa-log": (Algorithm.IMSA_LOG, StepSchedule.harmonic()),
    **{name: (Algorithm.SCORE_SA, StepSchedule.capped(t0))
       for name, t0 in SCORESA_T0.items()},
}

_MODEL_TRUTH = {"booth-hobert": BOOTH_HOBERT_TRUTH, "salamander": SALAMANDER_TRUTH}

_DEFAULT_INIT_RANGES = {
    "booth-hobert": ((1.0, 2.0), (0.5, 1.5)),
    "salamander": ((0.0, 2.0), (-1.0, 1.0), (-3.0, -1.0), (0.0, 2.0),
                   (1.0, 2.5), (1.0, 2.5)),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One replicated sweep: model, truth, algorithms and run settings."""

    model: str
    replicates: int
    iterations: int
    seed: int
    output_dir: str
    algorithms: tuple[str, ...] = tuple(
        ["imsa", "imsa-log"] + sorted(SCORESA_T0, key=lambda s: SCORESA_T0[s]))
    truth: Theta | None = None
    init_ranges: tuple[tuple[float, float], ...] | None = None
    chains: int = 4
    mcmc_steps: int = 20
    precondition_after: int = 500
    target_accept: float = 0.6
    initial_step: float = 0.5
    adapt_every: int = 50
    window: int = 250
    threshold: float = 0.05
    workers: int = 1
    design_path: str | None = None

    def __post_init__(self):
        if self.model not in _MODEL_TRUTH:
            raise ValueError(f"unknown model {self.model!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        for algo in self.algorithms:
            if algo not in ALGORITHM_PRESETS:
                raise ValueError(f"unknown algorithm preset {algo!r}")
        if self.truth is None:
            spec = _MODEL_TRUTH[self.model]
            object.__setattr__(self, "truth",
                               Theta(np.array(spec["beta"]), np.array(spec["sigma2"])))
        if self.init_ranges is None:
            object.__setattr__(self, "init_ranges", _DEFAULT_INIT_RANGES[self.model])
        want = self.truth.p + self.truth.K
        if len(self.init_ranges) != want:
            raise ValueError(f"need {want} init ranges, got {len(self.init_ranges)}")
        for lo, hi in self.init_ranges:
            if not lo < hi:
                raise ValueError("init ranges must have lo < hi")

    def fingerprint(self) -> str:
        """Hash of every field that affects a single run's result."""
        payload = {
            "model": self.model,
            "iterations": self.iterations,
            "seed": self.seed,
            "truth_beta": [float(v) for v in self.truth.beta],
            "truth_sigma2": [float(v) for v in self.truth.var],
            "init_ranges": [[float(a), float(b)] for a, b in self.init_ranges],
            "chains": self.chains,
            "mcmc_steps": self.mcmc_steps,
            "precondition_after": self.precondition_after,
            "target_accept": self.target_accept,
            "initial_step": self.initial_step,
            "adapt_every": self.adapt_every,
            "window": self.window,
            "threshold": self.threshold,
            "design_path": self.design_path,
        }
        digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode())
        return digest.hexdigest()[:16]


@dataclass(frozen=True)
class DiagnosticSeries:
    """Rolling mean of the per-iteration update norms, plus the verdict."""

    rolling: np.ndarray
    min_rolling: float
    converged: bool
    window: int
    threshold: float


def rolling_norm_diagnostic(trace, window: int, threshold: float) -> DiagnosticSeries:
    """Sliding unweighted mean (length T - window + 1), its min, and the flag."""
    norms = trace.update_norms if isinstance(trace, RunTrace) else np.asarray(trace, float)
    if window < 1:
        raise ValueError("window must be >= 1")
    if norms.shape[0] < window:
        raise ValueError(f"trace has {norms.shape[0]} iterations, fewer than window={window}")
    rolling = np.convolve(norms, np.full(window, 1.0 / window), mode="valid")
    min_rolling = float(np.min(rolling))
    return DiagnosticSeries(rolling, min_rolling, min_rolling < threshold,
                            window, threshold)


# ---------------------------------------------------------------------------
# trace CSV
# ---------------------------------------------------------------------------

def write_trace_csv(path, trace: RunTrace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", *trace.param_names, "update_norm", "acceptance_rate"])
        for t in range(trace.iterations_done):
            writer.writerow([t + 1,
                             *(repr(float(v)) for v in trace.theta_series[t]),
                             repr(float(trace.update_norms[t])),
                             repr(float(trace.accept_rates[t]))])


def read_trace_csv(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    arr = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {
        "param_names": header[1:-2],
        "iteration": arr[:, 0].astype(int),
        "theta_series": arr[:, 1:-2],
        "update_norms": arr[:, -2],
        "acceptance_rates": arr[:, -1],
    }


# ---------------------------------------------------------------------------
# sweep execution
# ---------------------------------------------------------------------------

def replicate_dataset(config: ExperimentConfig, replicate: int) -> GlmmData:
    """The dataset of one replicate (deterministic in the master seed)."""
    data_seed = rng_mod.derive_seed(config.seed, rng_mod.NS_DATA, replicate)
    if config.model == "booth-hobert":
        data, _ = gen_booth_hobert(float(config.truth.beta[0]),
                                   float(config.truth.var[0]), data_seed)
        return data
    if config.design_path is not None:
        design = load_design(config.design_path)
    else:
        design = default_salamander_design(
            rng_mod.derive_seed(config.seed, rng_mod.NS_DESIGN, 0))
    data, _ = gen_salamander(config.truth, design, data_seed)
    return data


def draw_initial_theta(config: ExperimentConfig, replicate: int) -> Theta:
    """Uniformly dispersed initial parameters (original scale), one draw per
    replicate, shared by every algorithm fitted to that replicate."""
    gen = rng_mod.stream(config.seed, rng_mod.NS_INIT, replicate)
    values = np.array([gen.uniform(lo, hi) for lo, hi in config.init_ranges])
    p = config.truth.p
    return Theta(values[:p], values[p:], Scale.SIGMA2)


def _run_config(config: ExperimentConfig, replicate: int, algo: str,
                theta0: Theta) -> RunConfig:
    algorithm, schedule = ALGORITHM_PRESETS[algo]
    scale = (Scale.LOG_SIGMA
             if algorithm in (Algorithm.IMSA_LOG, Algorithm.SCORE_SA) else Scale.SIGMA2)
    return RunConfig(
        algorithm=algorithm,
        schedule=schedule,
        iterations=config.iterations,
        theta_init=theta0.with_scale(scale),
        chains=config.chains,
        mcmc_steps=config.mcmc_steps,
        precondition_after=config.precondition_after,
        target_accept=config.target_accept,
        initial_step=config.initial_step,
        adapt_every=config.adapt_every,
        seed=rng_mod.derive_seed(config.seed, rng_mod.NS_RUN, replicate),
    )


def _summary_row(config: ExperimentConfig, replicate: int, algo: str,
                 trace: RunTrace, estimate: Theta) -> dict:
    est = estimate.with_scale(Scale.SIGMA2)
    row: dict = {"replicate": replicate, "algorithm": algo}
    for i, b in enumerate(est.beta):
        row[f"final_beta_{i + 1}"] = float(b)
    for k, s2 in enumerate(est.var):
        row[f"final_sigma2_{k + 1}"] = float(s2)
    for k, tau in enumerate(est.log_sigma()):
        row[f"final_log_sigma_{k + 1}"] = float(tau)
    if trace.iterations_done >= config.window:
        diag = rolling_norm_diagnostic(trace, config.window, config.threshold)
        row["min_rolling_norm"] = diag.min_rolling
        row["converged"] = bool(diag.converged)
    else:
        row["min_rolling_norm"] = float("nan")
        row["converged"] = False
    if trace.failure is None:
        row["failure"] = ""
    else:
        row["failure"] = f"{trace.failure.kind}@t={trace.failure.iteration}"
    return row


def run_one(config: ExperimentConfig, replicate: int, algo: str) -> dict:
    """Execute (or resume) a single run; writes its trace and checkpoint."""
    os.makedirs(os.path.join(config.output_dir, "traces"), exist_ok=True)
    os.makedirs(os.path.join(config.output_dir, "runs"), exist_ok=True)
    tag = f"rep{replicate:03d}_{algo}"
    trace_path = os.path.join(config.output_dir, "traces", f"{tag}.csv")
    json_path = os.path.join(config.output_dir, "runs", f"{tag}.json")
    fingerprint = config.fingerprint()

    if os.path.exists(json_path) and os.path.exists(trace_path):
        with open(json_path) as fh:
            payload = json.load(fh)
        if payload.get("fingerprint") == fingerprint:
            return payload["row"]

    data = replicate_dataset(config, replicate)
    theta0 = draw_initial_theta(config, replicate)
    run_cfg = _run_config(config, replicate, algo, theta0)
    algorithm = run_cfg.algorithm
    if algorithm is Algorithm.IM:
        trace, averaged = run_im(run_cfg, data)
        estimate = averaged if averaged is not None else trace.final_theta
    elif algorithm is Algorithm.SCORE_SA:
        trace = run_scoresa(run_cfg, data)
        estimate = trace.final_theta
    else:
        trace = run_imsa(run_cfg, data)
        estimate = trace.final_theta

    write_trace_csv(trace_path, trace)
    row = _summary_row(config, replicate, algo, trace, estimate)
    with open(json_path, "w") as fh:
        json.dump({"fingerprint": fingerprint, "row": row}, fh)
    return row


def _run_task(args) -> tuple[int, str, dict]:
    config, replicate, algo = args
    return replicate, algo, run_one(config, replicate, algo)


@dataclass
class SweepResult:
    rows: list[dict]
    aggregate: list[dict] = field(default_factory=list)
    summary_path: str = ""
    aggregate_path: str = ""

    @property
    def n_failed(self) -> int:
        return sum(1 for row in self.rows if row["failure"])


def aggregate_rows(rows: list[dict]) -> list[dict]:
    """Per-(algorithm, parameter) quantile table of the final estimates."""
    if not rows:
        return []
    params = [k for k in rows[0] if k.startswith("final_")]
    algos = sorted({row["algorithm"] for row in rows})
    table = []
    for algo in algos:
        values = [row for row in rows if row["algorithm"] == algo]
        for param in params:
            x = np.array([row[param] for row in values], dtype=float)
            table.append({
                "algorithm": algo,
                "parameter": param.removeprefix("final_"),
                "min": float(np.min(x)),
                "q25": float(np.quantile(x, 0.25)),
                "median": float(np.quantile(x, 0.5)),
                "q75": float(np.quantile(x, 0.75)),
                "max": float(np.max(x)),
            })
    return table


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_rows_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(rows[0].keys())
        for row in rows:
            writer.writerow([_format_cell(v) for v in row.values()])


def run_replicates(config: ExperimentConfig) -> SweepResult:
    """Run the full sweep (resuming finished runs) and write the tables."""
    os.makedirs(config.output_dir, exist_ok=True)
    tasks = [(config, r, algo)
             for r in range(1, config.replicates + 1)
             for algo in config.algorithms]
    results: dict[tuple[int, str], dict] = {}
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for replicate, algo, row in pool.map(_run_task, tasks):
                results[(replicate, algo)] = row
    else:
        for task in tasks:
            replicate, algo, row = _run_task(task)
            results[(replicate, algo)] = row

    rows = [results[(r, algo)]
            for r in range(1, config.replicates + 1)
            for algo in config.algorithms]
    aggregate = aggregate_rows(rows)

    summary_path = os.path.join(config.output_dir, "summary.csv")
    aggregate_path = os.path.join(config.output_dir, "aggregate.csv")
    _write_rows_csv(summary_path, rows)
    if aggregate:
        _write_rows_csv(aggregate_path, aggregate)
    return SweepResult(rows=rows, aggregate=aggregate,
                       summary_path=summary_path, aggregate_path=aggregate_path)


def read_summary_csv(path) -> list[dict]:
    """Summary rows with numeric fields restored (floats round-trip exactly)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            row: dict = {
                "replicate": int(raw["replicate"]),
                "algorithm": raw["algorithm"],
            }
            for key, value in raw.items():
                if key.startswith("final_") or key == "min_rolling_norm":
                    row[key] = float(value)
            row["converged"] = raw["converged"] == "True"
            row["failure"] = raw["failure"]
            rows.append(row)
    return rows
