"""Benchmark of the sampler kernel backends (compiled vs pure Python).

Times the raw MALA inner loop on the two benchmark problem sizes with
identical inputs per backend, so the comparison isolates kernel speed.
"""
from __future__ import annotations

import time

import numpy as np

from ._kernels import available_backends
from .model import Scale, Theta
from .sampler import PreconditionMode, build_preconditioner
from .simulate import (SALAMANDER_TRUTH, default_salamander_design,
                       gen_booth_hobert, gen_salamander)

__all__ = ["benchmark", "format_table"]


def _problems(seed: int):
    bh, _ = gen_booth_hobert(5.0, 0.5, seed)
    theta_bh = Theta(np.array([5.0]), np.array([0.5]))
    sal_truth = Theta(np.array(SALAMANDER_TRUTH["beta"]),
                      np.array(SALAMANDER_TRUTH["sigma2"]))
    sal, _ = gen_salamander(sal_truth, default_salamander_design(seed), seed)
    return [("booth-hobert", bh, theta_bh), ("salamander", sal, sal_truth)]


def benchmark(steps: int = 20000, seed: int = 123,
              preconditioned: bool = True) -> list[dict]:
    """Time every available backend; returns rows of steps-per-second."""
    rng = np.random.default_rng(seed)
    rows = []
    for name, data, theta in _problems(seed):
        mode = (PreconditionMode.INVERSE_HESSIAN_AT_ZERO if preconditioned
                else PreconditionMode.IDENTITY)
        precond = build_preconditioner(theta, data, mode)
        eta_fixed = np.ascontiguousarray(data.X @ theta.beta)
        inv_var = np.ascontiguousarray(1.0 / data.expand_groups(theta.sigma2()))
        u0 = rng.standard_normal(data.q)
        normals = rng.standard_normal((steps, data.q))
        uniforms = rng.random(steps)
        for backend, kernel in sorted(available_backends().items()):
            start = time.perf_counter()
            _, accepts, ok = kernel(
                np.ascontiguousarray(u0), 0.3, data.y, eta_fixed, data.Z, inv_var,
                precond.mode is PreconditionMode.INVERSE_HESSIAN_AT_ZERO,
                precond.sigma_matrix, precond.chol, precond.precision,
                normals, uniforms)
            elapsed = time.perf_counter() - start
            rows.append({
                "problem": name,
                "backend": backend,
                "steps": steps,
                "seconds": elapsed,
                "steps_per_sec": steps / elapsed,
                "accept_rate": accepts / steps,
                "ok": ok,
            })
    for row in rows:
        base = next(r for r in rows
                    if r["problem"] == row["problem"] and r["backend"] == "python")
        row["speedup_vs_python"] = base["seconds"] / row["seconds"]
    return rows


def format_table(rows: list[dict]) -> str:
    header = f"{'problem':<14}{'backend':<9}{'steps/s':>12}{'accept':>9}{'speedup':>9}"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(f"{row['problem']:<14}{row['backend']:<9}"
                     f"{row['steps_per_sec']:>12.0f}{row['accept_rate']:>9.3f}"
                     f"{row['speedup_vs_python']:>9.2f}")
    return "\n".join(lines)
