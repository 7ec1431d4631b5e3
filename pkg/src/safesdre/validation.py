"""Offline consistency checks for benchmark models.

These are the checks the ``validate`` CLI subcommand runs: factorization
against the direct drift, the mean-value identity of the barrier
factorization, agreement of the coefficient-form barrier dynamics with the
exact ones, constraint-gradient correctness, and point-wise PBH
stabilizability across the operating box.
"""

from __future__ import annotations

import numpy as np

from .barriers import (
    SafetySpec,
    augment,
    barrier_state_rhs,
    barrier_state_sdc,
    barrier_value,
    beta_tilde,
    chord_is_safe,
    circle_obstacle,
    get_barrier,
)
from .riccati import check_stabilizability
from .systems import make_benchmark, validate_factorization

__all__ = ["validate_benchmark", "central_gradient", "sample_safe_states"]


def central_gradient(f, x, step: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return g


def default_obstacles(benchmark_id: str):
    if benchmark_id == "linear2d":
        return [circle_obstacle([2.0, 2.0], 0.5)]
    return [circle_obstacle([-1.5, 1.5], 0.5), circle_obstacle([1.8, -1.2], 0.7)]


def sample_safe_states(system, safety: SafetySpec, count: int, rng, chord: bool = True):
    """Uniform draws from the operating box, filtered to (chord-)safe states."""
    low, high = system.domain
    out = []
    for _ in range(200 * count):
        if len(out) == count:
            break
        x = rng.uniform(low, high)
        if safety.min_margin(x) <= 0:
            continue
        if chord and not chord_is_safe(safety, x, min_clearance=0.05):
            continue
        out.append(x)
    if len(out) < count:
        raise RuntimeError(f"could only sample {len(out)}/{count} safe states")
    return out


def validate_benchmark(benchmark_id: str, samples: int = 200, seed: int = 0) -> dict:
    """Run all model checks for one benchmark; returns a plain-dict report."""
    rng = np.random.default_rng(seed)
    system = make_benchmark(benchmark_id)
    safety = SafetySpec(default_obstacles(benchmark_id))
    barrier = get_barrier("inverse")
    aug = augment(system, safety, barrier, gamma=1.0)

    checks = {}

    def record(name, max_error, tolerance):
        checks[name] = {
            "max_error": float(max_error),
            "tolerance": float(tolerance),
            "passed": bool(max_error <= tolerance),
        }

    low, high = system.domain
    box_states = [rng.uniform(low, high) for _ in range(samples)]
    report = validate_factorization(system, box_states)
    record("factorization", report.max_rel_error, report.tolerance)

    safe_states = sample_safe_states(system, safety, samples, rng)

    err = 0.0
    for x in safe_states:
        bt = beta_tilde(safety, barrier, x)
        lhs = bt @ x
        rhs = barrier_value(safety, barrier, x) - aug.beta0
        err = max(err, float(np.max(np.abs(lhs - rhs) / np.maximum(1.0, np.abs(rhs)))))
    record("mean_value_identity", err, 1e-7)

    err = 0.0
    for x in safe_states:
        z = rng.normal(scale=0.3, size=aug.q)
        u = rng.normal(scale=2.0, size=system.m)
        x_bar = aug.join(x, z)
        Az, gz = barrier_state_sdc(aug, x_bar)
        lhs = Az @ x + gz @ u - aug.gamma * z
        rhs = barrier_state_rhs(aug, x_bar, u)
        err = max(err, float(np.max(np.abs(lhs - rhs))))
    record("coefficient_vs_direct_bas", err, 1e-7)

    err = 0.0
    for x in safe_states[: min(50, samples)]:
        for con in safety.constraints:
            g_num = central_gradient(con.h, x)
            g = con.grad_h(x)
            err = max(
                err,
                float(np.max(np.abs(g - g_num)) / max(1.0, float(np.max(np.abs(g))))),
            )
    record("constraint_gradients", err, 1e-6)

    pbh_fail = 0
    for x in box_states:
        if not check_stabilizability(system.A_of_x(x), system.g_of_x(x)):
            pbh_fail += 1
    record("pbh_stabilizability_failures", pbh_fail, 0)

    return {
        "benchmark": benchmark_id,
        "samples": samples,
        "seed": seed,
        "checks": checks,
        "passed": all(c["passed"] for c in checks.values()),
    }
