"""Barrier functions, barrier-state dynamics, and safety-embedded models.

A safety constraint ``h(x) > 0`` is embedded into the plant by a *barrier
state* ``z``: an auxiliary state driven so that ``z`` tracks
``beta(x) - beta0``, where ``beta(x) = B(h(x))`` blows up at the constraint
boundary and ``beta0 = beta(0)`` centers the equilibrium at the origin.
Keeping ``z`` bounded is then equivalent to keeping the plant safe, so a
stabilizing controller for the augmented model is a safe controller for the
original one.

The barrier state equation is

    zdot = B'(B^{-1}(z + beta0)) * dh/dx * (f(x) + g(x) u)
           - gamma * (z + beta0 - beta(x))

and the mean-value factorization ``beta(x) - beta0 = beta_tilde(x) x`` with
``beta_tilde(x) = integral_0^1 (d beta/dx)(mu x) d mu`` rewrites it in
coefficient form, giving the augmented model

    Abar(xbar) = [[A(x), 0], [Az(x, z), -gamma I]],
    gbar(xbar) = [[g(x)], [gz(x, z)]]

on which point-wise Riccati synthesis runs unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .exceptions import (
    OriginUnsafe,
    QuadratureNotConverged,
    SegmentUnsafe,
    UnsafeState,
)
from .systems import SdcSystem

__all__ = [
    "BarrierFunction",
    "inverse_barrier",
    "log_barrier",
    "get_barrier",
    "Constraint",
    "circle_obstacle",
    "SafetySpec",
    "AugmentedSystem",
    "barrier_value",
    "beta_tilde",
    "barrier_state_rhs",
    "barrier_state_sdc",
    "augment",
    "chord_is_safe",
]


@dataclass(frozen=True)
class BarrierFunction:
    """A scalar barrier ``B`` with the compositions the BaS machinery needs.

    ``B`` must be smooth on ``(0, inf)`` with ``B(eta) -> inf`` as
    ``eta -> 0+``, and ``B_prime_of_B_inverse`` (the composition
    ``B' o B^{-1}`` evaluated directly, without round-tripping through the
    inverse) must be smooth on the range of ``B``.
    """

    kind: str
    B: Callable
    B_prime: Callable
    B_inverse: Callable
    B_prime_of_B_inverse: Callable


def inverse_barrier() -> BarrierFunction:
    """``B(eta) = 1/eta``; the composition ``B' o B^{-1}`` is ``-w^2``."""
    return BarrierFunction(
        kind="inverse",
        B=lambda e: 1.0 / e,
        B_prime=lambda e: -1.0 / (e * e),
        B_inverse=lambda w: 1.0 / w,
        B_prime_of_B_inverse=lambda w: -(w * w),
    )


def log_barrier() -> BarrierFunction:
    """``B(eta) = -log(eta / (1 + eta))``, evaluated stably as ``log1p(1/eta)``."""
    return BarrierFunction(
        kind="log",
        B=lambda e: np.log1p(1.0 / e),
        B_prime=lambda e: -1.0 / (e * (1.0 + e)),
        B_inverse=lambda w: 1.0 / np.expm1(w),
        B_prime_of_B_inverse=lambda w: -np.expm1(w) ** 2 * np.exp(-w),
    )


_BARRIERS = {"inverse": inverse_barrier, "log": log_barrier}


def get_barrier(kind: str) -> BarrierFunction:
    try:
        return _BARRIERS[kind]()
    except KeyError:
        raise ValueError(f"unknown barrier kind {kind!r}; available: {sorted(_BARRIERS)}")


@dataclass(frozen=True)
class Constraint:
    """One safety function ``h`` (positive on the safe side) and its gradient.

    ``vectorized`` marks closures that accept stacked states ``(N, n)`` and
    return ``(N,)`` / ``(N, n)``; the quadrature uses that fast path.
    """

    h: Callable
    grad_h: Callable
    name: str = ""
    vectorized: bool = False


def circle_obstacle(center, radius, pos_idx=(0, 1), name="") -> Constraint:
    """Keep-out disk: ``h(x) = |pos(x) - center|^2 - radius^2``.

    ``pos_idx`` selects the position components inside the full state.
    """
    center = np.asarray(center, dtype=float)
    idx = tuple(pos_idx)
    r2 = float(radius) ** 2

    def h(x):
        x = np.asarray(x, dtype=float)
        d = np.stack([x[..., i] for i in idx], axis=-1) - center
        return np.sum(d * d, axis=-1) - r2

    def grad_h(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for k, i in enumerate(idx):
            out[..., i] = 2.0 * (x[..., i] - center[k])
        return out

    return Constraint(
        h=h,
        grad_h=grad_h,
        name=name or f"circle(c={center.tolist()}, r={radius})",
        vectorized=True,
    )


class SafetySpec:
    """A set of constraints plus the barrier-state layout they induce.

    In ``per_constraint`` mode every constraint gets its own barrier state;
    in ``aggregated`` mode a single state is built from the aggregated
    safety function ``1/h = sum_i 1/h_i``. Safe-set membership is always
    ``h_i(x) > 0`` for every raw constraint.
    """

    def __init__(self, constraints: Sequence[Constraint], mode: str = "per_constraint"):
        if mode not in ("per_constraint", "aggregated"):
            raise ValueError(f"unknown mode {mode!r}")
        self.constraints = tuple(constraints)
        self.mode = mode

    @property
    def q(self) -> int:
        """Number of barrier states this spec induces."""
        if not self.constraints:
            return 0
        return 1 if self.mode == "aggregated" else len(self.constraints)

    def margins(self, x) -> np.ndarray:
        """Raw constraint values ``h_i(x)``; shape ``(n_constraints,)``."""
        return np.array([c.h(np.asarray(x, dtype=float)) for c in self.constraints])

    def min_margin(self, x) -> float:
        """Worst raw margin; ``+inf`` when unconstrained."""
        if not self.constraints:
            return np.inf
        return float(np.min(self.margins(x)))

    def is_safe(self, x) -> bool:
        return self.min_margin(x) > 0.0

    # -- effective (per-barrier-state) safety functions --------------------

    def effective_h(self, X, floor: float | None = None) -> np.ndarray:
        """Per-barrier-state safety values at stacked states.

        Parameters
        ----------
        X : (..., n) array
        floor : float, optional
            Clamp each raw ``h_i`` from below before use. The simulator
            passes its overflow guard here; analysis code leaves it unset.

        Returns
        -------
        (..., q) array
        """
        X = np.asarray(X, dtype=float)
        vals = self._raw_h_stack(X)
        if floor is not None:
            vals = np.maximum(vals, floor)
        if self.mode == "aggregated" and self.constraints:
            agg = 1.0 / np.sum(1.0 / vals, axis=-1)
            return agg[..., None]
        return vals

    def effective_grad(self, X) -> np.ndarray:
        """Gradients of the effective safety functions; shape ``(..., q, n)``."""
        X = np.asarray(X, dtype=float)
        grads = self._raw_grad_stack(X)
        if self.mode == "aggregated" and self.constraints:
            vals = self._raw_h_stack(X)
            agg = 1.0 / np.sum(1.0 / vals, axis=-1)
            weighted = grads / (vals[..., None] ** 2)
            return (agg[..., None] ** 2 * np.sum(weighted, axis=-2))[..., None, :]
        return grads

    def _raw_h_stack(self, X) -> np.ndarray:
        if not self.constraints:
            return np.zeros(X.shape[:-1] + (0,))
        cols = [
            c.h(X) if (c.vectorized or X.ndim == 1) else np.apply_along_axis(c.h, -1, X)
            for c in self.constraints
        ]
        return np.stack([np.asarray(v, dtype=float) for v in cols], axis=-1)

    def _raw_grad_stack(self, X) -> np.ndarray:
        if not self.constraints:
            return np.zeros(X.shape[:-1] + (0, X.shape[-1]))
        rows = []
        for c in self.constraints:
            if c.vectorized or X.ndim == 1:
                rows.append(np.asarray(c.grad_h(X), dtype=float))
            else:
                rows.append(np.apply_along_axis(c.grad_h, -1, X))
        return np.stack(rows, axis=-2)


def barrier_value(safety: SafetySpec, barrier: BarrierFunction, x) -> np.ndarray:
    """Barrier values ``beta_j(x) = B(h_j(x))`` per barrier state; shape ``(q,)``.

    Raises
    ------
    UnsafeState
        Any raw constraint satisfies ``h_i(x) <= 0``.
    """
    m = safety.min_margin(x)
    if m <= 0.0:
        raise UnsafeState(f"state outside safe set: min h = {m:.6g}")
    return np.atleast_1d(barrier.B(safety.effective_h(x)))


@lru_cache(maxsize=None)
def _gauss_legendre_01(k: int):
    nodes, weights = np.polynomial.legendre.leggauss(k)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def chord_is_safe(
    safety: SafetySpec, x, points: int = 201, min_clearance: float = 0.0
) -> bool:
    """True when ``h_i(mu x) > min_clearance`` on a uniform screen of the chord.

    ``min_clearance`` matters for samplers: a chord that merely grazes the
    boundary is technically safe but makes the factorization integrand
    nearly singular, so tests and search routines ask for a margin.
    """
    x = np.asarray(x, dtype=float)
    mus = np.linspace(0.0, 1.0, points)
    states = mus[:, None] * x[None, :]
    if not safety.constraints:
        return True
    return bool(np.min(safety._raw_h_stack(states)) > min_clearance)


def beta_tilde(
    safety: SafetySpec,
    barrier: BarrierFunction,
    x,
    start_nodes: int = 16,
    max_nodes: int = 512,
    tol: float = 1e-8,
) -> np.ndarray:
    """Mean-value factorization rows: ``beta(x) - beta0 = beta_tilde(x) x``.

    Integrates ``B'(h(mu x)) * grad h(mu x)`` over ``mu in [0, 1]`` with
    Gauss-Legendre quadrature, doubling the node count until successive
    estimates agree to ``tol`` (relative above magnitude one).

    Returns
    -------
    (q, n) ndarray

    Raises
    ------
    SegmentUnsafe
        The chord from the origin to ``x`` exits the safe set (screened on a
        grid 10x denser than the starting rule, plus every node actually
        used); the factorization integral is undefined there.
    QuadratureNotConverged
        Node doubling hit ``max_nodes`` without settling.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    q = safety.q
    if q == 0:
        return np.zeros((0, n))

    if not chord_is_safe(safety, x, points=10 * start_nodes + 1):
        raise SegmentUnsafe(
            f"chord from origin to {np.array2string(x, precision=4)} exits the safe set"
        )

    prev = None
    k = start_nodes
    while k <= max_nodes:
        mus, weights = _gauss_legendre_01(k)
        states = mus[:, None] * x[None, :]
        h_nodes = safety.effective_h(states)  # (k, q)
        if np.min(safety._raw_h_stack(states)) <= 0.0:
            raise SegmentUnsafe("quadrature node lies outside the safe set")
        grads = safety.effective_grad(states)  # (k, q, n)
        integrand = barrier.B_prime(h_nodes)[..., None] * grads
        est = np.einsum("k,kqn->qn", weights, integrand)
        if prev is not None and np.linalg.norm(est - prev) <= tol * max(
            1.0, np.linalg.norm(est)
        ):
            return est
        prev = est
        k *= 2
    raise QuadratureNotConverged(
        f"estimate still moving after {max_nodes} Gauss-Legendre nodes"
    )


@dataclass(frozen=True)
class AugmentedSystem:
    """Safety-embedded extension of a plant with ``q`` barrier states.

    The augmented state is ``xbar = (x, z)`` and the coefficient matrices
    carry the block structure

        Abar = [[A(x), 0], [Az(x, z), -gamma I_q]],
        gbar = [[g(x)], [gz(x, z)]].

    Instances are immutable and safe to share across workers.
    """

    base: SdcSystem
    safety: SafetySpec
    barrier: BarrierFunction
    gamma: float
    beta0: np.ndarray  # (q,)
    q: int

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def m(self) -> int:
        return self.base.m

    @property
    def n_bar(self) -> int:
        return self.base.n + self.q

    def split(self, x_bar):
        x_bar = np.asarray(x_bar, dtype=float)
        return x_bar[: self.n], x_bar[self.n :]

    def join(self, x, z) -> np.ndarray:
        return np.concatenate([np.asarray(x, dtype=float), np.asarray(z, dtype=float)])

    def initial_state(self, x0) -> np.ndarray:
        """Augment ``x0`` with the exact-residual barrier state ``z = beta(x0) - beta0``."""
        x0 = np.asarray(x0, dtype=float)
        if self.q == 0:
            return x0.copy()
        return self.join(x0, barrier_value(self.safety, self.barrier, x0) - self.beta0)

    def matrices(self, x_bar):
        """``(Abar, gbar)`` at ``x_bar``, computing the shared barrier row once."""
        x, _ = self.split(x_bar)
        A = self.base.A_of_x(x)
        g = self.base.g_of_x(x)
        if self.q == 0:
            return A, g
        Az, gz = barrier_state_sdc(self, x_bar)
        A_bar = np.block(
            [[A, np.zeros((self.n, self.q))], [Az, -self.gamma * np.eye(self.q)]]
        )
        g_bar = np.vstack([g, gz])
        return A_bar, g_bar

    def A_bar(self, x_bar) -> np.ndarray:
        return self.matrices(x_bar)[0]

    def g_bar(self, x_bar) -> np.ndarray:
        return self.matrices(x_bar)[1]


def barrier_state_sdc(aug: AugmentedSystem, x_bar):
    """Coefficient rows ``(Az, gz)`` of the factorized barrier-state equation.

    ``Az = B'(B^{-1}(z + beta0)) dh/dx A(x) + gamma beta_tilde(x)`` and
    ``gz = B'(B^{-1}(z + beta0)) dh/dx g(x)``; together they satisfy
    ``Az x + gz u - gamma z == barrier_state_rhs(aug, xbar, u)`` up to
    quadrature tolerance, identically in ``u``.
    """
    x, z = aug.split(x_bar)
    coeff = np.atleast_1d(aug.barrier.B_prime_of_B_inverse(z + aug.beta0))  # (q,)
    dh = aug.safety.effective_grad(x)  # (q, n)
    bt = beta_tilde(aug.safety, aug.barrier, x)  # (q, n)
    Az = coeff[:, None] * (dh @ aug.base.A_of_x(x)) + aug.gamma * bt
    gz = coeff[:, None] * (dh @ aug.base.g_of_x(x))
    return Az, gz


def barrier_state_rhs(
    aug: AugmentedSystem, x_bar, u, floor: float | None = None, xdot=None
):
    """Exact nonlinear barrier-state dynamics ``zdot``; shape ``(q,)``.

    This is the ground-truth form the simulator integrates (no quadrature
    involved). ``floor`` clamps the raw margins before the barrier is
    evaluated; it is the integrator's overflow guard and is left ``None``
    for analysis use, where an unsafe state is an error. ``xdot`` lets the
    caller pass an already-computed plant derivative.

    Raises
    ------
    UnsafeState
        ``floor`` is ``None`` and the state is outside the safe set.
    """
    x, z = aug.split(x_bar)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if floor is None:
        beta = barrier_value(aug.safety, aug.barrier, x)
    else:
        beta = np.atleast_1d(
            aug.barrier.B(aug.safety.effective_h(x, floor=max(floor, 1e-300)))
        )
    coeff = np.atleast_1d(aug.barrier.B_prime_of_B_inverse(z + aug.beta0))
    if xdot is None:
        xdot = aug.base.rhs(x, u)
    lie = aug.safety.effective_grad(x) @ xdot  # (q,)
    return coeff * lie - aug.gamma * (z + aug.beta0 - beta)


def augment(
    base: SdcSystem,
    safety: SafetySpec,
    barrier: BarrierFunction,
    gamma: float = 1.0,
) -> AugmentedSystem:
    """Build the safety-embedded system for a plant and its constraints.

    Raises
    ------
    OriginUnsafe
        Some constraint has ``h_i(0) <= 0``; the equilibrium must be safe.
    ValueError
        ``gamma <= 0``.
    """
    if gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    origin = np.zeros(base.n)
    if safety.constraints and safety.min_margin(origin) <= 0.0:
        raise OriginUnsafe(
            f"origin violates a constraint: min h(0) = {safety.min_margin(origin):.6g}"
        )
    if safety.q:
        beta0 = np.atleast_1d(barrier.B(safety.effective_h(origin)))
    else:
        beta0 = np.zeros(0)
    return AugmentedSystem(
        base=base, safety=safety, barrier=barrier, gamma=float(gamma),
        beta0=beta0, q=safety.q,
    )
