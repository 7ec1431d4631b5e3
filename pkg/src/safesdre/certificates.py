"""Runtime verification of the closed-loop stability certificate.

For a point-wise Riccati feedback with value matrix ``P(xbar)`` the scalar
``W = xbar' P(xbar) xbar`` is a Lyapunov candidate whose derivative along
the closed loop is

    Wdot = xbar' (-(Q - Pdot) - P Gbar P) xbar <= -xbar' (Q - Pdot) xbar,

so ``Q(xbar) - Pdot(xbar) > 0`` (positive definite) certifies decrease.
``Pdot`` itself solves the Lyapunov equation

    Pdot Ac + Ac' Pdot + Qtilde = 0,
    Qtilde = P Adot + Adot' P - P Gdot P + Qdot,

where the dotted matrices are entry-wise directional derivatives along the
closed-loop flow ``v = Ac xbar``. Everything here evaluates those objects
numerically at single states; the region-of-attraction estimate is a
sampling scan over level sets ``{W <= c}``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .barriers import AugmentedSystem, chord_is_safe
from .exceptions import (
    IllConditioned,
    QuadratureNotConverged,
    SafeSdreError,
    SegmentUnsafe,
    StepOutOfDomain,
    UnsafeState,
)
from .riccati import solve_care, solve_lyapunov
from .systems import CostSpec

__all__ = [
    "CertificateReport",
    "RoaEstimate",
    "matrix_flow_derivatives",
    "compute_p_dot",
    "check_condition",
    "estimate_roa",
]

logger = logging.getLogger("safesdre.certificates")

# Directional finite-difference step is h_fd scaled along the unit flow.
_FD_BASE = 1e-6
_FD_SHRINKS = 4


@dataclass
class CertificateReport:
    """Certificate evaluation at one augmented state."""

    P: np.ndarray
    P_dot: np.ndarray
    min_eig_Q_hat: float
    W: float
    W_dot: float
    condition_holds: bool


@dataclass
class RoaEstimate:
    """Outcome of the sampled level-set certification scan."""

    c_certified: float
    status: str  # "ok" | "none_certified" | "insufficient_samples"
    samples_drawn: int
    samples_evaluated: int
    levels: list = field(default_factory=list)  # (c, samples_in_level, passed)


def _G_of(aug: AugmentedSystem, cost: CostSpec, x_bar, g_bar=None):
    if g_bar is None:
        g_bar = aug.matrices(x_bar)[1]
    R = np.atleast_2d(cost.R_of_x(x_bar))
    return g_bar @ np.linalg.solve(R, g_bar.T)


def matrix_flow_derivatives(
    aug: AugmentedSystem,
    cost: CostSpec,
    x_bar,
    P: np.ndarray,
    A_c: np.ndarray,
    A_jac=None,
    G_jac=None,
    Q_jac=None,
):
    """Directional derivatives of ``(Abar, Gbar, Q)`` along the closed loop.

    Each entry's derivative is ``dM_ij/dxbar . v`` with ``v = Ac xbar``. By
    default they come from one central difference per matrix with step
    ``max(1e-6, 1e-6 ||xbar||)`` along ``v``; a model can instead supply
    entry Jacobians (``fn(xbar) -> (nbar, nbar, nbar)`` with axes
    ``[i, j, d/dxbar_k]``), which are contracted with ``v`` exactly.

    Returns
    -------
    (A_dot, G_dot, Q_dot) : three ``(nbar, nbar)`` ndarrays

    Raises
    ------
    StepOutOfDomain
        The finite-difference probes kept leaving the safe set (or its
        chord-safe subset) after 4 step shrinks.
    """
    x_bar = np.asarray(x_bar, dtype=float)
    v = A_c @ x_bar
    speed = float(np.linalg.norm(v))
    nb = x_bar.size
    if speed == 0.0:
        zero = np.zeros((nb, nb))
        return zero, zero.copy(), zero.copy()

    def eval_all(xb):
        A, g = aug.matrices(xb)
        return A, _G_of(aug, cost, xb, g_bar=g), np.atleast_2d(cost.Q_of_x(xb))

    if A_jac is not None or G_jac is not None or Q_jac is not None:
        A0, G0, Q0 = eval_all(x_bar)
        A_dot = np.tensordot(A_jac(x_bar), v, axes=([2], [0])) if A_jac else None
        G_dot = np.tensordot(G_jac(x_bar), v, axes=([2], [0])) if G_jac else None
        Q_dot = np.tensordot(Q_jac(x_bar), v, axes=([2], [0])) if Q_jac else None
        fd = None
        if A_dot is None or G_dot is None or Q_dot is None:
            fd = matrix_flow_derivatives(aug, cost, x_bar, P, A_c)
        return (
            A_dot if A_dot is not None else fd[0],
            G_dot if G_dot is not None else fd[1],
            Q_dot if Q_dot is not None else fd[2],
        )

    h_fd = max(_FD_BASE, _FD_BASE * float(np.linalg.norm(x_bar)))
    delta = h_fd / speed
    for _ in range(_FD_SHRINKS + 1):
        try:
            Ap, Gp, Qp = eval_all(x_bar + delta * v)
            Am, Gm, Qm = eval_all(x_bar - delta * v)
        except (UnsafeState, SegmentUnsafe, QuadratureNotConverged):
            delta /= 10.0
            continue
        return (
            (Ap - Am) / (2.0 * delta),
            (Gp - Gm) / (2.0 * delta),
            (Qp - Qm) / (2.0 * delta),
        )
    raise StepOutOfDomain(
        f"finite-difference probe exits domain at ||xbar||={np.linalg.norm(x_bar):.4g}"
    )


def compute_p_dot(
    aug: AugmentedSystem,
    cost: CostSpec,
    x_bar,
    P: Optional[np.ndarray] = None,
    A_c: Optional[np.ndarray] = None,
    check_care: bool = True,
):
    """Derivative of the point-wise Riccati solution along the closed loop.

    Assembles ``Qtilde`` from the flow derivatives and solves the Lyapunov
    equation with both backends; they must agree or the state is flagged as
    ill conditioned. Returns the symmetrized Kronecker-backend solution.
    """
    x_bar = np.asarray(x_bar, dtype=float)
    if P is None or A_c is None:
        A_bar, g_bar = aug.matrices(x_bar)
        G = _G_of(aug, cost, x_bar, g_bar=g_bar)
        sol = solve_care(A_bar, G, np.atleast_2d(cost.Q_of_x(x_bar)), check=check_care)
        P = sol.P
        A_c = A_bar - G @ P

    v = A_c @ x_bar
    if np.linalg.norm(v) == 0.0:
        return np.zeros_like(P)

    A_dot, G_dot, Q_dot = matrix_flow_derivatives(aug, cost, x_bar, P, A_c)
    Q_tilde = P @ A_dot + A_dot.T @ P - P @ G_dot @ P + Q_dot

    ref = solve_lyapunov(A_c, Q_tilde, method="kron").X
    alt = solve_lyapunov(A_c, Q_tilde, method="bartels_stewart").X
    gap = np.linalg.norm(ref - alt, "fro") / max(1.0, np.linalg.norm(ref, "fro"))
    if gap > 1e-6:
        raise IllConditioned(f"Lyapunov backends disagree by {gap:.3e}")
    return 0.5 * (ref + ref.T)


def check_condition(
    aug: AugmentedSystem,
    cost: CostSpec,
    x_bar,
    check_care: bool = True,
) -> CertificateReport:
    """Evaluate the decrease certificate ``Q - Pdot > 0`` at one state."""
    x_bar = np.asarray(x_bar, dtype=float)
    A_bar, g_bar = aug.matrices(x_bar)
    G = _G_of(aug, cost, x_bar, g_bar=g_bar)
    Q = np.atleast_2d(cost.Q_of_x(x_bar))
    sol = solve_care(A_bar, G, Q, check=check_care)
    P = sol.P
    A_c = A_bar - G @ P

    P_dot = compute_p_dot(aug, cost, x_bar, P=P, A_c=A_c)
    Q_hat = Q - P_dot
    asym = np.linalg.norm(Q_hat - Q_hat.T, "fro")
    if asym > 1e-8:
        logger.warning("Q - Pdot asymmetry %.3e at ||xbar||=%.4g",
                       asym, np.linalg.norm(x_bar))
    Q_hat = 0.5 * (Q_hat + Q_hat.T)
    min_eig = float(np.linalg.eigvalsh(Q_hat)[0])

    W = float(x_bar @ P @ x_bar)
    W_dot = float(x_bar @ (-Q_hat - P @ G @ P) @ x_bar)
    return CertificateReport(
        P=P,
        P_dot=P_dot,
        min_eig_Q_hat=min_eig,
        W=W,
        W_dot=W_dot,
        condition_holds=bool(min_eig > 0.0),
    )


def estimate_roa(
    aug: AugmentedSystem,
    cost: CostSpec,
    c_grid,
    sample_budget: int,
    box=None,
    seed: int = 0,
) -> RoaEstimate:
    """Empirically certify level sets ``{xbar : W(xbar) <= c}`` by sampling.

    Plant states are drawn uniformly from ``box`` (default: the system's
    declared operating domain), lifted to augmented states with exact
    barrier-state residual, and scored with :func:`check_condition`. A grid
    value ``c`` is certified when at least one sample landed in its level
    set and every such sample satisfied the condition. This is an inner,
    sample-based read of the certificate, not a proof.
    """
    c_grid = sorted(float(c) for c in c_grid)
    if box is None:
        if aug.base.domain is None:
            raise ValueError("no sampling box: system declares no domain")
        box = aug.base.domain
    low, high = (np.asarray(b, dtype=float) for b in box)

    rng = np.random.default_rng(seed)
    scores = []  # (W, condition_holds)
    drawn = 0
    for _ in range(int(sample_budget)):
        x = rng.uniform(low, high)
        drawn += 1
        if not aug.safety.is_safe(x) or not chord_is_safe(aug.safety, x):
            continue
        try:
            report = check_condition(aug, cost, aug.initial_state(x))
            scores.append((report.W, report.condition_holds))
        except SafeSdreError:
            scores.append((np.inf, False))

    if not scores:
        return RoaEstimate(
            c_certified=0.0,
            status="insufficient_samples",
            samples_drawn=drawn,
            samples_evaluated=0,
        )

    W_vals = np.array([s[0] for s in scores])
    holds = np.array([s[1] for s in scores])
    levels = []
    c_best = 0.0
    any_passed = False
    for c in c_grid:
        mask = W_vals <= c
        passed = bool(mask.any() and holds[mask].all())
        levels.append((c, int(mask.sum()), passed))
        if passed:
            any_passed = True
            c_best = max(c_best, c)
    return RoaEstimate(
        c_certified=c_best,
        status="ok" if any_passed else "none_certified",
        samples_drawn=drawn,
        samples_evaluated=len(scores),
        levels=levels,
    )
