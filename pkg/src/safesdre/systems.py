"""Control-affine plants in state-dependent coefficient (SDC) form.

An SDC model rewrites the drift of ``xdot = f(x) + g(x) u`` as
``f(x) = A(x) x``, so point-wise linear machinery (Riccati synthesis, PBH
tests) applies to a nonlinear plant. The factorization is never unique; the
ones shipped here are smooth on the declared operating box and keep
``(A(x), g(x))`` point-wise stabilizable there.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import InvalidParams, MissingDirectDrift

__all__ = [
    "SdcSystem",
    "CostSpec",
    "FactorizationReport",
    "validate_factorization",
    "linear_2d_benchmark",
    "planar_quadrotor_benchmark",
    "BENCHMARKS",
    "make_benchmark",
    "sin_over",
    "cosm1_over",
]

# Below this angle the trig ratios switch to Taylor polynomials; the
# crossover error is ~1e-12, far under the factorization tolerance.
_TRIG_GUARD = 1e-4


def sin_over(psi: float) -> float:
    """``sin(psi)/psi`` with a Taylor guard at the removable singularity."""
    if abs(psi) < _TRIG_GUARD:
        p2 = psi * psi
        return 1.0 - p2 / 6.0 + p2 * p2 / 120.0
    return np.sin(psi) / psi


def cosm1_over(psi: float) -> float:
    """``(cos(psi) - 1)/psi`` with a Taylor guard at the removable singularity."""
    if abs(psi) < _TRIG_GUARD:
        p2 = psi * psi
        return -psi / 2.0 + psi * p2 / 24.0 - psi * p2 * p2 / 720.0
    return (np.cos(psi) - 1.0) / psi


@dataclass(frozen=True)
class SdcSystem:
    """A plant in factorized form ``xdot = A(x) x + g(x) u``.

    ``f_of_x`` is the direct drift when one is available; it is used only to
    cross-check that ``A(x) x`` reproduces it, never inside synthesis.
    ``domain`` is the operating box (low, high) on which the coefficient
    functions are declared finite and stabilizable.
    """

    name: str
    n: int
    m: int
    A_of_x: Callable[[np.ndarray], np.ndarray]
    g_of_x: Callable[[np.ndarray], np.ndarray]
    f_of_x: Optional[Callable[[np.ndarray], np.ndarray]] = None
    domain: Optional[tuple] = None
    input_offset: np.ndarray = None  # physical input = offset + commanded input
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.input_offset is None:
            object.__setattr__(self, "input_offset", np.zeros(self.m))

    def drift(self, x: np.ndarray) -> np.ndarray:
        """Direct drift if declared, otherwise the factorized ``A(x) x``."""
        if self.f_of_x is not None:
            return self.f_of_x(x)
        return self.A_of_x(x) @ x

    def rhs(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.drift(x) + self.g_of_x(x) @ u


@dataclass(frozen=True)
class CostSpec:
    """State and input cost weights, possibly state dependent.

    ``Q_of_x`` maps the (augmented) state to a symmetric PSD matrix and
    ``R_of_x`` to a symmetric PD matrix. Constant weights are the common
    case; use :meth:`constant`.
    """

    Q_of_x: Callable[[np.ndarray], np.ndarray]
    R_of_x: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def constant(cls, Q: np.ndarray, R: np.ndarray) -> "CostSpec":
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        R = np.atleast_2d(np.asarray(R, dtype=float))
        if np.min(np.linalg.eigvalsh(0.5 * (Q + Q.T))) < 0:
            raise InvalidParams("Q must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(0.5 * (R + R.T))) <= 0:
            raise InvalidParams("R must be positive definite")
        return cls(Q_of_x=lambda x: Q, R_of_x=lambda x: R)


@dataclass
class FactorizationReport:
    max_rel_error: float
    worst_state: np.ndarray
    samples: int
    passed: bool
    tolerance: float


def validate_factorization(
    sys: SdcSystem,
    samples,
    tolerance: float = 1e-8,
) -> FactorizationReport:
    """Check ``A(x) x == f(x)`` against the direct drift on sampled states.

    Raises
    ------
    MissingDirectDrift
        The system declares no ``f_of_x`` to compare against.
    """
    if sys.f_of_x is None:
        raise MissingDirectDrift(f"{sys.name}: no direct drift declared")
    worst = 0.0
    worst_x = None
    count = 0
    for x in samples:
        x = np.asarray(x, dtype=float)
        f = sys.f_of_x(x)
        err = np.linalg.norm(sys.A_of_x(x) @ x - f) / max(1.0, np.linalg.norm(f))
        if err > worst:
            worst, worst_x = err, x
        count += 1
    return FactorizationReport(
        max_rel_error=float(worst),
        worst_state=worst_x,
        samples=count,
        passed=bool(worst <= tolerance),
        tolerance=tolerance,
    )


def linear_2d_benchmark() -> SdcSystem:
    """Unstable constant-coefficient 2-state plant with a single scalar input.

    ``A = [[1, -5], [0, -1]]``, ``g = [0, 1]'``; eigenvalues {1, -1}, so the
    open loop is unstable and any useful feedback must act through x2.
    """
    A = np.array([[1.0, -5.0], [0.0, -1.0]])
    g = np.array([[0.0], [1.0]])
    return SdcSystem(
        name="linear2d",
        n=2,
        m=1,
        A_of_x=lambda x: A,
        g_of_x=lambda x: g,
        f_of_x=lambda x: A @ x,
        domain=(np.full(2, -10.0), np.full(2, 10.0)),
    )


def planar_quadrotor_benchmark(
    mass: float = 1.0,
    arm_length: float = 0.3,
    gravity: float = 9.81,
    inertia: Optional[float] = None,
) -> SdcSystem:
    """Planar quadrotor, hover-shifted so the origin is an equilibrium.

    State is ``(x, y, psi, vx, vy, omega)`` and the commanded input ``v`` is
    the deviation from the hover thrusts ``u_eq = [m g / 2, m g / 2]``:

        vx' = g sin(psi) + (v1 + v2) sin(psi) / m
        vy' = g (cos(psi) - 1) + (v1 + v2) cos(psi) / m
        omega' = l (v2 - v1) / (2 J)

    The trig terms are factorized onto the angle column through
    ``sin(psi)/psi`` and ``(cos(psi)-1)/psi``, which stay smooth through
    ``psi = 0``. Inertia defaults to ``0.2 m l^2``.

    Raises
    ------
    InvalidParams
        Any non-positive physical constant.
    """
    if inertia is None:
        inertia = 0.2 * mass * arm_length**2
    if min(mass, arm_length, gravity, inertia) <= 0.0:
        raise InvalidParams(
            f"non-positive parameter in m={mass}, l={arm_length}, "
            f"g={gravity}, J={inertia}"
        )
    m, l, g, J = float(mass), float(arm_length), float(gravity), float(inertia)
    torque = l / (2.0 * J)

    def A_of_x(x):
        psi = x[2]
        A = np.zeros((6, 6))
        A[0, 3] = 1.0
        A[1, 4] = 1.0
        A[2, 5] = 1.0
        A[3, 2] = g * sin_over(psi)
        A[4, 2] = g * cosm1_over(psi)
        return A

    def g_of_x(x):
        psi = x[2]
        s, c = np.sin(psi), np.cos(psi)
        return np.array(
            [
                [0.0, 0.0],
                [0.0, 0.0],
                [0.0, 0.0],
                [s / m, s / m],
                [c / m, c / m],
                [-torque, torque],
            ]
        )

    def f_of_x(x):
        psi = x[2]
        return np.array(
            [x[3], x[4], x[5], g * np.sin(psi), g * (np.cos(psi) - 1.0), 0.0]
        )

    box = np.array([5.0, 5.0, 2.8, 8.0, 8.0, 8.0])
    return SdcSystem(
        name="planar_quadrotor",
        n=6,
        m=2,
        A_of_x=A_of_x,
        g_of_x=g_of_x,
        f_of_x=f_of_x,
        domain=(-box, box),
        input_offset=np.array([m * g / 2.0, m * g / 2.0]),
        meta={"mass": m, "arm_length": l, "gravity": g, "inertia": J},
    )


BENCHMARKS = {
    "linear2d": linear_2d_benchmark,
    "planar_quadrotor": planar_quadrotor_benchmark,
}


def make_benchmark(benchmark_id: str, **params) -> SdcSystem:
    """Instantiate a shipped benchmark by id, forwarding parameter overrides."""
    try:
        factory = BENCHMARKS[benchmark_id]
    except KeyError:
        raise InvalidParams(
            f"unknown benchmark {benchmark_id!r}; available: {sorted(BENCHMARKS)}"
        ) from None
    return factory(**params)
