"""Point-wise Riccati feedback laws and the linear baseline.

Three controllers share the interface ``controller(x_bar) -> ControlResult``:

* ``bas_sdre``  - safety-embedded SDRE: one CARE solve on the augmented
  coefficient matrices at every evaluated state.
* ``vanilla_sdre`` - SDRE on the raw plant, blind to constraints and to the
  barrier states.
* ``bas_lqr``   - a single CARE solve on the augmented matrices frozen at
  the origin; the resulting gain is applied everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .barriers import AugmentedSystem
from .exceptions import UnsafeState
from .riccati import RiccatiSolution, solve_care
from .systems import CostSpec, SdcSystem

__all__ = [
    "ControlResult",
    "bas_sdre_control",
    "vanilla_sdre_control",
    "bas_lqr_gain",
    "BasSdreController",
    "VanillaSdreController",
    "BasLqrController",
    "make_controller",
    "CONTROLLER_KINDS",
]


@dataclass
class ControlResult:
    """One control evaluation: input, gain over the augmented state, diagnostics."""

    u: np.ndarray  # (m,)
    gain: np.ndarray  # (m, n_bar), u = -gain @ x_bar
    riccati: Optional[RiccatiSolution]


def _sdre_gain(A, g, Q, R, check: bool):
    R = np.atleast_2d(R)
    Rinv = np.linalg.inv(R)
    G = g @ Rinv @ g.T
    sol = solve_care(A, G, Q, check=check)
    K = Rinv @ g.T @ sol.P
    return K, sol


def bas_sdre_control(
    aug: AugmentedSystem,
    cost: CostSpec,
    x_bar,
    check: bool = True,
):
    """Safety-embedded SDRE control ``u = -R^{-1} gbar' P(xbar) xbar``.

    Returns ``(u, riccati_solution, K)`` where ``K`` is the point-wise gain
    ``R^{-1} gbar' P`` and the diagnostics carry the closed-loop spectrum of
    ``Abar - gbar K``.

    Raises
    ------
    UnsafeState
        The plant part of ``x_bar`` is outside the safe set.
    NoStabilizingSolution, IllConditioned
        Propagated from the point-wise CARE solve.
    """
    x_bar = np.asarray(x_bar, dtype=float)
    x, _ = aug.split(x_bar)
    if not aug.safety.is_safe(x):
        raise UnsafeState(f"min h = {aug.safety.min_margin(x):.6g}")
    A_bar, g_bar = aug.matrices(x_bar)
    K, sol = _sdre_gain(A_bar, g_bar, cost.Q_of_x(x_bar), cost.R_of_x(x_bar), check)
    return -K @ x_bar, sol, K


def vanilla_sdre_control(sys: SdcSystem, cost: CostSpec, x, check: bool = True):
    """SDRE on the raw plant; the cost here is over the ``n`` plant states."""
    x = np.asarray(x, dtype=float)
    K, sol = _sdre_gain(sys.A_of_x(x), sys.g_of_x(x), cost.Q_of_x(x), cost.R_of_x(x), check)
    return -K @ x, sol, K


def bas_lqr_gain(aug: AugmentedSystem, cost: CostSpec):
    """Fixed gain from one CARE solve on the augmented model at the origin.

    Note the origin's input row still feels the constraints: ``gbar(0)``
    contains ``gz(0)``, which scales with ``B' o B^{-1}(beta0)``.
    """
    origin = np.zeros(aug.n_bar)
    A0, g0 = aug.matrices(origin)
    K0, sol = _sdre_gain(A0, g0, cost.Q_of_x(origin), cost.R_of_x(origin), check=True)
    return K0, sol


class BasSdreController:
    kind = "bas_sdre"

    def __init__(self, aug: AugmentedSystem, cost: CostSpec, check_care: bool = True):
        self.aug = aug
        self.cost = cost
        self.check_care = check_care

    def __call__(self, x_bar) -> ControlResult:
        u, sol, K = bas_sdre_control(self.aug, self.cost, x_bar, check=self.check_care)
        return ControlResult(u=u, gain=K, riccati=sol)


class VanillaSdreController:
    """Ignores constraints: synthesizes on the raw plant, zero gain on ``z``."""

    kind = "vanilla_sdre"

    def __init__(self, aug: AugmentedSystem, plant_cost: CostSpec, check_care: bool = True):
        self.aug = aug
        self.plant_cost = plant_cost
        self.check_care = check_care

    def __call__(self, x_bar) -> ControlResult:
        x, _ = self.aug.split(x_bar)
        u, sol, K = vanilla_sdre_control(
            self.aug.base, self.plant_cost, x, check=self.check_care
        )
        K_full = np.hstack([K, np.zeros((self.aug.m, self.aug.q))])
        return ControlResult(u=u, gain=K_full, riccati=sol)


class BasLqrController:
    """Applies the origin-frozen augmented gain everywhere."""

    kind = "bas_lqr"

    def __init__(self, aug: AugmentedSystem, cost: CostSpec):
        self.aug = aug
        self.fixed_gain, self.origin_solution = bas_lqr_gain(aug, cost)

    def __call__(self, x_bar) -> ControlResult:
        x_bar = np.asarray(x_bar, dtype=float)
        return ControlResult(
            u=-self.fixed_gain @ x_bar, gain=self.fixed_gain, riccati=None
        )


CONTROLLER_KINDS = ("bas_sdre", "vanilla_sdre", "bas_lqr")


def make_controller(
    kind: str,
    aug: AugmentedSystem,
    cost: CostSpec,
    plant_cost: CostSpec,
    check_care: bool = True,
):
    """Controller factory used by the simulation harness."""
    if kind == "bas_sdre":
        return BasSdreController(aug, cost, check_care=check_care)
    if kind == "vanilla_sdre":
        return VanillaSdreController(aug, plant_cost, check_care=check_care)
    if kind == "bas_lqr":
        return BasLqrController(aug, cost)
    raise ValueError(f"unknown controller kind {kind!r}; available: {CONTROLLER_KINDS}")
