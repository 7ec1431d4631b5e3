"""Safety-embedded nonlinear control via barrier states and point-wise Riccati synthesis.

The toolkit augments a control-affine plant with barrier states that encode
constraint proximity, rewrites the augmented model in state-dependent
coefficient form, and synthesizes feedback by solving an algebraic Riccati
equation at every visited state. A runtime certificate (positive
definiteness of the cost weight minus the Riccati-solution derivative)
monitors the validity of the resulting region of attraction.
"""

from .barriers import (
    AugmentedSystem,
    BarrierFunction,
    Constraint,
    SafetySpec,
    augment,
    barrier_state_rhs,
    barrier_state_sdc,
    barrier_value,
    beta_tilde,
    chord_is_safe,
    circle_obstacle,
    get_barrier,
    inverse_barrier,
    log_barrier,
)
from .certificates import (
    CertificateReport,
    RoaEstimate,
    check_condition,
    compute_p_dot,
    estimate_roa,
    matrix_flow_derivatives,
)
from .config import ScenarioConfig, builtin_scenario_path, load_config
from .controllers import (
    BasLqrController,
    BasSdreController,
    ControlResult,
    VanillaSdreController,
    bas_lqr_gain,
    bas_sdre_control,
    make_controller,
    vanilla_sdre_control,
)
from .exceptions import (
    ConfigError,
    EmptyTrajectory,
    IllConditioned,
    InvalidParams,
    MissingDirectDrift,
    NoStabilizingSolution,
    OriginUnsafe,
    QuadratureNotConverged,
    SafeSdreError,
    SegmentUnsafe,
    SingularOperator,
    StepOutOfDomain,
    UnsafeState,
)
from .riccati import (
    LyapunovSolution,
    RiccatiSolution,
    check_detectability,
    check_stabilizability,
    solve_care,
    solve_lyapunov,
)
from .simulation import (
    Metrics,
    ScenarioSummary,
    Trajectory,
    convergence_and_safety_metrics,
    read_trajectory_csv,
    rollout,
    run_scenario,
    write_trajectory_csv,
)
from .systems import (
    CostSpec,
    SdcSystem,
    linear_2d_benchmark,
    make_benchmark,
    planar_quadrotor_benchmark,
    validate_factorization,
)

__version__ = "0.1.0"
