"""Figure rendering for safesdre trajectory CSV logs.

Reads only the documented v1 CSV schema and scenario YAML obstacle lists;
never recomputes dynamics.
"""

from .figures import (
    KINDS,
    plot_gains,
    plot_phase,
    plot_quadrotor_course,
    plot_timeseries,
    render,
)
from .schema import (
    MissingColumns,
    Obstacle,
    PlotSpec,
    SchemaMismatch,
    TrajectoryLog,
    obstacles_from_scenario,
    read_trajectory,
)

__version__ = "0.1.0"
