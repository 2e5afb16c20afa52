"""Shape sensing for magnetic ball chains via an external Hall-sensor array.

A ball chain bends with (locally) constant curvature, so its shape is two
numbers: a bend vector gamma = psi * (-sin phi, cos phi). This package
simulates the sensor array response, inverts it with a weighted
Levenberg-Marquardt solver plus gain scheduling, and ships the
observability and noise-sensitivity studies as a batch CLI.
"""

__version__ = "0.1.0"

from .geometry import (
    BendConfig,
    ChainSpec,
    ChainState,
    FramePose,
    angles_from_bend,
    bend_from_angles,
    bend_rotation,
    bend_twist_matrix,
    chain_state,
    tip_position,
    tip_positions_batch,
    wrap_angle,
)
from .field import (
    MU0,
    N42_REMANENCE,
    CoincidentGeometryError,
    SceneSpec,
    SensorSpec,
    dipole_field,
    forward_measurement,
    forward_measurement_batch,
    measurement_jacobian,
    sphere_dipole_moment,
)
from .scenes import (
    PRESET_SCENES,
    canonical_angle_grid,
    config_i_scene,
    config_ii_scene,
    default_chain,
    replay_grid_degrees,
    sensitivity_grid_degrees,
    sensor_array,
)
from .estimator import (
    EstimateResult,
    GainTable,
    SolverStatus,
    assign_manifold,
    calibrate_gains,
    estimate_batch,
    estimate_shape,
    multistart_inits,
    solve_weighted,
    solver_settings,
)
from .analysis import (
    ObservabilityMap,
    ReplayResult,
    SensitivityReport,
    WorkspaceGrid,
    observability_map,
    replay_experiment,
    sensitivity_sweep,
)
from .config import ConfigError, RunConfig, load_run_config, parse_run_config
