"""Ground-truth small-signal models of AC grids with converter stations,
ambient stochastic simulation, and recovery of the closed-loop state matrix
and its electromechanical modes from measured angle/speed records."""

from .errors import (
    AlgebraicEliminationError,
    AmbientModesError,
    BranchCutError,
    ConditioningError,
    DegenerateModesError,
    EquilibriumError,
    KronReductionError,
    NetworkSolveError,
    NonstationaryWarning,
    SimulationError,
    StabilityError,
)
from .estimate import (
    EstimateResult,
    EstimatorConfig,
    SampleStats,
    compute_stats,
    estimate_from_trajectory,
    estimate_state_matrix,
    sample_covariance,
    sample_lag_correlation,
    to_relative,
)
from .fixtures import (
    FIXTURE_NAMES,
    ExperimentReport,
    FixtureSystem,
    build_fixture,
    run_case,
    select_damping_feedback,
)
from .linearize import (
    FULL,
    REFERENCE_REDUCED,
    StateSpace,
    closed_loop_matrix,
    is_hurwitz,
    linearize,
    open_loop_matrices,
    reduce_reference,
)
from .modal import (
    Mode,
    ModeMatch,
    ModeSet,
    eigen_modes,
    match_modes,
    participation_factors,
    shape_compare,
)
from .network import (
    JacobianBlocks,
    MachineSet,
    OperatingPoint,
    ReducedAdmittance,
    SystemModel,
    VscSet,
    admittance_matrix,
    injections,
    jacobian_blocks,
    kron_reduce,
    power_jacobian,
    reduce_algebraic,
    solve_equilibrium,
    solve_network,
)
from .simulate import (
    NoiseSpec,
    SimConfig,
    Trajectory,
    add_measurement_noise,
    analytic_lag_correlation,
    lyapunov_covariance,
    simulate_linear_ou,
    simulate_nonlinear,
)

__version__ = "0.1.0"
