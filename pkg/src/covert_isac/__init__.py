"""Covert-communication analysis and robust beampattern design toolkit.

Closed-form detection-error probabilities for an adaptive-threshold warden
under bounded, Gaussian, statistical, and instantaneous channel-knowledge
models, plus the feasibility-checked rank-one refinement loop that designs
covert dual-functional transmit covariances against them.
"""

from .scenario import (
    BoundedWcsi,
    ChannelSet,
    ConfigError,
    GaussianWcsi,
    InstantaneousWcsi,
    PathLossParams,
    StatisticalWcsi,
    SystemConfig,
    dbm_to_watts,
    generate_channels,
    load_config,
    path_loss,
    validate_config,
)
from .beampattern import (
    CovariancePair,
    SteeringGrid,
    beampattern_gain,
    cross_correlation,
    make_grid,
    mse,
    objective,
    optimal_eta,
    steering_vector,
)
from .optimizer import (
    DesignSolution,
    InfeasibleError,
    SolverFailure,
    algorithm1,
    benchmark_solve,
    build_program,
    feasibility_check,
    max_covert_rate,
    rank_one_extract,
    solve_conic,
)

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
