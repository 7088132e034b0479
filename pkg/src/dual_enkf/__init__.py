"""Simulation-based LQ optimal control via a backward ensemble Kalman filter.

The offline solver propagates an interacting particle ensemble backward in
time so its covariance tracks the inverse Riccati flow; gains are read off
the inverted sample covariance or recovered online from Hamiltonian
queries.  Riccati integrators provide ground truth and zeroth-order policy
gradient descent provides the comparison baseline.
"""

__version__ = "0.1.0"

from .baselines import PGConfig, PGTrace, lqr_cost, policy_gradient_descent, zeroth_order_gradient
from .bench import (
    MetricReport,
    cart_pole,
    gain_value_errors,
    mass_spring_damper,
    pole_report,
    random_canonical,
    relative_mse,
)
from .enkf import (
    Ensemble,
    EnsembleStats,
    NoiseStream,
    OfflineResult,
    ensemble_stats,
    init_terminal_ensemble,
    run_offline,
    step_backward_linear,
    step_backward_nonlinear,
)
from .model import (
    ExperimentConfig,
    LinearQuadraticProblem,
    NonlinearControlProblem,
    TimeGrid,
    linear_as_oracle,
    problem_from_json,
    problem_to_json,
    validate_lq,
)
from .policy import (
    PolicyArtifact,
    Trajectory,
    explicit_gain_policy,
    gain_from_ensemble,
    gain_from_particles,
    hamiltonian,
    online_control,
    oracle_query_policy,
    simulate_closed_loop,
)
from .riccati import (
    GainSchedule,
    RiccatiSchedule,
    are_residual,
    optimal_gain,
    solve_are,
    solve_dre,
    solve_inverse_dre,
)
