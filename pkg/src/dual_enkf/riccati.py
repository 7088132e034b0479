"""Reference Riccati solutions: backward DRE, inverse DRE, and the ARE limit.

These are the ground truth every particle-based estimate is measured
against, so the integrator is classical RK4 with symmetrization after each
step; its discretization error is negligible next to the particle error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, StepSizeTooLarge
from .model import LinearQuadraticProblem, TimeGrid, validate_lq

ARE_INTERNAL_DT = 0.005
ARE_CHUNK = 1.0  # horizon extension per convergence check, in time units


@dataclass(frozen=True)
class RiccatiSchedule:
    """Time-indexed d x d matrices on a grid; index k corresponds to t = k*dt.

    Also used for the inverse flow S_t = P_t^{-1}, which satisfies the same
    invariants (symmetric positive definite at every step).
    """

    grid: TimeGrid
    P: np.ndarray  # shape (num_steps + 1, d, d)

    def __post_init__(self):
        self.P.setflags(write=False)


@dataclass(frozen=True)
class GainSchedule:
    grid: TimeGrid
    K: np.ndarray  # shape (len, m, d)

    def __post_init__(self):
        self.K.setflags(write=False)


def _rk4_step(M, h, deriv):
    k1 = deriv(M)
    k2 = deriv(M + (0.5 * h) * k1)
    k3 = deriv(M + (0.5 * h) * k2)
    k4 = deriv(M + h * k3)
    return M + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _symmetrize(M):
    return 0.5 * (M + M.T)


def _chol_ok(M) -> bool:
    try:
        np.linalg.cholesky(M)
        return True
    except np.linalg.LinAlgError:
        return False


def _spd_inverse(M: np.ndarray) -> np.ndarray:
    # cho_solve-equivalent via LAPACK; symmetrized to kill rounding skew
    return _symmetrize(np.linalg.inv(M))


def _dre_tau_derivative(problem: LinearQuadraticProblem):
    """dP/dtau for tau = T - t: A'P + PA + C'C - P B R^{-1} B' P."""
    A = problem.A
    AT = A.T
    Q = problem.C.T @ problem.C
    BRB = problem.B @ np.linalg.solve(problem.R, problem.B.T)

    def deriv(P):
        return AT @ P + P @ A + Q - P @ BRB @ P

    return deriv


def _inverse_dre_tau_derivative(problem: LinearQuadraticProblem):
    """dS/dtau for tau = T - t: -(AS + SA' - B R^{-1} B' + S C'C S)."""
    A = problem.A
    AT = A.T
    Q = problem.C.T @ problem.C
    BRB = problem.B @ np.linalg.solve(problem.R, problem.B.T)

    def deriv(S):
        return -(A @ S + S @ AT - BRB + S @ Q @ S)

    return deriv


def _integrate_backward(terminal, grid: TimeGrid, deriv, what: str) -> np.ndarray:
    d = terminal.shape[0]
    out = np.empty((grid.num_steps + 1, d, d))
    M = _symmetrize(np.array(terminal, dtype=float))
    out[grid.num_steps] = M
    for k in range(grid.num_steps - 1, -1, -1):
        M = _symmetrize(_rk4_step(M, grid.dt, deriv))
        if not _chol_ok(M):
            raise StepSizeTooLarge(
                f"{what} lost positive definiteness at step {k}; reduce dt"
            )
        out[k] = M
    return out


def solve_dre(problem: LinearQuadraticProblem, grid: TimeGrid) -> RiccatiSchedule:
    """Integrate the backward DRE from P_T down to t = 0 with RK4."""
    validate_lq(problem)
    P = _integrate_backward(problem.P_T, grid, _dre_tau_derivative(problem), "DRE")
    return RiccatiSchedule(grid=grid, P=P)


def solve_inverse_dre(problem: LinearQuadraticProblem, grid: TimeGrid) -> RiccatiSchedule:
    """Integrate the backward flow of S_t = P_t^{-1} from S_T = P_T^{-1}."""
    validate_lq(problem)
    S_T = _spd_inverse(problem.P_T)
    S = _integrate_backward(S_T, grid, _inverse_dre_tau_derivative(problem), "inverse DRE")
    return RiccatiSchedule(grid=grid, P=S)


def are_residual(problem: LinearQuadraticProblem, P: np.ndarray) -> float:
    """Relative ARE residual ||A'P + PA + C'C - P B R^-1 B' P||_F / ||C'C||_F."""
    Q = problem.C.T @ problem.C
    BRB = problem.B @ np.linalg.solve(problem.R, problem.B.T)
    res = problem.A.T @ P + P @ problem.A + Q - P @ BRB @ P
    return float(np.linalg.norm(res, "fro") / np.linalg.norm(Q, "fro"))


def solve_are(
    problem: LinearQuadraticProblem,
    are_tol: float = 1e-6,
    max_horizon: float | None = None,
) -> np.ndarray:
    """Stationary Riccati solution as the long-horizon limit of the DRE.

    The DRE is integrated backward (seeded at P_T) over successively longer
    horizons until the relative Frobenius change per unit time drops below
    are_tol.  Controllability + observability guarantee the limit exists and
    is the unique positive definite ARE solution.
    """
    validate_lq(problem)
    d = problem.state_dim
    if max_horizon is None:
        max_horizon = max(40.0, 10.0 * d)
    deriv = _dre_tau_derivative(problem)

    # Integrate until BOTH the change-per-unit-time and the residual bound
    # hold; a slowly drifting iterate keeps integrating, and the step is
    # refined only once the discrete fixed point itself is biased.
    dt = ARE_INTERNAL_DT
    dt_floor = ARE_INTERNAL_DT / 64.0
    P = _symmetrize(np.array(problem.P_T, dtype=float))
    horizon = 0.0
    while horizon < max_horizon:
        P_prev = P
        for _ in range(int(round(ARE_CHUNK / dt))):
            P = _symmetrize(_rk4_step(P, dt, deriv))
        if not _chol_ok(P):
            raise StepSizeTooLarge("ARE iteration lost positive definiteness")
        horizon += ARE_CHUNK
        change_rate = np.linalg.norm(P - P_prev, "fro") / max(
            np.linalg.norm(P, "fro"), 1e-30
        )
        if change_rate < are_tol:
            if are_residual(problem, P) < 10.0 * are_tol:
                return P
            if change_rate < 1e-13 and dt > dt_floor:
                dt /= 4.0
    raise NoConvergence(f"ARE did not converge within horizon {max_horizon}")


def optimal_gain(P: np.ndarray, problem: LinearQuadraticProblem) -> np.ndarray:
    """K = -R^{-1} B' P."""
    P = np.asarray(P, dtype=float)
    if P.shape != (problem.state_dim, problem.state_dim):
        raise ValueError(f"P must be {problem.state_dim} x {problem.state_dim}")
    return -np.linalg.solve(problem.R, problem.B.T @ P)


def gain_schedule(schedule: RiccatiSchedule, problem: LinearQuadraticProblem) -> GainSchedule:
    Rinv_BT = np.linalg.solve(problem.R, problem.B.T)
    K = -np.einsum("ij,kjl->kil", Rinv_BT, schedule.P)
    return GainSchedule(grid=schedule.grid, K=K)


def schedule_to_csv(schedule: RiccatiSchedule, path) -> str:
    """Columns (k, t, entries row-major), one row per grid index."""
    from .csvio import write_schedule_csv

    return write_schedule_csv(path, schedule.grid, schedule.P)
