"""Control extraction from value-matrix schedules, and closed-loop simulation.

Two extraction modes: an explicit gain K = -R^{-1} B' P when the input
matrix is known, and an oracle-query mode that recovers the same control
from m+1 Hamiltonian evaluations when it is not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .enkf import Ensemble, OfflineResult, ensemble_stats
from .errors import NonFiniteState, OracleFailure
from .model import LinearQuadraticProblem, NonlinearControlProblem, TimeGrid
from .riccati import RiccatiSchedule

EXPLICIT_GAIN = "explicit_gain"
ORACLE_QUERY = "oracle_query"


@dataclass(frozen=True)
class PolicyArtifact:
    """Offline product the controller consumes at run time.

    P_schedule holds the value matrices indexed along the source grid;
    explicit-gain artifacts additionally carry the precomputed gains.
    """

    mode: str
    grid: TimeGrid
    P_schedule: np.ndarray  # (n_k, d, d)
    K_schedule: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in (EXPLICIT_GAIN, ORACLE_QUERY):
            raise ValueError(f"unknown policy mode {self.mode!r}")
        if self.mode == ORACLE_QUERY and self.K_schedule is not None:
            raise ValueError("oracle-query artifacts carry no gain schedule")
        if self.mode == EXPLICIT_GAIN:
            if self.K_schedule is None:
                raise ValueError("explicit-gain artifacts need a gain schedule")
            if len(self.K_schedule) != len(self.P_schedule):
                raise ValueError("gain schedule length must match P schedule")


def _schedule_parts(source):
    if isinstance(source, OfflineResult):
        return source.grid, np.asarray(source.P)
    if isinstance(source, RiccatiSchedule):
        return source.grid, np.asarray(source.P)
    raise TypeError(f"unsupported schedule source {type(source).__name__}")


def explicit_gain_policy(source, problem) -> PolicyArtifact:
    """Build a gain-schedule policy from an offline result or Riccati schedule."""
    grid, P = _schedule_parts(source)
    Rinv_BT = np.linalg.solve(problem.R, problem.B.T)
    K = -np.einsum("ij,kjl->kil", Rinv_BT, P)
    return PolicyArtifact(mode=EXPLICIT_GAIN, grid=grid, P_schedule=P, K_schedule=K)


def oracle_query_policy(source) -> PolicyArtifact:
    grid, P = _schedule_parts(source)
    return PolicyArtifact(mode=ORACLE_QUERY, grid=grid, P_schedule=P)


@dataclass(frozen=True)
class Trajectory:
    grid: TimeGrid
    states: np.ndarray  # (num_steps + 1, d)
    controls: np.ndarray  # (num_steps, m)
    running_cost: float
    # cumulative quadrature of the running cost per grid index; the final
    # entry includes the terminal cost and equals running_cost
    cumulative_costs: np.ndarray = None


def gain_from_ensemble(P_k: np.ndarray, problem) -> np.ndarray:
    """K = -R^{-1} B' P_k for a single recorded value matrix."""
    return -np.linalg.solve(problem.R, problem.B.T @ np.asarray(P_k, dtype=float))


def gain_from_particles(ensemble: Ensemble, problem) -> np.ndarray:
    """Particle-sum form of the same gain.

    With Xb_i = S^{-1}(Y_i - n), the sum -(N-1)^{-1} sum_i R^{-1}(B'Xb_i)Xb_i'
    equals -R^{-1} B' P for P = S^{-1}; both routes are exposed so they can
    be cross-checked.
    """
    stats = ensemble_stats(ensemble)
    Yc = ensemble.Y - stats.mean
    Xb = np.linalg.solve(stats.cov, Yc.T).T  # rows are Xb_i
    BX = Xb @ problem.B  # rows are (B' Xb_i)'
    acc = BX.T @ Xb / (ensemble.num_particles - 1)
    return -np.linalg.solve(problem.R, acc)


def hamiltonian(x, y, alpha, problem: NonlinearControlProblem) -> float:
    """H(x, y, alpha) = y' f(x, alpha) + 0.5 |c(x)|^2 + 0.5 alpha' R alpha."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    try:
        fx = np.asarray(problem.f(x, alpha), dtype=float)
        cx = np.asarray(problem.c(x), dtype=float)
    except Exception as exc:  # noqa: BLE001
        raise OracleFailure(f"oracle raised {exc!r}") from exc
    return float(y @ fx + 0.5 * (cx @ cx) + 0.5 * alpha @ problem.R @ alpha)


def online_control(x, P_k, problem: NonlinearControlProblem) -> np.ndarray:
    """Recover u = -R^{-1} b(x)' P_k x from m+1 Hamiltonian queries.

    Component i of the query differences is H(x, y, R^{-1}e_i) - H(x, y, 0)
    - 0.5 (R^{-1})_{ii} with y = P_k x; negating the resulting vector gives
    the stabilizing control (the minimizer of the quadratic Hamiltonian).
    """
    x = np.asarray(x, dtype=float)
    m = problem.input_dim
    Rinv = np.linalg.inv(problem.R)
    y = np.asarray(P_k, dtype=float) @ x
    h0 = hamiltonian(x, y, np.zeros(m), problem)
    raw = np.empty(m)
    for i in range(m):
        raw[i] = hamiltonian(x, y, Rinv[:, i], problem) - h0 - 0.5 * Rinv[i, i]
    return -raw


def _artifact_indexer(artifact: PolicyArtifact, sim_grid: TimeGrid):
    """Map a simulation step index to the nearest artifact schedule index."""
    n_art = len(artifact.P_schedule)
    if artifact.grid.matches(sim_grid) and n_art >= sim_grid.num_steps:
        return lambda k: min(k, n_art - 1)
    art_dt = artifact.grid.dt

    def index(k):
        idx = int(round(k * sim_grid.dt / art_dt))
        return min(max(idx, 0), n_art - 1)

    return index


def simulate_closed_loop(
    problem: NonlinearControlProblem,
    artifact: PolicyArtifact,
    x0,
    grid: TimeGrid,
) -> Trajectory:
    """Forward Euler rollout of the plant under the artifact's policy.

    Accumulates the quadratic running cost by left-endpoint quadrature and
    adds the terminal cost 0.5 x_T' P_T x_T.  A diverging closed loop is
    reported as NonFiniteState, never clipped.
    """
    d = problem.state_dim
    m = problem.input_dim
    x = np.array(x0, dtype=float).reshape(d)
    states = np.empty((grid.num_steps + 1, d))
    controls = np.empty((grid.num_steps, m))
    cumulative = np.empty(grid.num_steps + 1)
    states[0] = x
    cumulative[0] = 0.0
    index = _artifact_indexer(artifact, grid)
    dt = grid.dt
    cost = 0.0

    for k in range(grid.num_steps):
        idx = index(k)
        if artifact.mode == EXPLICIT_GAIN:
            u = artifact.K_schedule[idx] @ x
        else:
            u = online_control(x, artifact.P_schedule[idx], problem)
        try:
            fx = np.asarray(problem.f(x, u), dtype=float)
            cx = np.asarray(problem.c(x), dtype=float)
        except Exception as exc:  # noqa: BLE001
            raise OracleFailure(f"oracle raised {exc!r}") from exc
        cost += (0.5 * float(cx @ cx) + 0.5 * float(u @ problem.R @ u)) * dt
        x = x + fx * dt
        if not np.isfinite(x).all():
            raise NonFiniteState(f"closed loop diverged at step {k + 1}")
        controls[k] = u
        states[k + 1] = x
        cumulative[k + 1] = cost

    cost += 0.5 * float(x @ problem.P_T @ x)
    cumulative[grid.num_steps] = cost
    return Trajectory(
        grid=grid,
        states=states,
        controls=controls,
        running_cost=cost,
        cumulative_costs=cumulative,
    )


def simulate_linear_closed_loop(
    problem: LinearQuadraticProblem,
    artifact: PolicyArtifact,
    x0,
    grid: TimeGrid,
) -> Trajectory:
    """Convenience wrapper: run the closed loop on the LQ model's oracles."""
    from .model import linear_as_oracle

    return simulate_closed_loop(linear_as_oracle(problem), artifact, x0, grid)
