"""Benchmark problem generators and evaluation metrics.

Three desk-scale plants: a random controllable-canonical system, the
coupled mass-spring-damper chain, and the nonlinear cart-pole with its
linearization about the inverted equilibrium.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import baselines, riccati
from .enkf import OfflineResult
from .errors import GridMismatch, OddDimension
from .model import LinearQuadraticProblem, NonlinearControlProblem
from .riccati import RiccatiSchedule

CART_POLE_BALL_MASS = 0.08
CART_POLE_CART_MASS = 1.0
CART_POLE_ROD_LENGTH = 0.7
CART_POLE_GRAVITY = 9.81
CART_POLE_EQUILIBRIUM = np.array([math.pi, 0.0, 0.0, 0.0])


@dataclass(frozen=True)
class MetricReport:
    mse: float
    error_gain: float
    error_value: float
    open_loop_poles: list
    closed_loop_poles: list
    wall_clock_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "mse": self.mse,
            "error_gain": self.error_gain,
            "error_value": self.error_value,
            "open_loop_poles": [[z.real, z.imag] for z in self.open_loop_poles],
            "closed_loop_poles": [[z.real, z.imag] for z in self.closed_loop_poles],
            "wall_clock_seconds": self.wall_clock_seconds,
        }


def random_canonical(d: int, seed: int) -> LinearQuadraticProblem:
    """Controllable canonical form with i.i.d. N(0,1) characteristic row.

    A has ones on the superdiagonal and random last row; B is the last
    standard basis vector; C, R, P_T are identities.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(seed)
    A = np.zeros((d, d))
    for i in range(d - 1):
        A[i, i + 1] = 1.0
    A[d - 1, :] = rng.standard_normal(d)
    B = np.zeros((d, 1))
    B[d - 1, 0] = 1.0
    return LinearQuadraticProblem(A=A, B=B, C=np.eye(d), R=np.eye(1), P_T=np.eye(d))


def mass_spring_damper(d: int) -> LinearQuadraticProblem:
    """Coupled mass-spring-damper chain with d/2 masses.

    A = [[0, I], [-T, -T]] for the (2, -1) tridiagonal Toeplitz T, with one
    actuator per mass.  C is sqrt(5) I for d = 2 and I otherwise.
    """
    if d < 2 or d % 2 != 0:
        raise OddDimension(f"mass-spring-damper needs even d >= 2, got {d}")
    ds = d // 2
    T = 2.0 * np.eye(ds)
    for i in range(ds - 1):
        T[i, i + 1] = -1.0
        T[i + 1, i] = -1.0
    A = np.block(
        [[np.zeros((ds, ds)), np.eye(ds)], [-T, -T]]
    )
    B = np.vstack([np.zeros((ds, ds)), np.eye(ds)])
    C = math.sqrt(5.0) * np.eye(d) if d == 2 else np.eye(d)
    return LinearQuadraticProblem(A=A, B=B, C=C, R=np.eye(ds), P_T=np.eye(d))


def cart_pole() -> tuple[NonlinearControlProblem, LinearQuadraticProblem]:
    """Nonlinear cart-pole and its linearization about the upright pole.

    State order (theta, x, omega, v) with theta measured from the hanging
    position; the oracle works in deviations from the inverted equilibrium
    (pi, 0, 0, 0), so the origin of the shifted coordinates is the target.
    """
    m = CART_POLE_BALL_MASS
    M = CART_POLE_CART_MASS
    length = CART_POLE_ROD_LENGTH
    g = CART_POLE_GRAVITY

    C = np.diag([10.0, 10.0, 1.0, 1.0])

    def f(z, u):
        z = np.asarray(z, dtype=float)
        theta = z[0] + math.pi
        omega = z[2]
        force = float(np.asarray(u, dtype=float).ravel()[0])
        sin = math.sin(theta)
        cos = math.cos(theta)
        den = M + m * sin * sin
        omega_dot = (
            -force * cos - m * length * omega * omega * cos * sin - (m + M) * g * sin
        ) / (length * den)
        v_dot = (force + m * sin * (length * omega * omega + g * cos)) / den
        return np.array([omega, z[3], omega_dot, v_dot])

    def c(z):
        return C @ np.asarray(z, dtype=float)

    A = np.array(
        [
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [(M + m) * g / (M * length), 0.0, 0.0, 0.0],
            [m * g / M, 0.0, 0.0, 0.0],
        ]
    )
    B = np.array([[0.0], [0.0], [1.0 / (M * length)], [1.0 / M]])
    R = np.array([[10.0]])
    P_T = np.eye(4)

    linear = LinearQuadraticProblem(A=A, B=B, C=C, R=R, P_T=P_T)
    nonlinear = NonlinearControlProblem(
        f=f, c=c, R=R, P_T=P_T, state_dim=4, input_dim=1
    )
    return nonlinear, linear


def relative_mse(estimate: OfflineResult, reference: RiccatiSchedule) -> float:
    """Time-averaged ||P_t - P_t^(N)||_F^2 / ||P_t||_F^2 by left-endpoint quadrature.

    The expectation over runs is the caller's job (seed averaging).
    """
    if not estimate.grid.matches(reference.grid):
        raise GridMismatch("estimate and reference are on different grids")
    steps = estimate.grid.num_steps
    ref = reference.P[:steps]
    diff = estimate.P - ref
    num = np.einsum("kij,kij->k", diff, diff)
    den = np.einsum("kij,kij->k", ref, ref)
    dt = estimate.grid.dt
    return float(np.sum(num / den) * dt / estimate.grid.T)


def gain_value_errors(
    K_est,
    problem: LinearQuadraticProblem,
    cfg: baselines.PGConfig,
    are_tol: float = 1e-8,
):
    """Relative gain error vs K_inf and normalized cost error.

    error_gain = ||K_est - K_inf||_F / ||K_inf||_F;
    error_value = (c_est - c_inf) / (c_init - c_inf) with all three costs
    evaluated on shared-seed rollouts and c_init taken at K = 0.
    """
    K_est = np.atleast_2d(np.asarray(K_est, dtype=float))
    P_inf = riccati.solve_are(problem, are_tol=are_tol)
    K_inf = riccati.optimal_gain(P_inf, problem)
    error_gain = float(
        np.linalg.norm(K_est - K_inf, "fro") / np.linalg.norm(K_inf, "fro")
    )
    c_est = baselines.lqr_cost(problem, K_est, cfg)
    c_inf = baselines.lqr_cost(problem, K_inf, cfg)
    c_init = baselines.lqr_cost(problem, np.zeros_like(K_inf), cfg)
    error_value = (c_est - c_inf) / (c_init - c_inf)
    return error_gain, float(error_value)


def pole_report(problem: LinearQuadraticProblem, K) -> tuple[list, list]:
    """Eigenvalues of A and of A + BK, sorted by real part descending."""
    K = np.atleast_2d(np.asarray(K, dtype=float))

    def _sorted(vals):
        return sorted(vals, key=lambda z: (-z.real, -z.imag))

    open_poles = _sorted(np.linalg.eigvals(problem.A))
    closed_poles = _sorted(np.linalg.eigvals(problem.A + problem.B @ K))
    return open_poles, closed_poles
