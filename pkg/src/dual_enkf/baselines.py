"""Zeroth-order policy-gradient LQR baselines.

Gradient-free descent over static gain matrices: the LQR cost is estimated
from Monte-Carlo rollouts and gradients from symmetric two-point smoothing
on the Frobenius sphere.  Serves as the comparison point for the particle
solver's error-versus-compute trade-off.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import Diverged
from .model import LinearQuadraticProblem, TimeGrid

COST_STREAM_KEY = 1
GRADIENT_STREAM_KEY = 2

SPHERE = "sphere"
COORDINATE = "coordinate"


@dataclass(frozen=True)
class PGConfig:
    """Hyper-parameters for policy-gradient descent and its cost estimates."""

    K0: np.ndarray
    step_size: float
    smoothing: float
    samples_per_gradient: int
    iterations: int
    grid: TimeGrid
    init_dist_cov: np.ndarray
    seed: int = 0
    init_mean: np.ndarray | None = None
    estimator: str = SPHERE
    divergence_cap: float = 1e8

    def __post_init__(self):
        object.__setattr__(self, "K0", np.atleast_2d(np.asarray(self.K0, dtype=float)))
        object.__setattr__(
            self, "init_dist_cov", np.atleast_2d(np.asarray(self.init_dist_cov, dtype=float))
        )
        if self.init_mean is not None:
            object.__setattr__(
                self, "init_mean", np.asarray(self.init_mean, dtype=float).ravel()
            )
        if self.smoothing <= 0:
            raise ValueError("smoothing radius must be positive")
        if self.step_size < 0:
            raise ValueError("step size must be nonnegative")
        if self.samples_per_gradient < 1:
            raise ValueError("samples_per_gradient must be >= 1")
        if self.estimator not in (SPHERE, COORDINATE):
            raise ValueError(f"unknown estimator {self.estimator!r}")


@dataclass(frozen=True)
class PGRecord:
    iteration: int
    K: np.ndarray
    cost: float
    elapsed_seconds: float


@dataclass
class PGTrace:
    records: list[PGRecord] = field(default_factory=list)

    def append(self, iteration, K, cost, elapsed):
        self.records.append(PGRecord(iteration, np.array(K), float(cost), float(elapsed)))


def _initial_states(problem, cfg: PGConfig) -> np.ndarray:
    d = problem.state_dim
    mean = cfg.init_mean if cfg.init_mean is not None else np.zeros(d)
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(int(cfg.seed), spawn_key=(COST_STREAM_KEY,)))
    )
    z = rng.standard_normal((cfg.samples_per_gradient, d))
    cov = cfg.init_dist_cov
    if not cov.any():
        return np.tile(mean, (cfg.samples_per_gradient, 1))
    L = np.linalg.cholesky(cov)
    return mean + z @ L.T


def lqr_cost(problem: LinearQuadraticProblem, K, cfg: PGConfig) -> float:
    """Monte-Carlo estimate of J(K) = E int x'Qx + u'Ru dt with Q = C'C.

    Finite-horizon surrogate of the infinite-horizon cost: rollouts use
    u = Kx under forward Euler on cfg.grid, averaged over x0 draws that are
    fixed by cfg.seed (shared across K, so comparisons are paired).
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    A_cl = problem.A + problem.B @ K
    W = problem.C.T @ problem.C + K.T @ problem.R @ K
    dt = cfg.grid.dt
    step_map_T = (np.eye(problem.state_dim) + dt * A_cl).T

    X = _initial_states(problem, cfg)
    cap = cfg.divergence_cap
    total = 0.0
    for _ in range(cfg.grid.num_steps):
        total += ((X @ W) * X).sum()
        X = X @ step_map_T
        if np.abs(X).max() > cap:
            raise Diverged(f"rollout exceeded cap {cap:g}; K is unstable")
    return float(total * dt / X.shape[0])


def _sphere_directions(rng, count, m, d):
    out = []
    for _ in range(count):
        U = rng.standard_normal((m, d))
        norm = np.linalg.norm(U)
        while norm == 0.0:
            U = rng.standard_normal((m, d))
            norm = np.linalg.norm(U)
        out.append(U / norm)
    return out


def two_point_sphere_estimate(cost_fn, K, r, count, rng) -> np.ndarray:
    """(m d)/(2 r count) * sum_j [cost(K + r U_j) - cost(K - r U_j)] U_j.

    U_j are uniform on the Frobenius-norm sphere; the estimator is unbiased
    for the gradient of the r-smoothed cost.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    m, d = K.shape
    acc = np.zeros_like(K)
    for U in _sphere_directions(rng, count, m, d):
        acc += (cost_fn(K + r * U) - cost_fn(K - r * U)) * U
    return acc * (m * d) / (2.0 * r * count)


def coordinate_fd_estimate(cost_fn, K, r) -> np.ndarray:
    """Central differences along every entry of K (the full-basis gradient)."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    grad = np.zeros_like(K)
    for i in range(K.shape[0]):
        for j in range(K.shape[1]):
            E = np.zeros_like(K)
            E[i, j] = 1.0
            grad[i, j] = (cost_fn(K + r * E) - cost_fn(K - r * E)) / (2.0 * r)
    return grad


def zeroth_order_gradient(
    problem: LinearQuadraticProblem,
    K,
    cfg: PGConfig,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Gradient estimate of the rollout cost at K per cfg.estimator."""
    cost_fn = lambda candidate: lqr_cost(problem, candidate, cfg)  # noqa: E731
    if cfg.estimator == COORDINATE:
        return coordinate_fd_estimate(cost_fn, K, cfg.smoothing)
    if rng is None:
        rng = np.random.Generator(
            np.random.Philox(
                np.random.SeedSequence(int(cfg.seed), spawn_key=(GRADIENT_STREAM_KEY,))
            )
        )
    return two_point_sphere_estimate(
        cost_fn, K, cfg.smoothing, cfg.samples_per_gradient, rng
    )


def policy_gradient_descent(
    problem: LinearQuadraticProblem,
    cfg: PGConfig,
    callback=None,
) -> tuple[np.ndarray, PGTrace]:
    """Plain gradient descent K <- K - alpha * grad for cfg.iterations steps.

    The trace records (iteration, K, estimated cost, elapsed wall clock)
    per iteration; a Diverged rollout aborts and attaches the partial trace
    to the exception.  ``callback(iteration, K, elapsed)`` can stop the run
    early by returning True.
    """
    K = np.array(cfg.K0, dtype=float)
    trace = PGTrace()
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(int(cfg.seed), spawn_key=(GRADIENT_STREAM_KEY,)))
    )
    start = time.perf_counter()
    try:
        trace.append(0, K, lqr_cost(problem, K, cfg), time.perf_counter() - start)
        for it in range(1, cfg.iterations + 1):
            grad = zeroth_order_gradient(problem, K, cfg, rng=rng)
            K = K - cfg.step_size * grad
            elapsed = time.perf_counter() - start
            trace.append(it, K, lqr_cost(problem, K, cfg), elapsed)
            if callback is not None and callback(it, K, elapsed):
                break
    except Diverged as exc:
        exc.trace = trace
        raise
    return K, trace
