"""Backward-in-time interacting particle approximation of the Riccati flow.

Particles start at T as samples of N(0, P_T^{-1}) and are stepped backward
with Euler-Maruyama; the ensemble covariance tracks S_t = P_t^{-1}, so the
per-step inverse of the sample covariance estimates P_t.  The linear case
couples particles through the gain S C'; the oracle (nonlinear) case uses
the state/cost cross covariance instead, which reduces to S C' when the
cost factor is linear.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NonFiniteState, OracleFailure, StepSizeTooLarge, TooFewParticles
from .model import (
    ExperimentConfig,
    LinearQuadraticProblem,
    NonlinearControlProblem,
    TimeGrid,
)

TERMINAL_STREAM_KEY = 0  # step streams use the step index k >= 1


@dataclass(frozen=True)
class NoiseStream:
    """Deterministic per-step noise substreams derived from one 64-bit seed.

    Step k draws its whole (N, m) block from the substream keyed by k, with
    the particle index selecting the row, so identical seeds produce
    identical increments no matter how the propagation is parallelized.
    """

    seed: int

    def _rng(self, key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(key),))
        return np.random.Generator(np.random.Philox(ss))

    def terminal_normals(self, num_particles: int, dim: int) -> np.ndarray:
        return self._rng(TERMINAL_STREAM_KEY).standard_normal((num_particles, dim))

    def step_normals(self, step_index: int, num_particles: int, dim: int) -> np.ndarray:
        if step_index < 1:
            raise ValueError("step_index must be >= 1")
        return self._rng(step_index).standard_normal((num_particles, dim))


@dataclass(frozen=True)
class Ensemble:
    Y: np.ndarray  # (N, d) particle states
    k: int  # current index on the time grid

    @property
    def num_particles(self) -> int:
        return self.Y.shape[0]

    @property
    def dim(self) -> int:
        return self.Y.shape[1]


@dataclass(frozen=True)
class EnsembleStats:
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class OfflineResult:
    """Backward sweep output: P and S estimates at indices 0..num_steps-1."""

    grid: TimeGrid
    P: np.ndarray  # (num_steps, d, d)
    S: np.ndarray  # (num_steps, d, d)
    jitter_events: int

    def __post_init__(self):
        self.P.setflags(write=False)
        self.S.setflags(write=False)


def _spd_inverse(M):
    Minv = np.linalg.inv(M)
    return 0.5 * (Minv + Minv.T)


def _chol_lower(M, what):
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise StepSizeTooLarge(f"{what} is not positive definite") from None


class _ProblemCache:
    """Per-run precomputation shared by the public ops and run_offline."""

    def __init__(self, problem):
        self.problem = problem
        self.linear = isinstance(problem, LinearQuadraticProblem)
        Rinv = np.linalg.inv(problem.R)
        Rinv = 0.5 * (Rinv + Rinv.T)
        self.noise_chol = np.linalg.cholesky(Rinv)  # L with L L' = R^{-1}
        self.input_dim = problem.input_dim
        self.state_dim = problem.state_dim
        if self.linear:
            self.A = problem.A
            self.B = problem.B
            self.C = problem.C

    def increments(self, noise: NoiseStream, k: int, n: int, dt: float) -> np.ndarray:
        """Euler increments of the control-channel noise, ~ N(0, R^{-1}/dt)."""
        z = noise.step_normals(k, n, self.input_dim)
        return z @ (self.noise_chol.T / np.sqrt(dt))


def init_terminal_ensemble(
    problem,
    num_particles: int,
    noise: NoiseStream,
    start_index: int = 0,
) -> Ensemble:
    """Draw N i.i.d. samples of N(0, P_T^{-1}) via the Cholesky factor."""
    d = problem.state_dim
    if num_particles < d + 1:
        raise TooFewParticles(f"need at least d+1 = {d + 1} particles, got {num_particles}")
    S_T = _spd_inverse(problem.P_T)
    L = _chol_lower(S_T, "P_T^{-1}")
    z = noise.terminal_normals(num_particles, d)
    return Ensemble(Y=z @ L.T, k=start_index)


def ensemble_stats(ensemble: Ensemble) -> EnsembleStats:
    """Mean and unbiased sample covariance, reduced in fixed particle order."""
    if ensemble.num_particles < 2:
        raise TooFewParticles("covariance needs at least 2 particles")
    mean, cov = kernels.mean_and_cov(ensemble.Y)
    return EnsembleStats(mean=mean, cov=cov)


def _check_finite(Y, k):
    if not np.isfinite(Y).all():
        raise NonFiniteState(f"non-finite particle state after step {k}")


def _linear_step(Y, mean, cov, cache, dt, eta):
    G = cov @ cache.C.T
    cn = cache.C @ mean
    return kernels.linear_backward_step(Y, eta, cache.A, cache.B, cache.C, G, cn, dt)


def _oracle_values(fn, args_iter, what):
    try:
        return np.array([fn(*args) for args in args_iter], dtype=float)
    except Exception as exc:  # noqa: BLE001 - oracle errors are opaque to us
        raise OracleFailure(f"{what} oracle raised {exc!r}") from exc


def _nonlinear_step(Y, problem, dt, eta):
    n = Y.shape[0]
    cvals = _oracle_values(problem.c, ((Y[i],) for i in range(n)), "cost")
    if cvals.ndim == 1:
        cvals = cvals[:, None]
    chat = cvals.mean(axis=0)
    M = kernels.cross_cov(Y, cvals)
    fvals = _oracle_values(problem.f, ((Y[i], eta[i]) for i in range(n)), "dynamics")
    return Y - fvals * dt - (cvals + chat) @ M.T * (0.5 * dt)


def step_backward_linear(
    ensemble: Ensemble,
    problem: LinearQuadraticProblem,
    dt: float,
    noise: NoiseStream,
) -> Ensemble:
    """One backward step of the coupled linear particle system (index k -> k-1)."""
    cache = _ProblemCache(problem)
    mean, cov = kernels.mean_and_cov(ensemble.Y)
    eta = cache.increments(noise, ensemble.k, ensemble.num_particles, dt)
    Y = _linear_step(ensemble.Y, mean, cov, cache, dt, eta)
    _check_finite(Y, ensemble.k)
    return Ensemble(Y=Y, k=ensemble.k - 1)


def step_backward_nonlinear(
    ensemble: Ensemble,
    problem: NonlinearControlProblem,
    dt: float,
    noise: NoiseStream,
) -> Ensemble:
    """One backward step with the oracle dynamics and constant-gain coupling."""
    cache = _ProblemCache(problem)
    eta = cache.increments(noise, ensemble.k, ensemble.num_particles, dt)
    Y = _nonlinear_step(ensemble.Y, problem, dt, eta)
    _check_finite(Y, ensemble.k)
    return Ensemble(Y=Y, k=ensemble.k - 1)


def _regularized_inverse(S, jitter_scale, counter):
    """Invert the sample covariance, adding jitter only on Cholesky failure."""
    d = S.shape[0]
    try:
        np.linalg.cholesky(S)
        return _spd_inverse(S), counter
    except np.linalg.LinAlgError:
        pass
    base = jitter_scale * np.trace(S) / d
    if base <= 0:
        base = jitter_scale if jitter_scale > 0 else 1e-12
    jitter = base
    for _ in range(8):
        Sj = S + jitter * np.eye(d)
        try:
            np.linalg.cholesky(Sj)
            return _spd_inverse(Sj), counter + 1
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise StepSizeTooLarge("sample covariance could not be regularized to SPD")


def run_offline(problem, config: ExperimentConfig) -> OfflineResult:
    """Offline backward sweep estimating S_t and P_t = S_t^{-1} on the grid.

    Accepts a LinearQuadraticProblem (matrix path) or a
    NonlinearControlProblem (oracle path); both consume identical noise
    streams, so the two paths agree on linear problems.
    """
    grid = config.grid
    n = config.num_particles
    d = problem.state_dim
    if n < d + 1:
        raise TooFewParticles(f"need at least d+1 = {d + 1} particles, got {n}")

    cache = _ProblemCache(problem)
    noise = NoiseStream(config.seed)
    ensemble = init_terminal_ensemble(problem, n, noise, start_index=grid.num_steps)
    Y = ensemble.Y
    mean, cov = kernels.mean_and_cov(Y)

    dt = grid.dt
    P_out = np.empty((grid.num_steps, d, d))
    S_out = np.empty((grid.num_steps, d, d))
    jitter_events = 0

    for k in range(grid.num_steps, 0, -1):
        eta = cache.increments(noise, k, n, dt)
        if cache.linear:
            Y = _linear_step(Y, mean, cov, cache, dt, eta)
        else:
            Y = _nonlinear_step(Y, problem, dt, eta)
        _check_finite(Y, k)
        mean, cov = kernels.mean_and_cov(Y)
        S_out[k - 1] = cov
        P_out[k - 1], jitter_events = _regularized_inverse(
            cov, config.jitter_scale, jitter_events
        )

    return OfflineResult(grid=grid, P=P_out, S=S_out, jitter_events=jitter_events)
