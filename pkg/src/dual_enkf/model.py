"""Problem data types, validation, and the simulation-oracle abstraction.

The linear problem carries explicit matrices; the nonlinear problem carries
dynamics/cost oracles so solvers can stay simulator-only.  All types are
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    DimensionMismatch,
    NotControllable,
    NotObservable,
    NotPositiveDefinite,
    ValidationError,
)

SYMMETRY_RTOL = 1e-9
RANK_SV_RTOL = 1e-10  # singular values below this fraction of sigma_max count as zero


def _matrix(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        if arr.size == 1:
            arr = arr.reshape(1, 1)
        else:
            raise DimensionMismatch(f"{name} must be a matrix, got 1-d of length {arr.size}")
    elif arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-d, got {arr.ndim}-d")
    arr.setflags(write=False)
    return arr


def is_symmetric(M: np.ndarray, rtol: float = SYMMETRY_RTOL) -> bool:
    scale = max(np.linalg.norm(M, "fro"), 1e-300)
    return np.linalg.norm(M - M.T, "fro") <= rtol * scale


def check_spd(M: np.ndarray, name: str) -> None:
    """Raise NotPositiveDefinite unless M is symmetric and Cholesky succeeds."""
    if M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got {M.shape}")
    if not is_symmetric(M):
        raise NotPositiveDefinite(name, f"{name} is not symmetric")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(name) from None


def _numerical_rank(M: np.ndarray) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > RANK_SV_RTOL * s[0]))


@dataclass(frozen=True)
class LinearQuadraticProblem:
    """Finite-horizon LQ problem data: dynamics (A, B), costs (C, R, P_T)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    R: np.ndarray
    P_T: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C", "R", "P_T"):
            object.__setattr__(self, name, _matrix(getattr(self, name), name))

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]

    @property
    def cost_dim(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class NonlinearControlProblem:
    """Oracle-based control problem: f(x, u) dynamics, c(x) cost factor.

    The terminal cost is the quadratic g(x) = 0.5 * x' P_T x, which keeps
    terminal sampling exactly Gaussian.  Oracles must be re-entrant.
    """

    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    c: Callable[[np.ndarray], np.ndarray]
    R: np.ndarray
    P_T: np.ndarray
    state_dim: int
    input_dim: int

    def __post_init__(self):
        object.__setattr__(self, "R", _matrix(self.R, "R"))
        object.__setattr__(self, "P_T", _matrix(self.P_T, "P_T"))
        check_spd(self.R, "R")
        check_spd(self.P_T, "P_T")
        if self.R.shape[0] != self.input_dim:
            raise DimensionMismatch("R must be input_dim x input_dim")
        if self.P_T.shape[0] != self.state_dim:
            raise DimensionMismatch("P_T must be state_dim x state_dim")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform discretization of [0, T] with num_steps = T/dt intervals."""

    T: float
    dt: float

    def __post_init__(self):
        problems = []
        if not self.dt > 0:
            problems.append("dt must be positive")
        if not self.T > 0:
            problems.append("T must be positive")
        if problems:
            raise ValidationError(problems)
        ratio = self.T / self.dt
        steps = round(ratio)
        if steps < 1 or abs(ratio - steps) > 1e-9 * max(1.0, ratio):
            raise ValidationError([f"T/dt = {ratio} is not a positive integer"])
        object.__setattr__(self, "num_steps", int(steps))

    num_steps: int = field(init=False)

    def times(self) -> np.ndarray:
        return np.arange(self.num_steps + 1) * self.dt

    def matches(self, other: "TimeGrid") -> bool:
        return (
            self.num_steps == other.num_steps
            and abs(self.dt - other.dt) <= 1e-12 * max(1.0, self.dt)
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """Run parameters shared by the particle solvers."""

    grid: TimeGrid
    num_particles: int
    seed: int = 0
    jitter_scale: float = 1e-8
    are_tol: float = 1e-6

    def __post_init__(self):
        problems = []
        if self.num_particles < 2:
            problems.append("num_particles must be at least 2")
        if self.jitter_scale < 0:
            problems.append("jitter_scale must be nonnegative")
        if not 0 <= int(self.seed) < 2**64:
            problems.append("seed must fit in 64 bits")
        if problems:
            raise ValidationError(problems)


def validate_lq(problem: LinearQuadraticProblem) -> None:
    """Check dimensions, positive definiteness, controllability, observability.

    Controllability/observability are tested via the numerical rank of the
    Kalman matrices [B, AB, ..., A^{d-1}B] and [C; CA; ...; CA^{d-1}].
    """
    A, B, C, R, P_T = problem.A, problem.B, problem.C, problem.R, problem.P_T
    d = A.shape[0]
    if A.shape[1] != d:
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    if B.shape[0] != d:
        raise DimensionMismatch(f"B must have {d} rows, got {B.shape}")
    if C.shape[1] != d:
        raise DimensionMismatch(f"C must have {d} columns, got {C.shape}")
    if R.shape[0] != R.shape[1] or R.shape[0] != B.shape[1]:
        raise DimensionMismatch(f"R must be {B.shape[1]} x {B.shape[1]}, got {R.shape}")
    if P_T.shape != (d, d):
        raise DimensionMismatch(f"P_T must be {d} x {d}, got {P_T.shape}")
    check_spd(R, "R")
    check_spd(P_T, "P_T")

    blocks = [B]
    for _ in range(d - 1):
        blocks.append(A @ blocks[-1])
    if _numerical_rank(np.hstack(blocks)) < d:
        raise NotControllable("(A, B) fails the Kalman rank test")

    blocks = [C]
    for _ in range(d - 1):
        blocks.append(blocks[-1] @ A)
    if _numerical_rank(np.vstack(blocks)) < d:
        raise NotObservable("(A, C) fails the Kalman rank test")


def linear_as_oracle(problem: LinearQuadraticProblem) -> NonlinearControlProblem:
    """Wrap an LQ problem as oracles f(x, u) = Ax + Bu and c(x) = Cx."""
    A = problem.A
    B = problem.B
    C = problem.C

    def f(x, u):
        return A @ np.asarray(x, dtype=float) + B @ np.asarray(u, dtype=float)

    def c(x):
        return C @ np.asarray(x, dtype=float)

    return NonlinearControlProblem(
        f=f,
        c=c,
        R=problem.R,
        P_T=problem.P_T,
        state_dim=problem.state_dim,
        input_dim=problem.input_dim,
    )


def problem_to_json(problem: LinearQuadraticProblem) -> str:
    doc = {
        "A": problem.A.tolist(),
        "B": problem.B.tolist(),
        "C": problem.C.tolist(),
        "R": problem.R.tolist(),
        "P_T": problem.P_T.tolist(),
    }
    return json.dumps(doc, indent=2)


def problem_from_json(text: str) -> LinearQuadraticProblem:
    doc = json.loads(text)
    missing = [k for k in ("A", "B", "C", "R", "P_T") if k not in doc]
    if missing:
        raise ValidationError([f"problem JSON missing key {k!r}" for k in missing])
    return LinearQuadraticProblem(
        A=doc["A"], B=doc["B"], C=doc["C"], R=doc["R"], P_T=doc["P_T"]
    )
