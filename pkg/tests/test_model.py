import numpy as np
import pytest

from dual_enkf import (
    ExperimentConfig,
    LinearQuadraticProblem,
    TimeGrid,
    cart_pole,
    linear_as_oracle,
    mass_spring_damper,
    problem_from_json,
    problem_to_json,
    random_canonical,
    validate_lq,
)
from dual_enkf.errors import (
    DimensionMismatch,
    NotControllable,
    NotObservable,
    NotPositiveDefinite,
    ValidationError,
)


def double_integrator():
    return LinearQuadraticProblem(
        A=[[0.0, 1.0], [0.0, 0.0]],
        B=[[0.0], [1.0]],
        C=np.eye(2),
        R=[[1.0]],
        P_T=np.eye(2),
    )


class TestValidateLQ:
    def test_double_integrator_passes(self):
        validate_lq(double_integrator())

    def test_zero_input_matrix_not_controllable(self):
        p = LinearQuadraticProblem(
            A=np.zeros((2, 2)), B=np.zeros((2, 1)), C=np.eye(2), R=[[1.0]], P_T=np.eye(2)
        )
        with pytest.raises(NotControllable):
            validate_lq(p)

    def test_negative_r_not_positive_definite(self):
        p = LinearQuadraticProblem(
            A=[[0.0, 1.0], [0.0, 0.0]], B=[[0.0], [1.0]], C=np.eye(2), R=[[-1.0]], P_T=np.eye(2)
        )
        with pytest.raises(NotPositiveDefinite) as excinfo:
            validate_lq(p)
        assert excinfo.value.field == "R"

    def test_zero_output_not_observable(self):
        p = LinearQuadraticProblem(
            A=np.zeros((2, 2)), B=np.eye(2), C=np.zeros((1, 2)), R=np.eye(2), P_T=np.eye(2)
        )
        with pytest.raises(NotObservable):
            validate_lq(p)

    def test_dimension_mismatch(self):
        p = LinearQuadraticProblem(
            A=np.eye(2), B=[[1.0]], C=np.eye(2), R=[[1.0]], P_T=np.eye(2)
        )
        with pytest.raises(DimensionMismatch):
            validate_lq(p)

    def test_asymmetric_p_t_rejected(self):
        p = LinearQuadraticProblem(
            A=[[0.0, 1.0], [0.0, 0.0]],
            B=[[0.0], [1.0]],
            C=np.eye(2),
            R=[[1.0]],
            P_T=[[1.0, 0.5], [0.0, 1.0]],
        )
        with pytest.raises(NotPositiveDefinite):
            validate_lq(p)

    def test_accepts_every_benchmark(self):
        for d in (1, 2, 3, 5, 10):
            validate_lq(random_canonical(d, seed=d))
        for d in (2, 4, 10):
            validate_lq(mass_spring_damper(d))
        validate_lq(cart_pole()[1])


class TestLinearAsOracle:
    def test_identity_drift(self):
        p = LinearQuadraticProblem(
            A=np.eye(2), B=[[1.0], [0.0]], C=np.eye(2), R=[[1.0]], P_T=np.eye(2)
        )
        oracle = linear_as_oracle(p)
        np.testing.assert_allclose(oracle.f([1.0, 2.0], [3.0]), [4.0, 2.0])

    def test_cost_factor(self):
        p = LinearQuadraticProblem(
            A=np.eye(2), B=[[1.0], [0.0]], C=[[1.0, 0.0]], R=[[1.0]], P_T=np.eye(2)
        )
        oracle = linear_as_oracle(p)
        np.testing.assert_allclose(oracle.c([5.0, 7.0]), [5.0])

    def test_zero_control_gives_drift(self):
        rng = np.random.default_rng(3)
        A = rng.standard_normal((3, 3))
        p = LinearQuadraticProblem(A=A, B=rng.standard_normal((3, 2)), C=np.eye(3), R=np.eye(2), P_T=np.eye(3))
        oracle = linear_as_oracle(p)
        x = rng.standard_normal(3)
        np.testing.assert_allclose(oracle.f(x, np.zeros(2)), A @ x, rtol=1e-13)

    def test_matches_matrix_arithmetic_on_random_pairs(self):
        rng = np.random.default_rng(11)
        p = random_canonical(4, seed=5)
        oracle = linear_as_oracle(p)
        for _ in range(100):
            x = rng.standard_normal(4)
            u = rng.standard_normal(1)
            np.testing.assert_allclose(oracle.f(x, u), p.A @ x + p.B @ u, rtol=0, atol=1e-12)
            np.testing.assert_allclose(oracle.c(x), p.C @ x, rtol=0, atol=1e-12)


class TestTimeGrid:
    def test_num_steps(self):
        assert TimeGrid(T=10.0, dt=0.02).num_steps == 500

    def test_rejects_non_integer_ratio(self):
        with pytest.raises(ValidationError):
            TimeGrid(T=1.0, dt=0.3)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValidationError):
            TimeGrid(T=0.0, dt=0.1)
        with pytest.raises(ValidationError):
            TimeGrid(T=1.0, dt=-0.1)

    def test_times(self):
        grid = TimeGrid(T=1.0, dt=0.25)
        np.testing.assert_allclose(grid.times(), [0.0, 0.25, 0.5, 0.75, 1.0])


class TestExperimentConfig:
    def test_rejects_negative_jitter(self):
        grid = TimeGrid(T=1.0, dt=0.1)
        with pytest.raises(ValidationError):
            ExperimentConfig(grid=grid, num_particles=10, jitter_scale=-1.0)

    def test_defaults(self):
        cfg = ExperimentConfig(grid=TimeGrid(T=1.0, dt=0.1), num_particles=10)
        assert cfg.seed == 0
        assert cfg.are_tol == 1e-6


def test_problem_json_round_trip():
    p = random_canonical(3, seed=9)
    q = problem_from_json(problem_to_json(p))
    for name in ("A", "B", "C", "R", "P_T"):
        np.testing.assert_array_equal(getattr(p, name), getattr(q, name))


def test_problem_json_missing_key():
    with pytest.raises(ValidationError):
        problem_from_json('{"A": [[1]]}')


def test_problem_matrices_are_read_only():
    p = random_canonical(2, seed=1)
    with pytest.raises(ValueError):
        p.A[0, 0] = 5.0
