import math

import numpy as np
import pytest

from dual_enkf import (
    ExperimentConfig,
    TimeGrid,
    cart_pole,
    gain_value_errors,
    mass_spring_damper,
    optimal_gain,
    pole_report,
    random_canonical,
    relative_mse,
    run_offline,
    solve_are,
    solve_dre,
    validate_lq,
)
from dual_enkf.baselines import PGConfig
from dual_enkf.bench import MetricReport
from dual_enkf.enkf import OfflineResult
from dual_enkf.errors import GridMismatch, OddDimension


class TestRandomCanonical:
    def test_companion_structure(self):
        p = random_canonical(2, seed=0)
        assert p.A[0, 1] == 1.0
        assert p.A[0, 0] == 0.0
        np.testing.assert_array_equal(p.B, [[0.0], [1.0]])
        np.testing.assert_array_equal(p.C, np.eye(2))
        np.testing.assert_array_equal(p.R, [[1.0]])

    def test_validates_for_any_seed(self):
        for seed in range(5):
            validate_lq(random_canonical(4, seed=seed))

    def test_deterministic_in_seed(self):
        a = random_canonical(3, seed=7)
        b = random_canonical(3, seed=7)
        np.testing.assert_array_equal(a.A, b.A)


class TestMassSpringDamper:
    def test_d2_matrices(self):
        p = mass_spring_damper(2)
        np.testing.assert_array_equal(p.A, [[0.0, 1.0], [-2.0, -2.0]])
        np.testing.assert_array_equal(p.B, [[0.0], [1.0]])
        np.testing.assert_allclose(p.C, math.sqrt(5.0) * np.eye(2))
        np.testing.assert_array_equal(p.P_T, np.eye(2))

    def test_d4_toeplitz_block(self):
        p = mass_spring_damper(4)
        T = np.array([[2.0, -1.0], [-1.0, 2.0]])
        np.testing.assert_array_equal(p.A[2:, :2], -T)
        np.testing.assert_array_equal(p.A[2:, 2:], -T)
        np.testing.assert_array_equal(p.A[:2, 2:], np.eye(2))
        np.testing.assert_array_equal(p.C, np.eye(4))
        np.testing.assert_array_equal(p.R, np.eye(2))

    def test_odd_dimension_rejected(self):
        with pytest.raises(OddDimension):
            mass_spring_damper(3)


class TestCartPole:
    def test_equilibrium_is_fixed_point(self):
        nonlinear, _ = cart_pole()
        np.testing.assert_allclose(nonlinear.f(np.zeros(4), [0.0]), np.zeros(4), atol=1e-13)

    def test_linearization_entry(self):
        _, linear = cart_pole()
        assert linear.A[2, 0] == pytest.approx(1.08 * 9.81 / 0.7)
        assert linear.A[3, 0] == pytest.approx(0.08 * 9.81 / 1.0)

    def test_finite_difference_jacobian_matches_linearization(self):
        nonlinear, linear = cart_pole()
        eps = 1e-5
        A_fd = np.zeros((4, 4))
        for j in range(4):
            e = np.zeros(4)
            e[j] = eps
            A_fd[:, j] = (nonlinear.f(e, [0.0]) - nonlinear.f(-e, [0.0])) / (2 * eps)
        B_fd = ((nonlinear.f(np.zeros(4), [eps]) - nonlinear.f(np.zeros(4), [-eps])) / (2 * eps))
        assert np.abs(A_fd - linear.A).max() < 1e-4
        assert np.abs(B_fd - linear.B.ravel()).max() < 1e-4

    def test_cost_matrices(self):
        _, linear = cart_pole()
        np.testing.assert_array_equal(linear.C, np.diag([10.0, 10.0, 1.0, 1.0]))
        np.testing.assert_array_equal(linear.R, [[10.0]])
        np.testing.assert_array_equal(linear.P_T, np.eye(4))


class TestRelativeMse:
    def _result_from(self, reference, matrices):
        return OfflineResult(
            grid=reference.grid,
            P=np.asarray(matrices),
            S=np.linalg.inv(np.asarray(matrices)),
            jitter_events=0,
        )

    def test_identical_schedules_give_zero(self):
        p = mass_spring_damper(2)
        grid = TimeGrid(T=1.0, dt=0.1)
        ref = solve_dre(p, grid)
        est = self._result_from(ref, ref.P[: grid.num_steps])
        assert relative_mse(est, ref) == 0.0

    def test_doubled_schedule_gives_one(self):
        p = mass_spring_damper(2)
        grid = TimeGrid(T=1.0, dt=0.1)
        ref = solve_dre(p, grid)
        est = self._result_from(ref, 2.0 * ref.P[: grid.num_steps])
        assert relative_mse(est, ref) == pytest.approx(1.0, rel=1e-12)

    def test_matches_double_loop_quadrature_oracle(self):
        p = mass_spring_damper(2)
        grid = TimeGrid(T=5.0, dt=0.02)
        ref = solve_dre(p, grid)
        values = []
        oracle_values = []
        for seed in range(20):
            cfg = ExperimentConfig(grid=grid, num_particles=1000, seed=seed)
            result = run_offline(p, cfg)
            values.append(relative_mse(result, ref))
            acc = 0.0
            for k in range(grid.num_steps):
                diff = result.P[k] - ref.P[k]
                acc += (
                    (np.linalg.norm(diff, "fro") ** 2)
                    / (np.linalg.norm(ref.P[k], "fro") ** 2)
                    * grid.dt
                )
            oracle_values.append(acc / grid.T)
        assert abs(np.mean(values) - np.mean(oracle_values)) < 1e-12

    def test_scale_free(self):
        p = mass_spring_damper(2)
        grid = TimeGrid(T=1.0, dt=0.05)
        ref = solve_dre(p, grid)
        est = self._result_from(ref, 1.7 * ref.P[: grid.num_steps])
        scaled_ref = type(ref)(grid=grid, P=np.asarray(3.0 * ref.P))
        scaled_est = self._result_from(scaled_ref, 3.0 * 1.7 * ref.P[: grid.num_steps])
        assert relative_mse(est, ref) == pytest.approx(
            relative_mse(scaled_est, scaled_ref), rel=1e-12
        )

    def test_grid_mismatch_rejected(self):
        p = mass_spring_damper(2)
        ref = solve_dre(p, TimeGrid(T=1.0, dt=0.1))
        other = solve_dre(p, TimeGrid(T=1.0, dt=0.05))
        est = self._result_from(other, other.P[:20])
        with pytest.raises(GridMismatch):
            relative_mse(est, ref)


class TestGainValueErrors:
    def _cfg(self, problem, samples=200):
        d, m = problem.state_dim, problem.input_dim
        return PGConfig(
            K0=np.zeros((m, d)),
            step_size=1e-4,
            smoothing=0.1,
            samples_per_gradient=samples,
            iterations=1,
            grid=TimeGrid(T=10.0, dt=0.01),
            init_dist_cov=0.1 * np.eye(d),
            seed=0,
        )

    def test_exact_gain_gives_zero_errors(self):
        p = mass_spring_damper(2)
        K_inf = optimal_gain(solve_are(p, are_tol=1e-8), p)
        eg, ev = gain_value_errors(K_inf, p, self._cfg(p))
        assert eg < 1e-6
        assert abs(ev) < 1e-6

    def test_zero_gain_gives_unit_value_error(self):
        p = mass_spring_damper(2)
        eg, ev = gain_value_errors(np.zeros((1, 2)), p, self._cfg(p))
        assert eg == pytest.approx(1.0)
        assert ev == pytest.approx(1.0)

    def test_enkf_gain_on_msd10(self):
        p = mass_spring_damper(10)
        grid = TimeGrid(T=10.0, dt=0.02)
        cfg = ExperimentConfig(grid=grid, num_particles=1000, seed=0)
        result = run_offline(p, cfg)
        from dual_enkf.policy import gain_from_ensemble

        K_est = gain_from_ensemble(result.P[0], p)
        eg, ev = gain_value_errors(K_est, p, self._cfg(p))
        assert eg < 0.1


class TestPoleReport:
    def test_diagonal_unchanged_by_zero_gain(self):
        from dual_enkf.model import LinearQuadraticProblem

        p = LinearQuadraticProblem(
            A=np.diag([1.0, -1.0]), B=[[1.0], [1.0]], C=np.eye(2), R=[[1.0]], P_T=np.eye(2)
        )
        open_poles, closed_poles = pole_report(p, np.zeros((1, 2)))
        assert [z.real for z in open_poles] == [1.0, -1.0]
        assert open_poles == closed_poles

    def test_scalar_closed_loop_pole(self):
        from dual_enkf.model import LinearQuadraticProblem

        p = LinearQuadraticProblem(A=[[1.0]], B=[[1.0]], C=[[1.0]], R=[[1.0]], P_T=[[1.0]])
        _, closed = pole_report(p, [[-(1.0 + math.sqrt(2.0))]])
        assert closed[0].real == pytest.approx(-math.sqrt(2.0))

    def test_enkf_gain_stabilizes_random_canonical(self):
        p = random_canonical(2, seed=42)
        grid = TimeGrid(T=10.0, dt=0.02)
        result = run_offline(p, ExperimentConfig(grid=grid, num_particles=1000, seed=0))
        from dual_enkf.policy import gain_from_ensemble

        _, closed = pole_report(p, gain_from_ensemble(result.P[0], p))
        assert max(z.real for z in closed) < 0

    def test_report_lengths(self):
        p = mass_spring_damper(4)
        open_poles, closed_poles = pole_report(p, np.zeros((2, 4)))
        assert len(open_poles) == 4 and len(closed_poles) == 4


def test_metric_report_serializable():
    report = MetricReport(
        mse=0.1,
        error_gain=0.2,
        error_value=0.3,
        open_loop_poles=[complex(1, 2)],
        closed_loop_poles=[complex(-1, 0)],
        wall_clock_seconds=1.5,
    )
    doc = report.to_dict()
    assert doc["open_loop_poles"] == [[1.0, 2.0]]
    assert doc["mse"] == 0.1
