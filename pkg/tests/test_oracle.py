import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infeasalm.errors import ConfigError, FitError, InfeasibleError, UnsupportedError
from infeasalm.ippa import QuadraticOracle, run_ippa
from infeasalm.model import QuadraticFn, affine_rows_program, build_program, qcqp_example
from infeasalm.oracle import (
    ClosestFeasibleReference,
    active_set_qp_solve,
    fit_rate,
    fit_rate_above_floor,
    grid_closest_feasible,
    least_squares_min_violation,
)
from infeasalm.schedules import Constant, Schedule
from infeasalm.sets import SetBlock


def shift_value(alpha, beta, s1, s2):
    """Optimal value of the shifted QCQP, min -x  s.t.  x^2 + beta <= s1, x + alpha <= s2."""
    if s1 < beta:
        return math.inf
    return max(-math.sqrt(s1 - beta), alpha - s2)


class TestGridClosestFeasible:
    def test_qcqp_infeasible(self):
        ref = grid_closest_feasible(qcqp_example(-1.0, 1.0), (-3.0, 3.0), 10**4)
        np.testing.assert_allclose(ref.sbar, [1.0, 0.0], atol=1e-6)
        assert ref.nu_sbar == pytest.approx(0.0, abs=1e-6)
        np.testing.assert_allclose(ref.xbar, [0.0], atol=1e-6)

    def test_qcqp_shifted_value_formula(self):
        # engine slack is s = C(x) - y; the shifted constraint reads C(x) <= s
        ref = grid_closest_feasible(qcqp_example(-1.0, 1.0))
        assert ref.nu_sbar == pytest.approx(shift_value(-1.0, 1.0, *ref.sbar), abs=1e-6)

    def test_qcqp_alpha_plus_one(self):
        ref = grid_closest_feasible(qcqp_example(1.0, 1.0))
        s1, s2 = ref.sbar
        # the shift is feasible and no shorter feasible shift exists on a fine scan
        assert math.isfinite(shift_value(1.0, 1.0, s1, s2 + 1e-9))
        best = min(
            math.hypot(1.0 + t**2 - 0.0, max(t + 1.0, 0.0))
            for t in np.linspace(-3, 3, 600001)
        )
        assert np.linalg.norm(ref.sbar) == pytest.approx(best, abs=1e-6)
        assert s2 > 0.0

    def test_feasible_program(self):
        ref = grid_closest_feasible(qcqp_example(-1.0, -1.0))
        np.testing.assert_allclose(ref.sbar, [0.0, 0.0], atol=1e-12)
        assert ref.nu_sbar == pytest.approx(-1.0, abs=1e-6)

    def test_too_many_variables(self):
        prog = affine_rows_program(np.eye(3), np.zeros(3), B=np.eye(3), b=np.ones(3))
        with pytest.raises(UnsupportedError):
            grid_closest_feasible(prog)

    def test_json_round_trip(self, tmp_path):
        ref = grid_closest_feasible(qcqp_example(1.0, 1.0), resolution=2000)
        ref.to_json(tmp_path / "ref.json")
        back = ClosestFeasibleReference.from_json(tmp_path / "ref.json")
        np.testing.assert_array_equal(back.sbar, ref.sbar)
        assert back.nu_sbar == ref.nu_sbar


class TestLeastSquares:
    def test_inconsistent_equalities(self):
        prog = affine_rows_program([[1.0]], [0.0], [[1.0], [1.0]], [0.0, 1.0])
        ref = least_squares_min_violation(prog)
        np.testing.assert_allclose(ref.sbar, [0.5, -0.5], atol=1e-12)
        np.testing.assert_allclose(ref.xbar, [0.5], atol=1e-12)

    def test_consistent_equalities(self):
        prog = affine_rows_program(np.eye(2), [0.0, 0.0], [[1.0, 1.0], [1.0, -1.0]], [1.0, 0.0])
        np.testing.assert_allclose(least_squares_min_violation(prog).sbar, [0.0, 0.0], atol=1e-12)

    def test_constant_residual(self):
        prog = build_program(1, [[0.0]], [-1.0], constraints=[(QuadraticFn.affine([0.0], 1.0), SetBlock.nonpos())])
        ref = least_squares_min_violation(prog)
        np.testing.assert_allclose(ref.sbar, [1.0], atol=1e-12)
        assert ref.nu_sbar == -math.inf or not ref.attained

    def test_mixed_rows(self):
        # x = 2 and x <= 0: the best shift splits the conflict
        prog = affine_rows_program([[1.0]], [0.0], [[1.0]], [2.0], [[1.0]], [0.0])
        ref = least_squares_min_violation(prog)
        np.testing.assert_allclose(ref.sbar, [-1.0, 1.0], atol=1e-9)

    def test_requires_affine(self):
        with pytest.raises(UnsupportedError):
            least_squares_min_violation(qcqp_example(-1.0, 1.0))


class TestActiveSet:
    def test_bound(self):
        x, info = active_set_qp_solve(affine_rows_program([[1.0]], [0.0], B=[[1.0]], b=[-1.0]))
        np.testing.assert_allclose(x, [-1.0])
        np.testing.assert_allclose(info.ineq_multipliers, [1.0])

    def test_unconstrained(self):
        x, _ = active_set_qp_solve(affine_rows_program(np.eye(2), [0.0, 0.0]))
        np.testing.assert_allclose(x, [0.0, 0.0])

    def test_vertex(self):
        x, _ = active_set_qp_solve(affine_rows_program([[0.0]], [-1.0], B=[[1.0], [-1.0]], b=[0.0, 2.0]))
        np.testing.assert_allclose(x, [0.0])

    def test_infeasible(self):
        with pytest.raises(InfeasibleError):
            active_set_qp_solve(affine_rows_program([[1.0]], [0.0], B=[[1.0], [-1.0]], b=[-1.0, -1.0]))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_kkt_residuals(self, seed):
        rng = np.random.default_rng(seed)
        M = rng.standard_normal((3, 3))
        prog = affine_rows_program(M @ M.T + np.eye(3), rng.standard_normal(3),
                                   B=rng.standard_normal((3, 3)), b=rng.uniform(0.1, 1.0, 3))
        x, info = active_set_qp_solve(prog)
        assert info.stationarity <= 1e-8 and info.primal <= 1e-8 and info.complementarity <= 1e-8
        assert np.all(info.ineq_multipliers >= 0.0)


class TestFitRate:
    @pytest.mark.parametrize("power", [1.0, 0.5, 2.0])
    def test_exact_power_law(self, power):
        k = np.arange(1, 1001, dtype=float)
        fit = fit_rate(3.0 * k**-power, k)
        assert fit.slope == pytest.approx(-power, abs=0.01)
        assert fit.r_squared == pytest.approx(1.0)

    def test_too_short(self):
        with pytest.raises(FitError):
            fit_rate(np.ones(10), np.arange(1, 11))

    def test_nonpositive(self):
        with pytest.raises(FitError):
            fit_rate(np.zeros(100), np.arange(1, 101))

    def test_shape_mismatch(self):
        with pytest.raises(ConfigError):
            fit_rate(np.ones(100), np.arange(1, 100))

    def test_ippa_quadratic_decay(self):
        run = run_ippa(QuadraticOracle([[1.0]], [0.0]), [1.0], Schedule(Constant(1.0)), max_iter=60)
        sq = run.s_star[:, 0] ** 2
        fit = fit_rate_above_floor(sq, run.cum_gamma)
        assert fit.slope <= -0.9

    def test_floor_only(self):
        assert fit_rate_above_floor(np.zeros(100), np.arange(1, 101)) is None

    def test_floor_prefix(self):
        k = np.arange(1, 201, dtype=float)
        y = 1.0 / k
        y[150:] = 0.0
        fit = fit_rate_above_floor(y, k)
        assert fit.n_points == 150 - 15 and fit.slope == pytest.approx(-1.0, abs=1e-9)
