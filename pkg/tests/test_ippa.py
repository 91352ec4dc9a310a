import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from infeasalm.errors import ConfigError, ConjugateInfiniteError, DimensionError, ScheduleRejectedError
from infeasalm.ippa import (
    ErrorInjector,
    LinearOracle,
    MaxAffineOracle,
    QuadraticOracle,
    conjugate_value,
    diagnostics,
    firm_nonexpansive_gap,
    ippa_step,
    min_norm_hull,
    min_norm_subgradient,
    parse_oracle,
    prox,
    run_ippa,
    vertical_distance,
)
from infeasalm.schedules import Constant, LogPoly, PowerLaw, Schedule

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def abs_oracle():
    return MaxAffineOracle([[-1.0], [1.0]], [0.0, 0.0])


def two_lines():
    # h(lam) = max(lam, 2 lam)
    return MaxAffineOracle([[1.0], [2.0]], [0.0, 0.0])


def oracles():
    return [
        LinearOracle([1.0, 2.0]),
        QuadraticOracle(np.diag([1.0, 0.0]), [0.0, 1.0]),
        QuadraticOracle([[2.0, 0.5], [0.5, 1.0]], [1.0, -1.0], 0.3),
        MaxAffineOracle([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]], [0.0, 0.5, -0.2]),
        MaxAffineOracle([[0.5, 0.2], [1.0, 1.0], [2.0, -1.0], [0.5, 0.5]], [0.1, -0.3, 0.0, 0.2]),
    ]


ORACLE_IDS = ["linear", "quad-singular", "quad-pd", "maxaff-3", "maxaff-4"]


class TestProx:
    def test_linear(self):
        np.testing.assert_allclose(prox(LinearOracle([1.0, 2.0]), [0.0, 0.0], 0.5), [-0.5, -1.0])

    def test_quadratic(self):
        np.testing.assert_allclose(prox(QuadraticOracle([[1.0]], [0.0]), [2.0], 1.0), [1.0])

    def test_abs_soft_threshold(self):
        np.testing.assert_allclose(prox(abs_oracle(), [3.0], 1.0), [2.0], atol=1e-14)

    @pytest.mark.parametrize("lam", [-3.0, -0.4, 0.0, 0.9, 3.0])
    def test_abs_against_grid(self, lam):
        grid = np.linspace(-5, 5, 200001)
        obj = np.abs(grid) + (lam - grid) ** 2 / 2.0
        assert prox(abs_oracle(), [lam], 1.0)[0] == pytest.approx(grid[np.argmin(obj)], abs=1e-4)

    def test_nonpositive_gamma(self):
        with pytest.raises(ConfigError):
            prox(LinearOracle([1.0]), [0.0], 0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            prox(LinearOracle([1.0]), [0.0, 1.0], 1.0)

    def test_too_many_pieces(self):
        with pytest.raises(ConfigError):
            MaxAffineOracle(np.ones((17, 1)), np.zeros(17))

    @pytest.mark.parametrize("oracle", oracles(), ids=ORACLE_IDS)
    @settings(max_examples=60, deadline=None)
    @given(lam=arrays(np.float64, 2, elements=finite), d=arrays(np.float64, 2, elements=finite),
           gamma=st.floats(0.05, 20))
    def test_minimizes_prox_objective(self, oracle, lam, d, gamma):
        p = oracle.prox(lam, gamma)

        def obj(mu):
            return oracle.value(mu) + np.sum((lam - mu) ** 2) / (2 * gamma)

        base = obj(p)
        for t in (1e-3, 1e-1, 1.0):
            assert base <= obj(p + t * d) + 1e-9 * (1 + abs(base))

    @pytest.mark.parametrize("oracle", oracles(), ids=ORACLE_IDS)
    @settings(max_examples=60, deadline=None)
    @given(l1=arrays(np.float64, 2, elements=finite), l2=arrays(np.float64, 2, elements=finite),
           gamma=st.floats(0.05, 20))
    def test_firmly_nonexpansive(self, oracle, l1, l2, gamma):
        scale = 1.0 + np.sum((l1 - l2) ** 2)
        assert firm_nonexpansive_gap(oracle, l1, l2, gamma) >= -1e-10 * scale

    @pytest.mark.parametrize("oracle", oracles(), ids=ORACLE_IDS)
    @settings(max_examples=60, deadline=None)
    @given(lam=arrays(np.float64, 2, elements=finite), gamma=st.floats(0.05, 20))
    def test_fenchel_young_equality(self, oracle, lam, gamma):
        p, s = oracle.prox_pair(lam, gamma)
        gap = oracle.value(p) + oracle.conjugate(s) - p @ s
        assert abs(gap) <= 1e-9 * (1 + abs(p @ s) + abs(oracle.value(p)))
        np.testing.assert_allclose(s, (lam - p) / gamma, atol=1e-8 * (1 + np.abs(lam).max() / gamma))


class TestIppaStep:
    def test_linear_exact(self):
        st_ = ippa_step(LinearOracle([2.0]), [0.0], 1.0, 0.0)
        np.testing.assert_allclose(st_.lam_star, [-2.0])
        np.testing.assert_allclose(st_.s_star, [2.0])
        np.testing.assert_allclose(st_.lam_next, [-2.0])
        np.testing.assert_allclose(st_.s_next, [2.0])

    def test_fixed_direction_error(self):
        inj = ErrorInjector("fixed", direction=[1.0])
        st_ = ippa_step(QuadraticOracle([[1.0]], [0.0]), [2.0], 1.0, 0.1, inj)
        np.testing.assert_allclose(st_.lam_star, [1.0])
        np.testing.assert_allclose(st_.lam_next, [1.1])
        np.testing.assert_allclose(st_.s_next, [0.9])
        assert st_.err_norm == pytest.approx(0.1)

    @pytest.mark.parametrize("oracle", oracles(), ids=ORACLE_IDS)
    def test_exact_case_coincides(self, oracle):
        st_ = ippa_step(oracle, [0.7, -1.3], 0.8, 0.0, ErrorInjector("random", seed=3))
        np.testing.assert_array_equal(st_.lam_next, st_.lam_star)
        np.testing.assert_allclose(st_.s_next, st_.s_star, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(eps=st.floats(0, 5), seed=st.integers(0, 2**31))
    def test_error_norm_bounded(self, eps, seed):
        inj = ErrorInjector("random", seed=seed, magnitude="uniform")
        st_ = ippa_step(QuadraticOracle(np.eye(3), np.ones(3)), np.ones(3), 1.0, eps, inj)
        assert st_.err_norm <= eps * (1 + 1e-12)

    @pytest.mark.parametrize("gamma, eps", [(0.0, 0.0), (1.0, -1.0)])
    def test_bad_arguments(self, gamma, eps):
        with pytest.raises(ConfigError):
            ippa_step(LinearOracle([1.0]), [0.0], gamma, eps)

    def test_injector_requires_seed(self):
        with pytest.raises(ConfigError):
            ErrorInjector("random")

    def test_injector_requires_direction(self):
        with pytest.raises(ConfigError):
            ErrorInjector("fixed")

    def test_random_injector_reproducible(self):
        a, b = ErrorInjector("random", seed=11), ErrorInjector("random", seed=11)
        np.testing.assert_array_equal(a.perturbation(1.0, 4), b.perturbation(1.0, 4))


class TestRunIppa:
    def test_linear_constant_subgradient(self):
        run = run_ippa(LinearOracle([1.0, 2.0]), [3.0, -1.0], Schedule(Constant(0.7)), max_iter=20)
        np.testing.assert_allclose(run.s_star, np.tile([1.0, 2.0], (20, 1)))

    def test_quadratic_geometric_decay(self):
        run = run_ippa(QuadraticOracle([[1.0]], [0.0]), [1.0], Schedule(Constant(1.0)), max_iter=10)
        np.testing.assert_allclose(run.lam[:, 0], 2.0 ** -np.arange(11), rtol=1e-15)
        assert abs(run.s_star[-1, 0]) <= 2.0**-10

    def test_two_lines_settles_on_min_norm_slope(self):
        run = run_ippa(two_lines(), [5.0], Schedule(Constant(1.0)), max_iter=8)
        np.testing.assert_allclose(run.s_star[:, 0], [2, 2, 1, 1, 1, 1, 1, 1], atol=1e-12)

    def test_rejected_schedule(self):
        with pytest.raises(ScheduleRejectedError):
            run_ippa(LinearOracle([1.0]), [0.0], Schedule(Constant(1.0), PowerLaw(1.0, 1.0)), max_iter=3)

    def test_forced_schedule(self):
        run = run_ippa(LinearOracle([1.0]), [0.0], Schedule(Constant(1.0), PowerLaw(1.0, 1.0)),
                       ErrorInjector("fixed", direction=[1.0]), max_iter=3, force=True)
        assert run.n_iter == 3

    @pytest.mark.parametrize("oracle", oracles(), ids=ORACLE_IDS)
    def test_increment_bound(self, oracle):
        sched = Schedule(Constant(0.5), LogPoly(1.0))
        run = run_ippa(oracle, [4.0, -3.0], sched, ErrorInjector("random", seed=5), max_iter=200)
        dg = diagnostics(run)
        assert np.all(dg.increment_excess <= 1e-9)

    def test_diagnostics_shapes(self):
        run = run_ippa(QuadraticOracle(np.eye(2), [0.0, 0.0]), [1.0, 1.0], Schedule(), max_iter=15)
        dg = diagnostics(run)
        assert dg.dist_s_to_sbar.shape == (15,) and dg.increment_excess.shape == (14,)
        np.testing.assert_allclose(dg.cum_gamma, np.arange(1, 16))


class TestSbarAndConjugate:
    @pytest.mark.parametrize(
        "oracle, expected",
        [
            (LinearOracle([1.0, 2.0]), [1.0, 2.0]),
            (QuadraticOracle([[1.0]], [-3.0]), [0.0]),
            (two_lines(), [1.0]),
            (QuadraticOracle(np.diag([1.0, 0.0]), [2.0, 3.0]), [0.0, 3.0]),
        ],
    )
    def test_sbar(self, oracle, expected):
        np.testing.assert_allclose(min_norm_subgradient(oracle), expected, atol=1e-14)

    def test_min_norm_hull_segment(self):
        np.testing.assert_allclose(min_norm_hull([[1.0, 1.0], [1.0, -1.0]]), [1.0, 0.0], atol=1e-14)

    def test_vertical_distance_quadratic(self):
        assert vertical_distance(QuadraticOracle([[1.0]], [0.0]), [2.0]) == pytest.approx(2.0)

    def test_vertical_distance_linear(self):
        assert vertical_distance(LinearOracle([1.0, -4.0], 2.0), [9.0, 3.0]) == pytest.approx(0.0, abs=1e-12)

    def test_vertical_distance_two_lines(self):
        assert vertical_distance(two_lines(), [-3.0]) == pytest.approx(0.0, abs=1e-14)

    @pytest.mark.parametrize(
        "oracle, s, expected",
        [
            (LinearOracle([1.0]), [1.0], 0.0),
            (LinearOracle([1.0]), [1.5], math.inf),
            (QuadraticOracle([[1.0]], [0.0]), [1.0], 0.5),
            (two_lines(), [1.5], 0.0),
            (two_lines(), [2.5], math.inf),
        ],
    )
    def test_conjugate(self, oracle, s, expected):
        assert conjugate_value(oracle, s) == pytest.approx(expected, abs=1e-14)

    def test_conjugate_infinite_at_sbar(self):
        # h(lam) = lam_1^2 / 2 + lam_2 grows linearly in lam_2; h*(sbar) is finite.
        o = QuadraticOracle(np.diag([1.0, 0.0]), [0.0, 1.0])
        assert math.isfinite(o.conjugate(o.sbar()))

    def test_vertical_distance_requires_finite_conjugate(self):
        class Broken(LinearOracle):
            def conjugate(self, s):
                return math.inf

        with pytest.raises(ConjugateInfiniteError):
            vertical_distance(Broken([1.0]), [0.0])

    @settings(max_examples=80, deadline=None)
    @given(s=st.floats(-3, 3), lam=st.floats(-10, 10))
    def test_two_lines_conjugate_vs_grid(self, s, lam):
        # h*(s) >= lam s - h(lam) for every lam
        o = two_lines()
        assert o.conjugate([s]) >= lam * s - o.value([lam]) - 1e-12


class TestParseOracle:
    def test_linear(self):
        o = parse_oracle("linear:a=1,2")
        np.testing.assert_array_equal(o.a, [1.0, 2.0])

    def test_quadratic_identity(self):
        o = parse_oracle("quadratic:P=I,b=0")
        np.testing.assert_array_equal(o.P, [[1.0]])

    def test_maxaffine(self):
        o = parse_oracle("maxaffine:slopes=[[1],[2]],intercepts=[0,0]")
        assert o.value([-3.0]) == -3.0

    def test_spec_round_trip(self):
        for o in oracles():
            back = parse_oracle(o.spec())
            lam = np.array([0.3, -1.7])
            assert back.value(lam) == pytest.approx(o.value(lam), rel=1e-15)

    @pytest.mark.parametrize("text", ["cubic:a=1", "linear:b=1", "maxaffine:intercepts=[0]", "linear:a=x"])
    def test_bad_spec(self, text):
        with pytest.raises(ConfigError):
            parse_oracle(text)
