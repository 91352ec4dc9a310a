import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infeasalm.errors import ConfigError
from infeasalm.schedules import (
    ITEMS,
    AssumptionReport,
    Constant,
    Geometric,
    LogPoly,
    Polynomial,
    PowerLaw,
    Schedule,
    Verdict,
    Zero,
    epsilon,
    gamma,
    parse_eps,
    parse_gamma,
    parse_schedule,
    validate_assumptions,
)

H = Verdict.HOLDS
F = Verdict.FAILS


class TestGamma:
    @pytest.mark.parametrize(
        "family, k, expected",
        [
            (Constant(1.0), 5, 1.0),
            (Polynomial(1.0, 0.5), 3, 2.0),
            (Geometric(1.0, 2.0, 8.0), 10, 8.0),
            (Geometric(1.0, 2.0, 8.0), 2, 4.0),
        ],
    )
    def test_values(self, family, k, expected):
        assert gamma(Schedule(family), k) == pytest.approx(expected, rel=1e-15)

    def test_negative_index(self):
        with pytest.raises(IndexError):
            Schedule().gamma(-1)

    def test_vector_matches_scalar(self):
        s = Schedule(Polynomial(2.0, 0.3))
        np.testing.assert_allclose(s.gammas(6), [s.gamma(k) for k in range(6)], rtol=1e-15)

    def test_uncapped_geometric_saturates_without_overflow(self):
        with np.errstate(all="raise"):
            assert np.isfinite(Schedule(Geometric(1.0, 10.0)).gamma(10_000))

    @pytest.mark.parametrize(
        "ctor",
        [
            lambda: Constant(0.0),
            lambda: Constant(-1.0),
            lambda: Geometric(1.0, 1.0),
            lambda: Geometric(2.0, 2.0, 1.0),
            lambda: Polynomial(1.0, -1.0),
            lambda: Polynomial(0.0, 1.0),
        ],
    )
    def test_invalid_parameters(self, ctor):
        with pytest.raises(ConfigError):
            ctor()


class TestEpsilon:
    @pytest.mark.parametrize(
        "family, k, expected",
        [
            (Zero(), 7, 0.0),
            (LogPoly(1.0), 1, 1.0 / (2.0 * math.log(2.0)) ** 2),
            (PowerLaw(1.0, 2.0), 3, 1.0 / 16.0),
        ],
    )
    def test_values(self, family, k, expected):
        assert epsilon(Schedule(Constant(), family), k) == pytest.approx(expected, rel=1e-15)

    def test_logpoly_reference_value(self):
        assert Schedule(Constant(), LogPoly(1.0)).epsilon(1) == pytest.approx(0.5203422, abs=1e-7)

    def test_index_zero_rejected(self):
        with pytest.raises(IndexError):
            Schedule(Constant(), LogPoly()).epsilon(0)

    def test_epsilons_start_at_one(self):
        s = Schedule(Constant(), PowerLaw(1.0, 1.0))
        np.testing.assert_allclose(s.epsilons(3), [0.5, 1 / 3, 0.25])

    @settings(max_examples=100, deadline=None)
    @given(c=st.floats(0, 10), a=st.floats(0, 4), k=st.integers(1, 10**6))
    def test_nonnegative(self, c, a, k):
        assert Schedule(Constant(), PowerLaw(c, a)).epsilon(k) >= 0.0

    @pytest.mark.parametrize("ctor", [lambda: LogPoly(-1.0), lambda: PowerLaw(-1.0, 1.0), lambda: PowerLaw(1.0, -1.0)])
    def test_invalid_parameters(self, ctor):
        with pytest.raises(ConfigError):
            ctor()


class TestValidateAssumptions:
    def test_constant_logpoly_all_hold(self):
        rep = validate_assumptions(Schedule(Constant(1.0), LogPoly(1.0)))
        assert [rep[k] for k in ITEMS] == [H] * 5

    def test_constant_powerlaw_fails(self):
        rep = validate_assumptions(Schedule(Constant(1.0), PowerLaw(1.0, 1.0)))
        assert rep["A2"] is F and rep["A4"] is F
        assert rep.has_fails

    def test_constant_powerlaw_numeric_agrees(self):
        rep = validate_assumptions(Schedule(Constant(1.0), PowerLaw(1.0, 1.0)), closed_form=False)
        assert rep["A2"] is not H and rep["A4"] is not H

    @pytest.mark.parametrize("closed_form", [True, False])
    def test_constant_zero_all_hold(self, closed_form):
        rep = validate_assumptions(Schedule(Constant(1.0), Zero()), closed_form=closed_form)
        assert [rep[k] for k in ITEMS] == [H] * 5

    @pytest.mark.parametrize("family", [Constant(0.3), Polynomial(1.0, 0.7), Geometric(1.0, 1.5, 50.0)])
    def test_zero_errors_hold_on_error_items(self, family):
        rep = validate_assumptions(Schedule(family, Zero()))
        assert [rep[k] for k in ("A1", "A2", "A3", "A4")] == [H] * 4

    def test_deterministic(self):
        s = Schedule(Polynomial(1.0, 0.5), PowerLaw(1.0, 1.5))
        a = validate_assumptions(s, closed_form=False, horizon=10**4)
        b = validate_assumptions(s, closed_form=False, horizon=10**4)
        assert a.to_dict() == b.to_dict()

    def test_short_horizon_rejected(self):
        with pytest.raises(ConfigError):
            validate_assumptions(Schedule(), horizon=999)

    def test_report_has_five_items(self):
        rep = validate_assumptions(Schedule(Constant(), LogPoly()))
        assert tuple(rep.to_dict()["items"]) == ITEMS
        assert len(rep.format().splitlines()) == 6

    def test_report_rejects_partial_items(self):
        with pytest.raises(ValueError):
            AssumptionReport({}, 1000, ())


class TestParsing:
    @pytest.mark.parametrize(
        "text, expected",
        [
            ("const:1", Constant(1.0)),
            ("const:gamma=2.5", Constant(2.5)),
            ("poly:g0=1,p=0.5", Polynomial(1.0, 0.5)),
            ("geom:g0=1,ratio=2,cap=8", Geometric(1.0, 2.0, 8.0)),
            ("geom:1,2", Geometric(1.0, 2.0)),
        ],
    )
    def test_gamma(self, text, expected):
        assert parse_gamma(text) == expected

    @pytest.mark.parametrize(
        "text, expected",
        [
            ("zero", Zero()),
            ("logpoly:c=1", LogPoly(1.0)),
            ("powerlaw:c=1,a=1", PowerLaw(1.0, 1.0)),
            ("eps=powerlaw:2,3", PowerLaw(2.0, 3.0)),
        ],
    )
    def test_eps(self, text, expected):
        assert parse_eps(text) == expected

    @pytest.mark.parametrize(
        "text",
        ["nope:1", "const:x=1", "const:1,2", "const:abc", "const:1,gamma=2"],
    )
    def test_bad_gamma(self, text):
        with pytest.raises(ConfigError):
            parse_gamma(text)

    def test_schedule_spec_round_trip(self):
        s = parse_schedule("poly:g0=2,p=0.25", "powerlaw:c=0.5,a=3")
        g, _, e = s.spec().partition(" eps=")
        assert parse_schedule(g, e) == s
