import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from infeasalm.errors import DimensionError, InfeasibleEliminationError, ModelError, NotStronglyConvexError
from infeasalm.model import (
    Constraint,
    ConvexProgram,
    QuadraticFn,
    affine_rows_program,
    build_program,
    canonical_violation,
    constraint_map,
    dual_oracle_equality_qp,
    objective_value,
    qcqp_example,
    reparameterize_equalities,
)
from infeasalm.sets import DomainSet, SetBlock


def one_d(Q, q, cons=()):
    return build_program(1, [[Q]], [q], constraints=cons)


class TestQuadraticFn:
    def test_value_and_gradient(self):
        f = QuadraticFn([[2.0, 0.0], [0.0, 4.0]], [1.0, -1.0], 3.0)
        x = np.array([1.0, 2.0])
        assert f.value(x) == pytest.approx(0.5 * (2 + 16) + 1 - 2 + 3)
        np.testing.assert_allclose(f.gradient(x), [3.0, 7.0])

    def test_affine_constructor(self):
        f = QuadraticFn.affine([1.0, 2.0], -1.0)
        assert f.is_affine and f.value([1.0, 1.0]) == 2.0

    def test_asymmetric_rejected(self):
        with pytest.raises(ModelError):
            QuadraticFn([[1.0, 1.0], [0.0, 1.0]], [0.0, 0.0])

    def test_convex_required(self):
        with pytest.raises(ModelError):
            QuadraticFn([[-1.0]], [0.0], convex_required=True)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            QuadraticFn([[1.0]], [0.0, 1.0])

    def test_compose_affine(self):
        f = QuadraticFn([[1.0, 0.0], [0.0, 3.0]], [1.0, 2.0], 0.5)
        x0, N = np.array([1.0, -1.0]), np.array([[1.0], [2.0]])
        g = f.compose_affine(x0, N)
        for z in (-1.0, 0.0, 2.5):
            assert g.value([z]) == pytest.approx(f.value(x0 + N[:, 0] * z))


class TestObjectiveAndConstraints:
    @pytest.mark.parametrize(
        "Q, q, x, expected",
        [(1.0, 0.0, 2.0, 2.0), (0.0, -1.0, 3.0, -3.0)],
    )
    def test_objective_value(self, Q, q, x, expected):
        assert objective_value(one_d(Q, q), [x]) == expected

    def test_qcqp_objective(self):
        assert objective_value(qcqp_example(-1.0, 1.0), [0.0]) == 0.0

    def test_qcqp_constraint_map(self):
        np.testing.assert_allclose(constraint_map(qcqp_example(-1.0, 1.0), [0.0]), [1.0, -1.0])

    def test_equality_constraint_map(self):
        prog = one_d(0.0, 0.0, [(QuadraticFn.affine([1.0], -1.0), SetBlock.zero(1))])
        np.testing.assert_allclose(constraint_map(prog, [1.0]), [0.0])

    def test_two_inequalities(self):
        prog = one_d(0.0, 0.0, [
            (QuadraticFn.affine([1.0], 0.0), SetBlock.nonpos()),
            (QuadraticFn.affine([-1.0], 1.0), SetBlock.nonpos()),
        ])
        # rows are x and 1 - x
        np.testing.assert_allclose(constraint_map(prog, [0.5]), [0.5, 0.5])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            objective_value(one_d(1.0, 0.0), [1.0, 2.0])


class TestCanonicalViolation:
    def test_qcqp(self):
        v = canonical_violation(qcqp_example(-1.0, 1.0), [0.0])
        np.testing.assert_allclose(v.s, [1.0, 0.0])
        assert v.norm == pytest.approx(1.0)

    def test_feasible_point(self):
        prog = one_d(1.0, 0.0, [(QuadraticFn.affine([1.0], 1.0), SetBlock.nonpos())])
        np.testing.assert_array_equal(canonical_violation(prog, [-3.0]).s, [0.0])

    @pytest.mark.parametrize("x", [-10.0, 0.0, 7.0])
    def test_constant_residual(self, x):
        prog = one_d(0.0, -1.0, [(QuadraticFn.affine([0.0], 1.0), SetBlock.nonpos())])
        np.testing.assert_array_equal(canonical_violation(prog, [x]).s, [1.0])

    @settings(max_examples=100, deadline=None)
    @given(x=st.floats(-5, 5), y=arrays(np.float64, 2, elements=st.floats(-50, 0)))
    def test_minimal_among_slacks(self, x, y):
        prog = qcqp_example(1.0, 1.0)
        c = constraint_map(prog, [x])
        assert canonical_violation(prog, [x]).norm <= np.linalg.norm(c - y) + 1e-12


class TestProgramRules:
    def test_nonconvex_objective(self):
        with pytest.raises(ModelError) as info:
            one_d(-1.0, 0.0)
        assert info.value.rule == "objective requires PSD Q"

    def test_quadratic_equality_rejected(self):
        with pytest.raises(ModelError) as info:
            one_d(0.0, 0.0, [(QuadraticFn([[2.0]], [0.0], 0.0), SetBlock.zero(1))])
        assert info.value.rule == "quadratic constraints require a Nonpos block"

    def test_nonconvex_inequality_rejected(self):
        with pytest.raises(ModelError) as info:
            one_d(0.0, 0.0, [(QuadraticFn([[-1.0]], [0.0], 0.0), SetBlock.nonpos())])
        assert info.value.rule == "inequality blocks require PSD Q"

    def test_block_size_mismatch(self):
        with pytest.raises(DimensionError):
            Constraint((QuadraticFn.affine([1.0], 0.0),), SetBlock.zero(2))

    def test_m_counts_rows(self):
        prog = affine_rows_program(np.eye(2), [0.0, 0.0], [[1.0, 1.0]], [0.0], np.eye(2), [1.0, 1.0])
        assert prog.m == 3
        assert prog.is_affine

    def test_free_domain_default(self):
        prog = ConvexProgram(1, QuadraticFn([[1.0]], [0.0]), DomainSet.free(1))
        assert prog.m == 0


class TestReparameterize:
    def test_null_space_basis(self):
        prog = affine_rows_program(np.eye(2), [0.0, 0.0], [[1.0, 1.0]], [0.0])
        reduced, rec = reparameterize_equalities(prog)
        assert reduced.n == 1 and reduced.m == 0
        np.testing.assert_allclose(rec.N[:, 0], np.array([1.0, -1.0]) / np.sqrt(2.0), atol=1e-14)

    def test_identity_without_equalities(self):
        prog = affine_rows_program(np.eye(2), [0.0, 0.0], B=np.eye(2), b=[1.0, 1.0])
        reduced, rec = reparameterize_equalities(prog)
        assert reduced is prog
        np.testing.assert_array_equal(rec([1.0, 2.0]), [1.0, 2.0])

    def test_inconsistent(self):
        prog = affine_rows_program(np.eye(1), [0.0], [[1.0], [1.0]], [1.0, 2.0])
        with pytest.raises(InfeasibleEliminationError):
            reparameterize_equalities(prog)

    @settings(max_examples=50, deadline=None)
    @given(z=arrays(np.float64, 1, elements=st.floats(-100, 100)))
    def test_recovery_preserves_values(self, z):
        prog = affine_rows_program(
            np.diag([1.0, 2.0, 3.0]), [1.0, -1.0, 0.5], [[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]], [1.0, 2.0],
            B=[[1.0, 0.0, 0.0]], b=[0.3],
        )
        reduced, rec = reparameterize_equalities(prog)
        x = rec(z)
        np.testing.assert_allclose(x[0] + x[1], 1.0, atol=1e-10 * (1 + abs(z[0])))
        np.testing.assert_allclose(x[1] + x[2], 2.0, atol=1e-10 * (1 + abs(z[0])))
        assert reduced.objective_value(z) == pytest.approx(prog.objective_value(x), rel=1e-10, abs=1e-10)
        np.testing.assert_allclose(reduced.constraint_map(z), prog.constraint_map(x)[2:], atol=1e-10 * (1 + abs(z[0])))


class TestDualOracle:
    @pytest.mark.parametrize(
        "H, b, lam, expected",
        [
            (1.0, 0.0, 3.0, 4.5),      # 0.5 lam^2
            (1.0, 1.0, 3.0, 1.5),      # 0.5 lam^2 - lam
            (2.0, 3.0, 2.0, -5.0),     # lam^2 / 4 - 3 lam
        ],
    )
    def test_closed_form(self, H, b, lam, expected):
        prog = affine_rows_program([[H]], [0.0], [[1.0]], [b])
        assert dual_oracle_equality_qp(prog).value([lam]) == pytest.approx(expected)

    def test_minimizer(self):
        o = dual_oracle_equality_qp(affine_rows_program([[1.0]], [0.0], [[1.0]], [1.0]))
        grid = np.linspace(-2, 4, 6001)
        vals = [o.value([g]) for g in grid]
        assert grid[int(np.argmin(vals))] == pytest.approx(1.0, abs=1e-3)

    @pytest.mark.parametrize("lam", [-2.0, 0.0, 0.7, 3.0])
    def test_sup_over_grid(self, lam):
        # h(lam) = sup_x <lam, Ax - b> - f(x) for f = x^2 - x, A = 2, b = 1
        prog = affine_rows_program([[2.0]], [-1.0], [[2.0]], [1.0])
        x = np.linspace(-20, 20, 400001)
        brute = np.max(lam * (2 * x - 1) - (x**2 - x))
        assert dual_oracle_equality_qp(prog).value([lam]) == pytest.approx(brute, abs=1e-6)

    def test_singular_hessian(self):
        with pytest.raises(NotStronglyConvexError):
            dual_oracle_equality_qp(affine_rows_program([[0.0]], [1.0], [[1.0]], [1.0]))
