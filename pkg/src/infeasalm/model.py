"""Convex programs with quadratic objective and quadratic/affine constraints.

A program is

    minimize    f(x)            over x in X
    subject to  C(x) in K

with ``f`` a convex quadratic, ``C`` a stack of scalar quadratics and ``K`` a
product of simple blocks.  Quadratic (curved) rows are only accepted on
nonpositive blocks with a PSD matrix; together with affine rows everywhere
else this keeps the set ``{(x, s) : s in C(x) - K}`` convex.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DimensionError,
    InfeasibleEliminationError,
    ModelError,
    NotStronglyConvexError,
)
from .sets import BlockKind, DomainKind, DomainSet, ProductSet, SetBlock

SYM_TOL = 1e-12
PSD_TOL = 1e-8


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class QuadraticFn:
    """``x -> 0.5 x^T Q x + q^T x + r``."""

    Q: np.ndarray
    q: np.ndarray
    r: float = 0.0
    convex_required: bool = False

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        n = q.size
        Q = np.asarray(self.Q, dtype=float)
        if Q.ndim == 0 and n == 1:
            Q = Q.reshape(1, 1)
        if Q.shape != (n, n):
            raise DimensionError(f"Q must be {n}x{n}, got {Q.shape}")
        if not np.allclose(Q, Q.T, rtol=0.0, atol=SYM_TOL):
            raise ModelError("Q must be symmetric", rule="Q must be symmetric")
        object.__setattr__(self, "Q", _frozen(Q))
        object.__setattr__(self, "q", _frozen(q))
        object.__setattr__(self, "r", float(self.r))
        if self.convex_required and not self.is_convex():
            raise ModelError("Q must be positive semidefinite", rule="Q must be PSD")

    @classmethod
    def affine(cls, q, r=0.0):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        return cls(np.zeros((q.size, q.size)), q, r)

    @property
    def n(self):
        return self.q.size

    @property
    def is_affine(self):
        return not np.any(self.Q)

    def is_convex(self, tol=PSD_TOL):
        if self.is_affine:
            return True
        return float(np.linalg.eigvalsh(self.Q).min()) >= -tol

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.Q @ x + self.q @ x + self.r)

    def gradient(self, x):
        return self.Q @ np.asarray(x, dtype=float) + self.q

    def compose_affine(self, x0, N):
        """Return ``z -> self(x0 + N z)`` as a new quadratic."""
        x0 = np.asarray(x0, dtype=float)
        N = np.atleast_2d(np.asarray(N, dtype=float))
        QN = self.Q @ N
        return QuadraticFn(
            0.5 * (N.T @ QN + (N.T @ QN).T),
            N.T @ (self.Q @ x0 + self.q),
            self.value(x0),
        )

    def to_dict(self):
        return {"Q": self.Q.tolist(), "q": self.q.tolist(), "r": self.r}


@dataclass(frozen=True)
class Constraint:
    """Rows ``fns`` (one scalar quadratic per component) constrained to ``set``."""

    fns: tuple
    set: SetBlock

    def __post_init__(self):
        fns = self.fns
        if isinstance(fns, QuadraticFn):
            fns = (fns,)
        fns = tuple(fns)
        object.__setattr__(self, "fns", fns)
        if len(fns) != self.set.dim:
            raise DimensionError(
                f"constraint has {len(fns)} rows but its set has dimension {self.set.dim}"
            )


@dataclass(frozen=True)
class ViolationVector:
    """Constraint violation ``s = C(x) - y`` with ``y`` in ``K``."""

    s: np.ndarray

    @property
    def norm(self):
        return float(np.linalg.norm(self.s))


@dataclass(frozen=True)
class AffineRecovery:
    """Maps reduced variables back: ``x = x0 + N z``."""

    x0: np.ndarray
    N: np.ndarray

    def __call__(self, z):
        return self.x0 + self.N @ np.asarray(z, dtype=float)


@dataclass(frozen=True)
class ConvexProgram:
    """Validated convex program; see the module docstring for the rules."""

    n: int
    objective: QuadraticFn
    domain: DomainSet
    constraints: tuple = ()
    name: str = field(default="", compare=False)

    def __post_init__(self):
        cons = tuple(self.constraints)
        object.__setattr__(self, "constraints", cons)
        if self.objective.n != self.n:
            raise DimensionError("objective dimension does not match n")
        if self.domain.dim != self.n:
            raise DimensionError("domain dimension does not match n")
        if not self.objective.is_convex():
            raise ModelError("objective Q is not PSD", rule="objective requires PSD Q")
        for ci, con in enumerate(cons):
            for fn in con.fns:
                if fn.n != self.n:
                    raise DimensionError(f"constraint {ci} has wrong dimension")
                if fn.is_affine:
                    continue
                if con.set.kind is not BlockKind.NONPOS:
                    raise ModelError(
                        f"constraint {ci}: curved rows need a nonpos block",
                        rule="quadratic constraints require a Nonpos block",
                    )
                if not fn.is_convex():
                    raise ModelError(
                        f"constraint {ci}: Q is not PSD",
                        rule="inequality blocks require PSD Q",
                    )
        rows = [fn for con in cons for fn in con.fns]
        m = len(rows)
        Qc = np.zeros((m, self.n, self.n))
        qc = np.zeros((m, self.n))
        rc = np.zeros(m)
        for i, fn in enumerate(rows):
            Qc[i], qc[i], rc[i] = fn.Q, fn.q, fn.r
        object.__setattr__(self, "_Qc", _frozen(Qc))
        object.__setattr__(self, "_qc", _frozen(qc))
        object.__setattr__(self, "_rc", _frozen(rc))
        object.__setattr__(self, "_curved", np.array([not fn.is_affine for fn in rows], dtype=bool))
        if cons:
            object.__setattr__(self, "_K", ProductSet(tuple(c.set for c in cons)))
        else:
            object.__setattr__(self, "_K", None)

    @property
    def m(self):
        return int(self._rc.size)

    @property
    def K(self):
        """The product constraint set (``None`` when unconstrained)."""
        return self._K

    @property
    def stacked(self):
        """``(Qc, qc, rc)``: row ``i`` of ``C`` is ``0.5 x'Qc[i]x + qc[i]'x + rc[i]``."""
        return self._Qc, self._qc, self._rc

    @property
    def curved_rows(self):
        return self._curved

    @property
    def is_affine(self):
        return not bool(self._curved.any())

    def _x(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.n,):
            raise DimensionError(f"x must have length {self.n}, got shape {x.shape}")
        return x

    def objective_value(self, x):
        return self.objective.value(self._x(x))

    def constraint_map(self, x):
        x = self._x(x)
        if self.m == 0:
            return np.zeros(0)
        lin = self._qc @ x + self._rc
        if not self._curved.any():
            return lin
        quad = 0.5 * np.einsum("i,kij,j->k", x, self._Qc, x)
        return lin + quad

    def jacobian(self, x):
        x = self._x(x)
        return self._Qc @ x + self._qc

    def project_K(self, z):
        if self.m == 0:
            return np.zeros(0)
        return self._K.project(z)

    def canonical_violation(self, x):
        c = self.constraint_map(x)
        return ViolationVector(c - self.project_K(c))

    def slack_projection_gap(self, x, y):
        """``||y - Proj_K(C(x))||``."""
        c = self.constraint_map(x)
        return float(np.linalg.norm(np.asarray(y, dtype=float) - self.project_K(c)))

    def affine_rows(self):
        """Return ``(A, c0)`` with ``C(x) = A x + c0`` (affine programs only)."""
        if not self.is_affine:
            raise ModelError("program has curved constraint rows", rule="affine constraints only")
        return np.array(self._qc), np.array(self._rc)

    def equality_rows(self):
        """Indices of the rows constrained to a single point (zero or singleton blocks)."""
        idx = []
        off = 0
        for con in self.constraints:
            if con.set.kind in (BlockKind.ZERO, BlockKind.SINGLETON):
                idx.extend(range(off, off + con.set.dim))
            off += con.set.dim
        return idx

    def with_constraints(self, constraints, domain=None, name=None):
        return ConvexProgram(
            self.n,
            self.objective,
            self.domain if domain is None else domain,
            tuple(constraints),
            self.name if name is None else name,
        )

    def to_dict(self):
        return {
            "n": self.n,
            "name": self.name,
            "objective": self.objective.to_dict(),
            "domain": self.domain.to_dict(),
            "constraints": [
                {"fn": [fn.to_dict() for fn in con.fns], "set": con.set.to_dict()}
                for con in self.constraints
            ],
        }


def objective_value(prog, x):
    return prog.objective_value(x)


def constraint_map(prog, x):
    return prog.constraint_map(x)


def canonical_violation(prog, x):
    return prog.canonical_violation(x)


def reparameterize_equalities(prog, tol=1e-10):
    """Eliminate the zero/singleton blocks by writing ``x = x0 + N z``.

    ``x0`` is the minimum-norm solution of the equality system and the
    columns of ``N`` are an orthonormal null-space basis (from the SVD, each
    column sign-normalised so its first nonzero entry is positive).

    Returns
    -------
    reduced : ConvexProgram
        Program in ``z`` with the equality blocks removed.
    recovery : AffineRecovery
        Callable mapping ``z`` back to ``x``.
    """
    if not prog.domain.is_unbounded_free:
        raise ModelError("elimination needs a free domain", rule="free domain required")
    eq_cons = [c for c in prog.constraints if c.set.kind in (BlockKind.ZERO, BlockKind.SINGLETON)]
    rest = [c for c in prog.constraints if c.set.kind not in (BlockKind.ZERO, BlockKind.SINGLETON)]
    if not eq_cons:
        ident = AffineRecovery(_frozen(np.zeros(prog.n)), _frozen(np.eye(prog.n)))
        return prog, ident

    A = np.array([fn.q for c in eq_cons for fn in c.fns])
    a = np.concatenate([c.set.lo - np.array([fn.r for fn in c.fns]) for c in eq_cons])

    U, sig, Vt = np.linalg.svd(A)
    rank = int(np.sum(sig > tol * max(1.0, sig[0] if sig.size else 0.0)))
    V = Vt.T
    x0 = V[:, :rank] @ ((U[:, :rank].T @ a) / sig[:rank])
    resid = np.linalg.norm(A @ x0 - a)
    if resid > tol * max(1.0, np.linalg.norm(a)) * 10:
        raise InfeasibleEliminationError(
            f"equality system is inconsistent (least-squares residual {resid:.3e})"
        )
    N = V[:, rank:]
    if N.shape[1] == 0:
        raise ModelError("equalities leave no free variable", rule="nontrivial null space required")
    for j in range(N.shape[1]):
        col = N[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-14)
        if nz.size and col[nz[0]] < 0:
            N[:, j] = -col

    objective = prog.objective.compose_affine(x0, N)
    new_cons = tuple(
        Constraint(tuple(fn.compose_affine(x0, N) for fn in c.fns), c.set) for c in rest
    )
    reduced = ConvexProgram(
        N.shape[1],
        objective,
        DomainSet.free(N.shape[1]),
        new_cons,
        name=(prog.name + " [eliminated]") if prog.name else "eliminated",
    )
    return reduced, AffineRecovery(_frozen(x0), _frozen(N))


def dual_oracle_equality_qp(prog):
    """Quadratic prox oracle for the negative dual of a strictly convex equality QP.

    With ``C(x) = A x - b`` (after moving the block targets to the right),
    ``h(lam) = 0.5 (A^T lam - q)^T H^{-1} (A^T lam - q) - b^T lam - r``.
    """
    from .ippa import QuadraticOracle

    if prog.domain.kind is not DomainKind.FREE and not prog.domain.is_unbounded_free:
        raise ModelError("dual oracle needs a free domain", rule="free domain required")
    if prog.m == 0 or not all(
        c.set.kind in (BlockKind.ZERO, BlockKind.SINGLETON) for c in prog.constraints
    ):
        raise ModelError("dual oracle needs equality blocks only", rule="equality blocks only")
    if not prog.is_affine:
        raise ModelError("dual oracle needs affine constraints", rule="affine constraints only")
    H = prog.objective.Q
    if float(np.linalg.eigvalsh(H).min()) < PSD_TOL:
        raise NotStronglyConvexError("objective Hessian is not positive definite")
    A, c0 = prog.affine_rows()
    targets = np.concatenate([c.set.lo for c in prog.constraints])
    b = targets - c0
    q = prog.objective.q
    Hinv_At = np.linalg.solve(H, A.T)
    Hinv_q = np.linalg.solve(H, q)
    P = A @ Hinv_At
    P = 0.5 * (P + P.T)
    lin = -(A @ Hinv_q) - b
    const = 0.5 * q @ Hinv_q - prog.objective.r
    return QuadraticOracle(P, lin, const)


def build_program(n, Q, q, r=0.0, constraints: Sequence = (), domain=None, name=""):
    """Convenience builder.

    ``constraints`` holds ``(fn_or_fns, set_block)`` pairs.
    """
    cons = []
    for fns, block in constraints:
        if isinstance(fns, QuadraticFn):
            fns = (fns,)
        cons.append(Constraint(tuple(fns), block))
    return ConvexProgram(
        int(n),
        QuadraticFn(np.asarray(Q, dtype=float).reshape(n, n), q, r),
        DomainSet.free(n) if domain is None else domain,
        tuple(cons),
        name,
    )


def qcqp_example(alpha, beta):
    """``min -x  s.t.  x^2 + beta <= 0,  x + alpha <= 0`` over the reals."""
    return build_program(
        1,
        [[0.0]],
        [-1.0],
        constraints=[
            (QuadraticFn([[2.0]], [0.0], beta), SetBlock.nonpos()),
            (QuadraticFn.affine([1.0], alpha), SetBlock.nonpos()),
        ],
        name=f"qcqp(alpha={alpha:g}, beta={beta:g})",
    )


def affine_rows_program(H, q, A_eq=None, a_eq=None, B=None, b=None, r=0.0, name=""):
    """QP ``min 0.5 x'Hx + q'x + r  s.t.  A_eq x = a_eq,  B x <= b``."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    n = H.shape[0]
    cons = []
    if A_eq is not None and len(A_eq):
        A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
        a_eq = np.atleast_1d(np.asarray(a_eq, dtype=float))
        cons.append(
            (tuple(QuadraticFn.affine(row, -ai) for row, ai in zip(A_eq, a_eq)), SetBlock.zero(len(a_eq)))
        )
    if B is not None and len(B):
        B = np.atleast_2d(np.asarray(B, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        cons.append(
            (tuple(QuadraticFn.affine(row, -bi) for row, bi in zip(B, b)), SetBlock.nonpos(len(b)))
        )
    return build_program(n, H, q, r, cons, name=name)
