"""Closed convex sets with exact Euclidean projections.

Constraint sets are products of simple blocks (zero, orthants, intervals,
singletons).  Every block kind is an interval with possibly infinite
endpoints, so projecting onto a product set is a componentwise clamp.
Variable domains are either the whole space, a box or an affine subspace.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, SingularProjectorError

MEMBERSHIP_TOL = 1e-10


def _vec(z, name="z"):
    arr = np.asarray(z, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be a vector, got shape {arr.shape}")
    return arr


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


class BlockKind(str, enum.Enum):
    ZERO = "zero"
    NONPOS = "nonpos"
    NONNEG = "nonneg"
    INTERVAL = "interval"
    SINGLETON = "singleton"


@dataclass(frozen=True)
class SetBlock:
    """One block of a product constraint set.

    Use the classmethod constructors rather than building the bounds by hand.
    """

    kind: BlockKind
    dim: int
    lo: np.ndarray = field(repr=False)
    hi: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionError("block dimension must be positive")
        if self.lo.shape != (self.dim,) or self.hi.shape != (self.dim,):
            raise DimensionError("block bounds must have length dim")
        if np.any(np.isnan(self.lo)) or np.any(np.isnan(self.hi)):
            raise ValueError("block bounds must not be NaN")
        if np.any(self.lo > self.hi):
            raise ValueError("interval requires lo <= hi componentwise")

    @classmethod
    def zero(cls, dim=1):
        z = np.zeros(dim)
        return cls(BlockKind.ZERO, dim, _frozen(z), _frozen(z))

    @classmethod
    def nonpos(cls, dim=1):
        return cls(BlockKind.NONPOS, dim, _frozen(np.full(dim, -np.inf)), _frozen(np.zeros(dim)))

    @classmethod
    def nonneg(cls, dim=1):
        return cls(BlockKind.NONNEG, dim, _frozen(np.zeros(dim)), _frozen(np.full(dim, np.inf)))

    @classmethod
    def interval(cls, lo, hi):
        lo, hi = _vec(lo, "lo"), _vec(hi, "hi")
        if lo.shape != hi.shape:
            raise DimensionError("interval endpoints must have the same length")
        return cls(BlockKind.INTERVAL, lo.size, _frozen(lo), _frozen(hi))

    @classmethod
    def singleton(cls, point):
        p = _vec(point, "point")
        if not np.all(np.isfinite(p)):
            raise ValueError("singleton point must be finite")
        return cls(BlockKind.SINGLETON, p.size, _frozen(p), _frozen(p))

    @property
    def is_affine_target(self):
        """True for blocks that force the constraint function to be affine."""
        return self.kind in (BlockKind.ZERO, BlockKind.SINGLETON, BlockKind.INTERVAL)

    def project(self, z):
        z = _check_dim(z, self.dim)
        return np.clip(z, self.lo, self.hi)

    def to_dict(self):
        d = {"type": self.kind.value}
        if self.kind in (BlockKind.ZERO, BlockKind.NONPOS, BlockKind.NONNEG):
            d["dim"] = self.dim
        elif self.kind is BlockKind.SINGLETON:
            d["point"] = self.lo.tolist()
        else:
            d["lo"] = [_json_float(v) for v in self.lo]
            d["hi"] = [_json_float(v) for v in self.hi]
        return d

    @classmethod
    def from_dict(cls, d):
        kind = BlockKind(d["type"])
        if kind is BlockKind.ZERO:
            return cls.zero(int(d.get("dim", 1)))
        if kind is BlockKind.NONPOS:
            return cls.nonpos(int(d.get("dim", 1)))
        if kind is BlockKind.NONNEG:
            return cls.nonneg(int(d.get("dim", 1)))
        if kind is BlockKind.SINGLETON:
            return cls.singleton(d["point"])
        return cls.interval([_parse_float(v) for v in d["lo"]], [_parse_float(v) for v in d["hi"]])


def _json_float(v):
    if np.isposinf(v):
        return "inf"
    if np.isneginf(v):
        return "-inf"
    return float(v)


def _parse_float(v):
    return float(v) if not isinstance(v, str) else float(v.strip())


def _check_dim(z, dim):
    z = _vec(z)
    if z.size != dim:
        raise DimensionError(f"expected a vector of length {dim}, got {z.size}")
    return z


@dataclass(frozen=True)
class ProductSet:
    """Cartesian product of :class:`SetBlock` objects, in order."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(self.blocks)
        if not blocks:
            raise ValueError("a product set needs at least one block")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "_lo", _frozen(np.concatenate([b.lo for b in blocks])))
        object.__setattr__(self, "_hi", _frozen(np.concatenate([b.hi for b in blocks])))

    @property
    def total_dim(self):
        return int(sum(b.dim for b in self.blocks))

    @property
    def lo(self):
        return self._lo

    @property
    def hi(self):
        return self._hi

    def offsets(self):
        """Start index of each block inside the stacked vector."""
        return np.cumsum([0] + [b.dim for b in self.blocks])[:-1]

    def project(self, z):
        z = _check_dim(z, self.total_dim)
        return np.clip(z, self._lo, self._hi)


class DomainKind(str, enum.Enum):
    FREE = "free"
    BOX = "box"
    AFFINE = "affine"


@dataclass(frozen=True)
class DomainSet:
    """Variable domain ``X``: free, a box, or ``{x : A x = b}``.

    The affine projector ``z - A^T (A A^T)^{-1} (A z - b)`` is assembled once
    at construction and stored as ``P z + c``.
    """

    kind: DomainKind
    dim: int
    lo: np.ndarray = field(default=None, repr=False)
    hi: np.ndarray = field(default=None, repr=False)
    A: np.ndarray = field(default=None, repr=False)
    b: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionError("domain dimension must be positive")
        if self.kind is DomainKind.BOX:
            if self.lo.shape != (self.dim,) or self.hi.shape != (self.dim,):
                raise DimensionError("box bounds must have length dim")
            if np.any(self.lo > self.hi):
                raise ValueError("box requires lo <= hi componentwise")
        if self.kind is DomainKind.AFFINE:
            A, b = self.A, self.b
            if A.ndim != 2 or A.shape[1] != self.dim:
                raise DimensionError(f"affine matrix must have {self.dim} columns")
            if b.shape != (A.shape[0],):
                raise DimensionError("affine right-hand side length must match rows of A")
            gram = A @ A.T
            try:
                chol = np.linalg.cholesky(gram)
            except np.linalg.LinAlgError as exc:
                raise SingularProjectorError("A A^T is not positive definite") from exc
            diag = np.diag(chol)
            # Cholesky diagonals scale like sqrt(eigenvalues): this is cond(AA^T) > 1e14
            if diag.min() <= 1e-7 * diag.max():
                raise SingularProjectorError("A A^T is numerically rank deficient")
            # W = (A A^T)^{-1} A via two triangular solves
            W = np.linalg.solve(chol.T, np.linalg.solve(chol, A))
            object.__setattr__(self, "_P", _frozen(np.eye(self.dim) - A.T @ W))
            object.__setattr__(self, "_c", _frozen(W.T @ b))

    @classmethod
    def free(cls, dim):
        return cls(DomainKind.FREE, int(dim))

    @classmethod
    def box(cls, lo, hi):
        lo, hi = _vec(lo, "lo"), _vec(hi, "hi")
        if lo.shape != hi.shape:
            raise DimensionError("box endpoints must have the same length")
        return cls(DomainKind.BOX, lo.size, lo=_frozen(lo), hi=_frozen(hi))

    @classmethod
    def affine(cls, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        return cls(DomainKind.AFFINE, A.shape[1], A=_frozen(A), b=_frozen(_vec(b, "b")))

    @property
    def total_dim(self):
        return self.dim

    @property
    def projector(self):
        """``(P, c)`` with ``project(z) = P @ z + c`` (affine domains only)."""
        if self.kind is not DomainKind.AFFINE:
            raise AttributeError("only affine domains carry a linear projector")
        return self._P, self._c

    @property
    def is_unbounded_free(self):
        if self.kind is DomainKind.FREE:
            return True
        return self.kind is DomainKind.BOX and bool(
            np.all(np.isneginf(self.lo)) and np.all(np.isposinf(self.hi))
        )

    def project(self, z):
        z = _check_dim(z, self.dim)
        if self.kind is DomainKind.FREE:
            return z.copy()
        if self.kind is DomainKind.BOX:
            return np.clip(z, self.lo, self.hi)
        return self._P @ z + self._c

    def to_dict(self):
        if self.kind is DomainKind.FREE:
            return {"type": "free"}
        if self.kind is DomainKind.BOX:
            return {
                "type": "box",
                "lo": [_json_float(v) for v in self.lo],
                "hi": [_json_float(v) for v in self.hi],
            }
        return {"type": "affine", "A": self.A.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, d, n):
        kind = DomainKind(d.get("type", "free"))
        if kind is DomainKind.FREE:
            return cls.free(n)
        if kind is DomainKind.BOX:
            return cls.box([_parse_float(v) for v in d["lo"]], [_parse_float(v) for v in d["hi"]])
        return cls.affine(d["A"], d["b"])


def project(s, z):
    """Euclidean projection of ``z`` onto ``s``."""
    return s.project(z)


def dist_sq(s, z):
    """Squared distance from ``z`` to ``s``."""
    z = np.asarray(z, dtype=float)
    d = z - s.project(z)
    return float(d @ d)


def membership_residual(s, z):
    """Distance from ``z`` to ``s``; zero (up to rounding) iff ``z`` is in ``s``."""
    z = np.asarray(z, dtype=float)
    return float(np.linalg.norm(z - s.project(z)))


def contains(s, z, tol=MEMBERSHIP_TOL):
    return membership_residual(s, z) <= tol
