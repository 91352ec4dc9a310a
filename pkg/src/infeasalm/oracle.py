"""Reference solutions computed without the solver code paths.

* :func:`grid_closest_feasible` scans a grid (``n <= 2``) for the smallest
  constraint transgression, picks the best objective among near-minimisers,
  then polishes each coordinate by bisection on a derivative sign.
* :func:`least_squares_min_violation` handles affine programs by direct
  factorisation or a long projected-gradient run.
* :func:`active_set_qp_solve` enumerates active sets of a small QP.
* :func:`fit_rate` measures log-log slopes of error series.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import ConfigError, FitError, InfeasibleError, UnsupportedError
from .model import ConvexProgram
from .sets import DomainKind

FLOOR = 1e-13


@dataclass(frozen=True)
class ClosestFeasibleReference:
    """Ground truth ``(sbar, nu(sbar), xbar)`` for the closest feasible problem."""

    sbar: np.ndarray
    nu_sbar: float
    xbar: np.ndarray = None
    method: str = "Grid"
    tolerance: float = 0.0
    attained: bool = True
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "sbar": [float(v) for v in self.sbar],
            "nu_sbar": _jf(self.nu_sbar),
            "xbar": None if self.xbar is None else [float(v) for v in self.xbar],
            "method": self.method,
            "tolerance": float(self.tolerance),
            "attained": bool(self.attained),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            sbar=np.asarray(d["sbar"], dtype=float),
            nu_sbar=float(d["nu_sbar"]),
            xbar=None if d.get("xbar") is None else np.asarray(d["xbar"], dtype=float),
            method=d.get("method", "Grid"),
            tolerance=float(d.get("tolerance", 0.0)),
            attained=bool(d.get("attained", True)),
            meta=dict(d.get("meta", {})),
        )

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _jf(v):
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


# ---------------------------------------------------------------- batch evaluation


def _batch_C(prog, X):
    """``C`` at each row of ``X`` (shape ``(p, n)``)."""
    Qc, qc, rc = prog.stacked
    out = X @ qc.T + rc
    for i in np.flatnonzero(prog.curved_rows):
        out[:, i] += 0.5 * np.einsum("pi,ij,pj->p", X, Qc[i], X)
    return out


def _batch_viol(prog, X):
    C = _batch_C(prog, X)
    lo, hi = prog.K.lo, prog.K.hi
    return C - np.minimum(np.maximum(C, lo), hi)


def _batch_f(prog, X):
    Q, q, r = prog.objective.Q, prog.objective.q, prog.objective.r
    return 0.5 * np.einsum("pi,ij,pj->p", X, Q, X) + X @ q + r


def _viol_grad(prog, x):
    """Gradient of ``0.5 * dist_K(C(x))**2``."""
    Qc, qc, rc = prog.stacked
    J = qc + np.einsum("kij,j->ki", Qc, x)
    C = _batch_C(prog, x[None, :])[0]
    r = C - np.minimum(np.maximum(C, prog.K.lo), prog.K.hi)
    return J.T @ r


def _bisect_root(g, a, b, iters=200):
    """Sign-change root of a nondecreasing scalar ``g`` on ``[a, b]``."""
    ga, gb = g(a), g(b)
    if ga >= 0:
        return a
    if gb <= 0:
        return b
    for _ in range(iters):
        mid = 0.5 * (a + b)
        if mid == a or mid == b:
            break
        if g(mid) > 0:
            b = mid
        else:
            a = mid
    return 0.5 * (a + b)


def grid_closest_feasible(prog, bounds=(-3.0, 3.0), resolution=10**4, refine=True):
    """Closest feasible reference by exhaustive grid scan.

    Parameters
    ----------
    prog : ConvexProgram
        Program with ``n <= 2``.
    bounds : (lo, hi)
        Scalars or per-axis sequences; the search box.
    resolution : int
        Total number of grid points (split evenly across axes).
    refine : bool
        Polish the winner by per-axis bisection.
    """
    if prog.n > 2:
        raise UnsupportedError("grid scan supports n <= 2")
    lo = np.broadcast_to(np.asarray(bounds[0], dtype=float), (prog.n,))
    hi = np.broadcast_to(np.asarray(bounds[1], dtype=float), (prog.n,))
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ConfigError("grid bounds must be finite")
    per_axis = int(round(resolution ** (1.0 / prog.n))) if resolution >= 1 else 0
    if per_axis < 2 or np.any(hi <= lo):
        raise ConfigError("empty grid")
    axes = [np.linspace(lo[i], hi[i], per_axis) for i in range(prog.n)]
    X = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    X = prog.domain.project(X.T).T if prog.domain.kind is DomainKind.BOX else X
    h = np.array([(hi[i] - lo[i]) / (per_axis - 1) for i in range(prog.n)])

    if prog.m == 0:
        F = _batch_f(prog, X)
        j = int(np.argmin(F))
        return ClosestFeasibleReference(np.zeros(0), float(F[j]), X[j], "Grid", float(h.max()))

    V = _batch_viol(prog, X)
    v = np.linalg.norm(V, axis=1)
    vmin = float(v.min())
    # variation of v next to the argmin bounds how far the grid sits above the true minimum
    vg = v.reshape([per_axis] * prog.n)
    jstar = np.unravel_index(int(np.argmin(v)), vg.shape)
    var = 0.0
    for a in range(prog.n):
        for step in (-1, 1):
            nb = list(jstar)
            nb[a] += step
            if 0 <= nb[a] < per_axis:
                var = max(var, abs(float(vg[tuple(nb)]) - vmin))
    band = v <= vmin + var + 1e-15
    F = _batch_f(prog, X)
    idx = np.flatnonzero(band)
    j = int(idx[np.argmin(F[idx])])
    x = X[j].copy()
    tol = float(var)

    unique_min = True
    if refine:
        cluster = X[idx]
        spread = np.max(cluster, axis=0) - np.min(cluster, axis=0)
        unique_min = bool(np.all(spread <= 3.0 * h + 1e-15))
        # coordinate bisection on the violation gradient; sbar is unique even when
        # the set of minimisers is not, so this pins sbar in every case
        for _sweep in range(3 if prog.n > 1 else 1):
            for i in range(prog.n):
                def gi(t, i=i):
                    z = x.copy()
                    z[i] = t
                    return _viol_grad(prog, z)[i]

                lo_i = min(x[i], cluster[:, i].min()) - h[i]
                hi_i = max(x[i], cluster[:, i].max()) + h[i]
                x[i] = _bisect_root(gi, lo_i, hi_i)
        tol = float(max(np.linalg.norm(_batch_viol(prog, x[None, :])[0]) - vmin, 0.0) + 1e-12)
        if not unique_min:
            # nu is only located to grid accuracy along a flat set of minimisers
            tol = max(tol, float(var))

    s = _batch_viol(prog, x[None, :])[0]
    nu = float(_batch_f(prog, x[None, :])[0])
    on_edge = bool(np.any(np.abs(x - lo) <= h) or np.any(np.abs(x - hi) <= h))
    return ClosestFeasibleReference(
        s, nu, x, "Grid", tol, attained=not on_edge,
        meta={
            "resolution": int(per_axis ** prog.n),
            "step": h.tolist(),
            "bounds": [lo.tolist(), hi.tolist()],
            "unique_minimiser": unique_min,
        },
    )


# ---------------------------------------------------------------- affine programs


def _affine_data(prog):
    if not prog.is_affine:
        raise UnsupportedError("constraints must be affine")
    if prog.domain.kind is not DomainKind.FREE and not prog.domain.is_unbounded_free:
        raise UnsupportedError("domain must be free")
    Qc, qc, rc = prog.stacked
    return np.array(qc), np.array(rc), np.array(prog.K.lo), np.array(prog.K.hi)


def least_squares_min_violation(prog, tol=1e-12, max_iter=200000):
    """Closest feasible reference for an affine program over a free domain."""
    if prog.m == 0:
        x, _ = active_set_qp_solve(prog)
        return ClosestFeasibleReference(np.zeros(0), prog.objective_value(x), x, "LeastSquares", 0.0)
    A, c, lo, hi = _affine_data(prog)
    eq_only = bool(np.all(lo == hi))
    if eq_only:
        x, *_ = np.linalg.lstsq(A, lo - c, rcond=None)
        s = A @ x + c - lo
        method = "LeastSquares"
    else:
        x, *_ = np.linalg.lstsq(A, np.clip(c, lo, hi) - c, rcond=None)
        L = max(np.linalg.norm(A, 2) ** 2, 1e-300)
        # gradient descent on 0.5*dist_K(Ax + c)^2, then an active-set polish
        for _ in range(max_iter):
            u = A @ x + c
            r = u - np.clip(u, lo, hi)
            g = A.T @ r
            if np.linalg.norm(g) <= tol:
                break
            x = x - g / L
        x = _polish_violation(A, c, lo, hi, x)
        u = A @ x + c
        s = u - np.clip(u, lo, hi)
        method = "LongRunPG"
    xbar, nu = _min_f_on_shift(prog, s)
    return ClosestFeasibleReference(s, nu, xbar, method, tol * 10, attained=xbar is not None)


def _polish_violation(A, c, lo, hi, x):
    """Exact least squares on the violated rows, kept if it does not increase the violation."""
    def viol(z):
        u = A @ z + c
        r = u - np.clip(u, lo, hi)
        return float(r @ r)

    u = A @ x + c
    above = u > hi
    below = u < lo
    rows = above | below
    if not rows.any():
        return x
    tgt = np.where(above, hi, lo)[rows]
    dx, *_ = np.linalg.lstsq(A[rows], tgt - u[rows], rcond=None)
    z = x + dx
    return z if viol(z) <= viol(x) else x


def _min_f_on_shift(prog, s):
    """Minimise ``f`` over ``{x : C(x) - s in K}`` with the active-set solver.

    ``s`` comes from a point that attains it, so the shifted program is
    feasible and a missing KKT point means ``f`` is unbounded below there.
    """
    shifted = _shift_program(prog, s)
    try:
        x, _ = active_set_qp_solve(shifted, feas_tol=1e-8)
    except InfeasibleError:
        return None, -math.inf
    return x, prog.objective_value(x)


def _shift_program(prog, s):
    from .model import Constraint, QuadraticFn

    cons = []
    off = 0
    for con in prog.constraints:
        fns = tuple(
            QuadraticFn(fn.Q, fn.q, fn.r - s[off + j]) for j, fn in enumerate(con.fns)
        )
        cons.append(Constraint(fns, con.set))
        off += con.set.dim
    return prog.with_constraints(cons)


@dataclass(frozen=True)
class QPSolution:
    x: np.ndarray
    ineq_multipliers: np.ndarray
    eq_multipliers: np.ndarray
    objective: float
    active: tuple
    stationarity: float
    primal: float
    dual: float
    complementarity: float


def _qp_rows(prog):
    """Split into ``G x <= h`` and ``E x = e`` (rows of the affine constraints)."""
    A, c, lo, hi = _affine_data(prog)
    G, hv, E, ev = [], [], [], []
    for i in range(prog.m):
        if lo[i] == hi[i]:
            E.append(A[i])
            ev.append(lo[i] - c[i])
            continue
        if np.isfinite(hi[i]):
            G.append(A[i])
            hv.append(hi[i] - c[i])
        if np.isfinite(lo[i]):
            G.append(-A[i])
            hv.append(c[i] - lo[i])
    n = prog.n
    return (
        np.array(G).reshape(-1, n), np.array(hv), np.array(E).reshape(-1, n), np.array(ev),
    )


def active_set_qp_solve(prog, tol=1e-9, feas_tol=None):
    """Exhaustive active-set solve of a small QP.

    Returns
    -------
    x : ndarray
    info : QPSolution
        Multipliers use ``H x + q + G' mu + E' nu = 0`` with ``mu >= 0``.
    """
    if prog.m and not prog.is_affine:
        raise UnsupportedError("constraints must be affine")
    if prog.m:
        G, hv, E, ev = _qp_rows(prog)
    else:
        G, hv, E, ev = (np.zeros((0, prog.n)), np.zeros(0), np.zeros((0, prog.n)), np.zeros(0))
    n = prog.n
    if n + G.shape[0] + E.shape[0] > 24:
        raise UnsupportedError("active-set enumeration limited to n + m <= 24")
    feas_tol = tol if feas_tol is None else feas_tol
    H, q = prog.objective.Q, prog.objective.q
    best = None
    p = G.shape[0]
    for size in range(0, min(p, n) + 1):
        for act in combinations(range(p), size):
            M = np.vstack((G[list(act)], E)) if size else E
            rhs = np.concatenate((hv[list(act)], ev)) if size else ev
            k = M.shape[0]
            KKT = np.zeros((n + k, n + k))
            KKT[:n, :n] = H
            KKT[:n, n:] = M.T
            KKT[n:, :n] = M
            b = np.concatenate((-q, rhs))
            sol, *_ = np.linalg.lstsq(KKT, b, rcond=None)
            scale = 1.0 + np.abs(b).max()
            if np.linalg.norm(KKT @ sol - b) > tol * scale:
                continue
            x, lam = sol[:n], sol[n:]
            mu = np.zeros(p)
            mu[list(act)] = lam[:size]
            nu = lam[size:]
            if np.any(mu < -tol * scale):
                continue
            primal = max(
                float(np.max(G @ x - hv, initial=0.0)),
                float(np.max(np.abs(E @ x - ev), initial=0.0)),
            )
            if primal > feas_tol * scale:
                continue
            stat = float(np.linalg.norm(H @ x + q + G.T @ mu + E.T @ nu))
            comp = float(np.max(np.abs(mu * (G @ x - hv)), initial=0.0))
            obj = prog.objective_value(x)
            if best is None or obj < best.objective - 1e-12:
                best = QPSolution(
                    x, mu, nu, obj, act, stat, primal,
                    float(max(0.0, -mu.min(initial=0.0))), comp,
                )
    if best is None:
        raise InfeasibleError("no KKT point found; the program may be infeasible or unbounded")
    return best.x, best


# ---------------------------------------------------------------- rate fits


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    burn_in: float
    n_points: int
    series: str = ""
    abscissa: str = ""
    note: str = ""

    def to_dict(self):
        return {
            "series": self.series,
            "abscissa": self.abscissa,
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "burn_in": self.burn_in,
            "n_points": self.n_points,
            "note": self.note,
        }


def fit_rate(series, abscissa, burn_in=0.1, series_name="", abscissa_name=""):
    """Least-squares slope of ``log(series)`` against ``log(abscissa)``.

    The first ``burn_in`` fraction of points is discarded.
    """
    y = np.asarray(series, dtype=float)
    x = np.asarray(abscissa, dtype=float)
    if y.shape != x.shape or y.ndim != 1:
        raise ConfigError("series and abscissa must be matching vectors")
    if y.size < 50:
        raise FitError(f"need at least 50 points, got {y.size}")
    start = int(math.floor(burn_in * y.size))
    y, x = y[start:], x[start:]
    if np.any(~(y > 0)) or np.any(~(x > 0)):
        raise FitError("series must be strictly positive after burn-in")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), float(r2), float(burn_in), int(y.size),
                   series_name, abscissa_name)


def fit_rate_above_floor(series, abscissa, burn_in=0.1, floor=FLOOR, series_name="", abscissa_name=""):
    """Fit on the leading stretch of ``series`` that stays above ``floor``.

    Returns ``None`` when the whole series sits at or below the floor (the
    quantity is zero to working precision, so any decay bound holds).
    """
    y = np.asarray(series, dtype=float)
    x = np.asarray(abscissa, dtype=float)
    try:
        return fit_rate(y, x, burn_in, series_name, abscissa_name)
    except FitError:
        pass
    if np.all(np.abs(y) <= floor):
        return None
    below = np.flatnonzero(~(y > floor))
    end = int(below[0]) if below.size else y.size
    fit = fit_rate(y[:end], x[:end], burn_in, series_name, abscissa_name)
    return RateFit(fit.slope, fit.intercept, fit.r_squared, fit.burn_in, fit.n_points,
                   series_name, abscissa_name, note=f"prefix of {end} points above {floor:g}")


def is_program(obj):
    return isinstance(obj, ConvexProgram)
