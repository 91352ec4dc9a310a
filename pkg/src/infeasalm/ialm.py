"""Inexact augmented Lagrangian method on a :class:`~infeasalm.model.ConvexProgram`.

The slack ``y`` is eliminated from each subproblem, which becomes

    phi(x) = f(x) + (gamma / 2) * dist_K(C(x) - lam / gamma)**2      over x in X.

After the inner solve ``y = Proj_K(C(x) - lam / gamma)``, ``s = C(x) - y`` and
``lam <- lam - gamma * s``.  Multipliers follow the general sign convention;
on nonpositive blocks the usual nonnegative inequality multipliers are
``-lam``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _pykernels
from ._backend import get_kernels
from .errors import ConfigError, DimensionError, InnerSolveError, UnboundedInnerError
from .ippa import check_schedule, run_ippa
from .model import dual_oracle_equality_qp
from .schedules import Schedule, Zero
from .sets import BlockKind, DomainKind

STATUS_MAXITER = "MaxIter"
STATUS_CONVERGED = "Converged"
STATUS_UNBOUNDED = "ValueUnboundedBelow"


@dataclass(frozen=True)
class IalmOptions:
    """Solver settings.

    ``stop_tol`` drives the optional ``Converged`` stop: both the change in
    ``s`` and the change in ``f`` must fall below it.
    """

    inner_tol: float = 1e-10
    inner_max_iter: int = 20000
    max_outer_iter: int = 1000
    unbounded_threshold: float = -1e12
    warm_start: bool = True
    stop_tol: float = 1e-10
    stop_on_convergence: bool = True
    on_inner_failure: str = "raise"
    backend: str = None

    def __post_init__(self):
        if not self.inner_tol > 0:
            raise ConfigError("inner_tol must be positive")
        if self.inner_max_iter < 1 or self.max_outer_iter < 1:
            raise ConfigError("iteration limits must be positive")
        if self.on_inner_failure not in ("raise", "continue"):
            raise ConfigError("on_inner_failure must be 'raise' or 'continue'")


def _domain_args(prog):
    dom = prog.domain
    n = prog.n
    if dom.kind is DomainKind.FREE:
        return _pykernels.DOM_FREE, np.zeros(n), np.zeros(n), np.zeros((n, n)), np.zeros(n)
    if dom.kind is DomainKind.BOX:
        return _pykernels.DOM_BOX, np.array(dom.lo), np.array(dom.hi), np.zeros((n, n)), np.zeros(n)
    P, c = dom.projector
    return _pykernels.DOM_AFFINE, np.zeros(n), np.zeros(n), np.array(P), np.array(c)


def _kernel_args(prog):
    Qc, qc, rc = prog.stacked
    m = prog.m
    if m:
        klo, khi = np.array(prog.K.lo), np.array(prog.K.hi)
    else:
        klo = khi = np.zeros(0)
    Qc = Qc.reshape(m, prog.n, prog.n) if m else np.zeros((0, prog.n, prog.n))
    qc = qc.reshape(m, prog.n) if m else np.zeros((0, prog.n))
    obj = prog.objective
    return (
        np.array(obj.Q), np.array(obj.q), float(obj.r),
        np.ascontiguousarray(Qc), np.ascontiguousarray(qc), np.array(rc),
        np.array(prog.curved_rows, dtype=bool), klo, khi,
    )


def _lam(prog, lam):
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.shape != (prog.m,):
        raise DimensionError(f"lambda must have length {prog.m}, got shape {lam.shape}")
    return lam


def inner_objective(prog, lam, gamma, x):
    """Value and gradient of the eliminated subproblem objective at ``x``."""
    if not gamma > 0:
        raise ConfigError("gamma must be positive")
    lam = _lam(prog, lam)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (prog.n,):
        raise DimensionError(f"x must have length {prog.n}")
    Qf, qf, rf, Qc, qc, rc, curved, klo, khi = _kernel_args(prog)
    return _pykernels._phi(x, Qf, qf, rf, Qc, qc, rc, curved, klo, khi, lam / gamma, gamma)


def _initial_step(prog, lam, gamma, x):
    Qc, qc, _ = prog.stacked
    L = np.linalg.norm(prog.objective.Q, 2)
    if prog.m:
        J = prog.jacobian(x)
        u = prog.constraint_map(x) - lam / gamma
        r = u - prog.project_K(u)
        L += gamma * float(np.sum(J * J))
        curved = prog.curved_rows
        if curved.any():
            L += gamma * sum(
                np.linalg.norm(Qc[i], 2) * max(abs(r[i]), 1.0) for i in np.flatnonzero(curved)
            )
    return 1.0 if L <= 1e-14 else 1.0 / L


@dataclass(frozen=True)
class InnerResult:
    x: np.ndarray
    value: float
    residual: float
    iters: int
    step: float


def inner_solve(prog, lam, gamma, warm_start_x=None, options=None):
    """Minimise the subproblem to a gradient-mapping residual below ``options.inner_tol``.

    Raises
    ------
    UnboundedInnerError
        The objective dropped below ``options.unbounded_threshold``.
    InnerSolveError
        The iteration cap was hit first; carries the last iterate.
    """
    options = options or IalmOptions()
    if not gamma > 0:
        raise ConfigError("gamma must be positive")
    lam = _lam(prog, lam)
    x0 = np.zeros(prog.n) if warm_start_x is None else np.array(warm_start_x, dtype=float)
    x0 = prog.domain.project(x0)
    k = get_kernels(options.backend)
    step0 = _initial_step(prog, lam, gamma, x0)
    dom_args = _domain_args(prog)
    x, val, resid, iters, step, status = k.inner_pg(
        x0, *_kernel_args(prog), lam, float(gamma), *dom_args,
        float(step0), float(options.inner_tol), int(options.inner_max_iter),
        float(options.unbounded_threshold),
    )
    x = np.asarray(x)
    if status == _pykernels.STATUS_UNBOUNDED:
        raise UnboundedInnerError("subproblem is unbounded below", x=x, value=val, iters=iters)
    if status == _pykernels.STATUS_MAXITER:
        raise InnerSolveError(
            f"inner solve stopped at {iters} iterations with residual {resid:.3e}",
            x=x, residual=resid, iters=iters,
        )
    return InnerResult(x, float(val), float(resid), int(iters), float(step))


@dataclass(frozen=True)
class IalmStep:
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    lam: np.ndarray
    inner: InnerResult


def ialm_step(prog, lam, gamma, x_warm=None, options=None):
    """One outer iteration from multiplier ``lam`` with penalty ``gamma``."""
    options = options or IalmOptions()
    lam = _lam(prog, lam)
    try:
        inner = inner_solve(prog, lam, gamma, x_warm, options)
    except InnerSolveError as exc:
        if options.on_inner_failure == "raise":
            raise
        inner = InnerResult(exc.x, prog.objective_value(exc.x), exc.residual, exc.iters, math.nan)
    x = inner.x
    c = prog.constraint_map(x)
    y = prog.project_K(c - lam / gamma)
    s = c - y
    return IalmStep(x, y, s, lam - gamma * s, inner)


@dataclass
class IalmRun:
    """Outer-iteration trace.  Row ``j`` of the per-iteration arrays is iterate ``j + 1``."""

    prog: object
    schedule: Schedule
    lam0: np.ndarray
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    lam: np.ndarray
    f: np.ndarray
    s_norm: np.ndarray
    gammas: np.ndarray
    inner_iters: np.ndarray
    inner_residual: np.ndarray
    slack_proj_gap: np.ndarray
    status: str
    reference: object = None
    dist_s_to_ref: np.ndarray = None
    value_gap_to_ref: np.ndarray = None
    unbounded_at: int = None
    unbounded_x: np.ndarray = None
    unbounded_value: float = None
    report: object = None
    extra: dict = field(default_factory=dict)

    @property
    def n_iter(self):
        return self.f.size

    @property
    def cum_gamma(self):
        """``sum_{i<=k} gamma_i`` aligned with iterate ``k + 1``."""
        return np.cumsum(self.gammas)

    @property
    def lam_all(self):
        """``lam^0 .. lam^N`` stacked."""
        return np.vstack((self.lam0[None, :], self.lam)) if self.lam.size else self.lam0[None, :]

    def inequality_multipliers(self):
        """Nonnegative multipliers ``-lam`` on nonpositive blocks, ``nan`` elsewhere."""
        out = np.full_like(self.lam, np.nan)
        off = 0
        for con in self.prog.constraints:
            if con.set.kind is BlockKind.NONPOS:
                out[:, off:off + con.set.dim] = -self.lam[:, off:off + con.set.dim]
            off += con.set.dim
        return out


def run_ialm(prog, lam0=None, schedule=None, options=None, reference=None, force=False,
             horizon=10**6):
    """Run the method for up to ``options.max_outer_iter`` outer iterations.

    Parameters
    ----------
    reference : ClosestFeasibleReference, optional
        When given, distances to ``sbar`` and ``nu(sbar)`` are recorded.
    force : bool
        Run even when the schedule fails an assumption check.
    """
    options = options or IalmOptions()
    schedule = schedule or Schedule()
    report = check_schedule(schedule, force=force, horizon=horizon)
    lam = np.zeros(prog.m) if lam0 is None else _lam(prog, lam0)
    lam_start = lam.copy()
    N = options.max_outer_iter
    n, m = prog.n, prog.m
    X = np.empty((N, n))
    Y = np.empty((N, m))
    S = np.empty((N, m))
    L = np.empty((N, m))
    F = np.empty(N)
    G = schedule.gammas(N)
    it_in = np.empty(N, dtype=int)
    res_in = np.empty(N)
    gap = np.empty(N)
    status = STATUS_MAXITER
    x = None
    done = 0
    unb = (None, None, None)
    for k in range(N):
        try:
            st = ialm_step(prog, lam, G[k], x if options.warm_start else None, options)
        except UnboundedInnerError as exc:
            status = STATUS_UNBOUNDED
            unb = (k + 1, exc.x, exc.value)
            break
        x, lam = st.x, st.lam
        X[k], Y[k], S[k], L[k] = x, st.y, st.s, lam
        F[k] = prog.objective_value(x)
        it_in[k], res_in[k] = st.inner.iters, st.inner.residual
        gap[k] = prog.slack_projection_gap(x, st.y) if m else 0.0
        done = k + 1
        if options.stop_on_convergence and k >= 1:
            if (
                np.linalg.norm(S[k] - S[k - 1]) <= options.stop_tol
                and abs(F[k] - F[k - 1]) <= options.stop_tol
            ):
                status = STATUS_CONVERGED
                break
    run = IalmRun(
        prog=prog,
        schedule=schedule,
        lam0=lam_start,
        x=X[:done],
        y=Y[:done],
        s=S[:done],
        lam=L[:done],
        f=F[:done],
        s_norm=np.linalg.norm(S[:done], axis=1) if m else np.zeros(done),
        gammas=G[:done],
        inner_iters=it_in[:done],
        inner_residual=res_in[:done],
        slack_proj_gap=gap[:done],
        status=status,
        unbounded_at=unb[0],
        unbounded_x=unb[1],
        unbounded_value=unb[2],
        report=report,
    )
    if reference is not None:
        attach_reference(run, reference)
    return run


def attach_reference(run, reference):
    """Record distances to a closest-feasible reference on ``run``."""
    run.reference = reference
    sbar = np.asarray(reference.sbar, dtype=float)
    run.dist_s_to_ref = np.linalg.norm(run.s - sbar, axis=1) if run.s.size else np.zeros(run.n_iter)
    nu = reference.nu_sbar
    run.value_gap_to_ref = np.abs(run.f - nu) if math.isfinite(nu) else np.full(run.n_iter, np.nan)
    return run


def crosscheck_ippa_equivalence(prog, lam0, schedule, n_iter, options=None):
    """Largest gap between IALM multipliers and IPPA iterates on the explicit dual.

    Both runs start at ``lam0`` and use the step sizes of ``schedule``; the
    IPPA side is exact (no errors).
    """
    options = options or IalmOptions()
    opts = IalmOptions(
        inner_tol=options.inner_tol,
        inner_max_iter=options.inner_max_iter,
        max_outer_iter=int(n_iter),
        unbounded_threshold=options.unbounded_threshold,
        warm_start=options.warm_start,
        stop_on_convergence=False,
        backend=options.backend,
    )
    exact = Schedule(schedule.gamma_family, Zero())
    oracle = dual_oracle_equality_qp(prog)
    lam0 = np.zeros(prog.m) if lam0 is None else np.asarray(lam0, dtype=float)
    ialm = run_ialm(prog, lam0, exact, opts)
    ippa = run_ippa(oracle, lam0, exact, None, int(n_iter))
    return float(np.max(np.linalg.norm(ialm.lam_all - ippa.lam, axis=1)))
