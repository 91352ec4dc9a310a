"""Inexact proximal point iterations on closed convex functions with exact prox oracles.

One step from ``lam`` with step ``gamma`` and error budget ``eps``::

    lam_star = prox_{gamma h}(lam)
    s_star   = (lam - lam_star) / gamma
    lam_next = lam_star + e,   ||e|| <= eps
    s        = (lam - lam_next) / gamma

The injected ``e`` stands in for an inexact inner solve.  Oracles expose
``h``, its exact prox, the conjugate ``h*`` and the minimum-norm element
``sbar`` of the closure of the range of the subdifferential.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np

from ._backend import get_kernels
from .errors import (
    ConfigError,
    ConjugateInfiniteError,
    DimensionError,
    OracleError,
    ScheduleRejectedError,
)
from .schedules import Schedule, validate_assumptions

RANGE_TOL = 1e-9


def _vec(v, name="vector"):
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional")
    return arr


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------- oracles


class ProxOracle:
    """Interface shared by the oracle families."""

    family = ""
    dim: int

    def value(self, lam):
        raise NotImplementedError

    def prox(self, lam, gamma):
        raise NotImplementedError

    def prox_pair(self, lam, gamma):
        """``(prox, s)`` with ``s`` a subgradient of ``h`` at the prox point.

        In exact arithmetic ``s = (lam - prox) / gamma``; evaluating it from the
        optimality condition avoids cancellation when ``|lam|`` is large.
        """
        p = self.prox(lam, gamma)
        return p, (self._check(lam) - p) / gamma

    def conjugate(self, s):
        raise NotImplementedError

    def sbar(self):
        raise NotImplementedError

    def _check(self, lam, name="lambda"):
        lam = _vec(lam, name)
        if lam.size != self.dim:
            raise DimensionError(f"{name} must have length {self.dim}, got {lam.size}")
        return lam


@dataclass(frozen=True, eq=False)
class LinearOracle(ProxOracle):
    """``h(lam) = a . lam + c``."""

    a: np.ndarray
    c: float = 0.0
    family = "linear"

    def __post_init__(self):
        object.__setattr__(self, "a", _frozen(_vec(self.a, "a")))

    @property
    def dim(self):
        return self.a.size

    def value(self, lam):
        return float(self.a @ self._check(lam) + self.c)

    def prox(self, lam, gamma):
        return self._check(lam) - gamma * self.a

    def prox_pair(self, lam, gamma):
        return self.prox(lam, gamma), np.array(self.a)

    def conjugate(self, s):
        s = self._check(s, "s")
        if np.linalg.norm(s - self.a) <= RANGE_TOL * (1.0 + np.linalg.norm(self.a)):
            return -float(self.c)
        return math.inf

    def sbar(self):
        return np.array(self.a)

    def spec(self):
        return "linear:a=" + ",".join(repr(float(v)) for v in self.a)


@dataclass(frozen=True, eq=False)
class QuadraticOracle(ProxOracle):
    """``h(lam) = 0.5 lam' P lam + b' lam + c`` with ``P`` PSD."""

    P: np.ndarray
    b: np.ndarray
    c: float = 0.0
    family = "quadratic"

    def __post_init__(self):
        b = _vec(self.b, "b")
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        if P.shape != (b.size, b.size):
            raise DimensionError(f"P must be {b.size}x{b.size}")
        if not np.allclose(P, P.T, atol=1e-12, rtol=0.0):
            raise ConfigError("P must be symmetric")
        evals, evecs = np.linalg.eigh(P)
        if evals.size and evals.min() < -1e-8 * max(1.0, abs(evals).max()):
            raise ConfigError("P must be positive semidefinite")
        cut = 1e-12 * max(1.0, abs(evals).max() if evals.size else 1.0)
        rng = evals > cut
        object.__setattr__(self, "P", _frozen(P))
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "_U", evecs[:, rng])
        object.__setattr__(self, "_ev", evals[rng])

    @property
    def dim(self):
        return self.b.size

    def value(self, lam):
        lam = self._check(lam)
        return float(0.5 * lam @ self.P @ lam + self.b @ lam + self.c)

    def prox(self, lam, gamma):
        lam = self._check(lam)
        return np.linalg.solve(np.eye(self.dim) + gamma * self.P, lam - gamma * self.b)

    def prox_pair(self, lam, gamma):
        p = self.prox(lam, gamma)
        return p, self.P @ p + self.b

    def conjugate(self, s):
        r = self._check(s, "s") - self.b
        coef = self._U.T @ r
        resid = r - self._U @ coef
        if np.linalg.norm(resid) > RANGE_TOL * (1.0 + np.linalg.norm(r)):
            return math.inf
        return float(0.5 * np.sum(coef * coef / self._ev) - self.c)

    def sbar(self):
        return self.b - self._U @ (self._U.T @ self.b)

    def spec(self):
        return f"quadratic:P={json.dumps(self.P.tolist())},b={json.dumps(self.b.tolist())},c={self.c!r}"


@dataclass(frozen=True, eq=False)
class MaxAffineOracle(ProxOracle):
    """``h(lam) = max_i (a_i . lam + b_i)`` with at most 16 pieces."""

    slopes: np.ndarray
    intercepts: np.ndarray
    backend: str = field(default=None, compare=False)
    family = "maxaffine"

    def __post_init__(self):
        A = np.asarray(self.slopes, dtype=float)
        if A.ndim == 1:
            A = A.reshape(-1, 1)
        b = _vec(self.intercepts, "intercepts")
        if A.shape[0] < 1:
            raise ConfigError("a max-affine oracle needs at least one piece")
        if A.shape[0] > 16:
            raise ConfigError("support enumeration is limited to 16 pieces")
        if b.size != A.shape[0]:
            raise DimensionError("one intercept per slope is required")
        object.__setattr__(self, "slopes", _frozen(A))
        object.__setattr__(self, "intercepts", _frozen(b))
        object.__setattr__(self, "_k", get_kernels(self.backend))

    @property
    def dim(self):
        return self.slopes.shape[1]

    def value(self, lam):
        return float(np.max(self.slopes @ self._check(lam) + self.intercepts))

    def prox_with_support(self, lam, gamma):
        try:
            return self._k.maxaffine_prox(self.slopes, self.intercepts, self._check(lam), float(gamma))
        except ValueError as exc:
            raise OracleError(str(exc)) from exc

    def prox(self, lam, gamma):
        return self.prox_with_support(lam, gamma)[0]

    def prox_pair(self, lam, gamma):
        mu, w, T = self.prox_with_support(lam, gamma)
        return mu, w @ self.slopes[list(T)]

    def conjugate(self, s):
        return float(self._k.maxaffine_conj(self.slopes, self.intercepts, self._check(s, "s")))

    def sbar(self):
        return min_norm_hull(self.slopes)

    def spec(self):
        return (
            f"maxaffine:slopes={json.dumps(self.slopes.tolist())},"
            f"intercepts={json.dumps(self.intercepts.tolist())}"
        )


def min_norm_hull(points, tol=1e-12):
    """Minimum-norm point of the convex hull of the rows of ``points``.

    Every support of at most ``d + 1`` rows is tried: the nearest point of
    its affine hull is kept when its barycentric weights are nonnegative.
    """
    A = np.atleast_2d(np.asarray(points, dtype=float))
    N, d = A.shape
    best, best_norm = None, math.inf
    for size in range(1, min(N, d + 1) + 1):
        for T in combinations(range(N), size):
            AT = A[list(T)]
            M = np.zeros((size + 1, size + 1))
            M[:size, :size] = AT @ AT.T
            M[:size, size] = 1.0
            M[size, :size] = 1.0
            rhs = np.zeros(size + 1)
            rhs[size] = 1.0
            try:
                sol = np.linalg.solve(M, rhs)
            except np.linalg.LinAlgError:
                continue
            if np.linalg.norm(M @ sol - rhs) > 1e-10 or np.any(sol[:size] < -tol):
                continue
            p = AT.T @ np.clip(sol[:size], 0.0, None) / np.clip(sol[:size], 0.0, None).sum()
            nrm = float(np.linalg.norm(p))
            if nrm < best_norm - 1e-15:
                best, best_norm = p, nrm
    return best


def prox(oracle, lam, gamma):
    """Exact ``argmin_mu h(mu) + ||lam - mu||^2 / (2 gamma)``."""
    if not gamma > 0:
        raise ConfigError("gamma must be positive")
    return oracle.prox(lam, gamma)


def min_norm_subgradient(oracle):
    return oracle.sbar()


def conjugate_value(oracle, s):
    return oracle.conjugate(s)


def vertical_distance(oracle, lam):
    """``h(lam) - <lam, sbar> + h*(sbar)``: height of ``h`` above its asymptotic plane."""
    sbar = oracle.sbar()
    hs = oracle.conjugate(sbar)
    if not math.isfinite(hs):
        raise ConjugateInfiniteError("h* is infinite at sbar")
    lam = _vec(lam)
    return float(oracle.value(lam) - lam @ sbar + hs)


def parse_oracle(text):
    """Build an oracle from ``linear:a=1,2``, ``quadratic:P=I,b=0`` or
    ``maxaffine:slopes=[[1],[2]],intercepts=[0,0]``."""
    head, _, body = text.strip().partition(":")
    fam = head.strip().lower()
    params = {}
    last = None
    for tok in _split_top(body):
        if "=" in tok:
            key, _, val = tok.partition("=")
            last = key.strip()
            params[last] = [val.strip()]
        elif last is None:
            raise ConfigError(f"oracle parameter without a name: {tok!r}")
        else:
            params[last].append(tok.strip())

    def vector(key, default=None):
        if key not in params:
            return default
        vals = params[key]
        if len(vals) == 1 and vals[0].startswith("["):
            return np.asarray(json.loads(vals[0]), dtype=float)
        return np.asarray([float(v) for v in vals], dtype=float)

    try:
        if fam == "linear":
            a = vector("a")
            if a is None:
                raise ConfigError("linear oracle needs a=")
            return LinearOracle(a, float(vector("c", [0.0])[0]))
        if fam == "quadratic":
            P_raw = params.get("P", ["I"])
            dim = int(vector("dim", [0])[0]) if "dim" in params else None
            b = vector("b")
            if P_raw == ["I"]:
                if dim is None:
                    dim = 1 if b is None else b.size
                P = np.eye(dim)
            else:
                P = np.atleast_2d(np.asarray(json.loads(P_raw[0]), dtype=float))
            if b is None:
                b = np.zeros(P.shape[0])
            elif b.size == 1 and P.shape[0] > 1:
                b = np.full(P.shape[0], b[0])
            return QuadraticOracle(P, b, float(vector("c", [0.0])[0]))
        if fam == "maxaffine":
            A = vector("slopes")
            b = vector("intercepts")
            if A is None:
                raise ConfigError("maxaffine oracle needs slopes=")
            if A.ndim == 1:
                A = A.reshape(-1, 1)
            if b is None:
                b = np.zeros(A.shape[0])
            return MaxAffineOracle(A, b)
    except (ValueError, json.JSONDecodeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad oracle spec {text!r}: {exc}") from exc
    raise ConfigError(f"unknown oracle family {head!r}")


def _split_top(text):
    out, depth, cur = [], 0, []
    for ch in text:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "," and depth == 0:
            out.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if "".join(cur).strip():
        out.append("".join(cur))
    return [t for t in (s.strip() for s in out) if t]


# ---------------------------------------------------------------- errors


@dataclass
class ErrorInjector:
    """Perturbation added to the exact prox output.

    Parameters
    ----------
    mode : {"none", "fixed", "random"}
    direction : array_like, optional
        Direction for ``"fixed"`` (normalised internally).
    seed : int, optional
        Required for ``"random"``; a Philox counter-based generator is used.
    magnitude : {"exact", "uniform"}
        Norm is ``eps`` or uniform on ``[0, eps]``.
    """

    mode: str = "none"
    direction: np.ndarray = None
    seed: int = None
    magnitude: str = "exact"

    def __post_init__(self):
        if self.mode not in ("none", "fixed", "random"):
            raise ConfigError(f"unknown injector mode {self.mode!r}")
        if self.magnitude not in ("exact", "uniform"):
            raise ConfigError(f"unknown magnitude policy {self.magnitude!r}")
        if self.mode == "fixed":
            if self.direction is None:
                raise ConfigError("fixed injector needs a direction")
            d = _vec(self.direction, "direction")
            nrm = np.linalg.norm(d)
            if nrm == 0:
                raise ConfigError("direction must be nonzero")
            self.direction = d / nrm
        if self.mode == "random" and self.seed is None:
            raise ConfigError("random injector needs a seed")
        self.reset()

    def reset(self):
        self._rng = np.random.Generator(np.random.Philox(self.seed if self.seed is not None else 0))

    def perturbation(self, eps, dim):
        if self.mode == "none" or eps == 0.0:
            return np.zeros(dim)
        if self.mode == "fixed":
            if self.direction.size != dim:
                raise DimensionError("injector direction has the wrong length")
            u = self.direction
        else:
            u = self._rng.standard_normal(dim)
            u /= np.linalg.norm(u)
        scale = eps if self.magnitude == "exact" else eps * self._rng.uniform()
        return scale * u

    def describe(self):
        if self.mode == "fixed":
            return f"fixed({','.join(f'{v:g}' for v in self.direction)};{self.magnitude})"
        if self.mode == "random":
            return f"random(seed={self.seed};{self.magnitude})"
        return "none"


@dataclass(frozen=True)
class IppaStep:
    lam_star: np.ndarray
    s_star: np.ndarray
    lam_next: np.ndarray
    s_next: np.ndarray
    err_norm: float


def ippa_step(oracle, lam, gamma, eps, injector=None):
    if not gamma > 0:
        raise ConfigError("gamma must be positive")
    if eps < 0:
        raise ConfigError("eps must be nonnegative")
    lam = _vec(lam)
    if lam.size != oracle.dim:
        raise DimensionError(f"lambda must have length {oracle.dim}, got {lam.size}")
    lam_star, s_star = oracle.prox_pair(lam, float(gamma))
    e = np.zeros(lam.size) if injector is None else injector.perturbation(eps, lam.size)
    lam_next = lam_star + e
    s_next = (lam - lam_next) / gamma
    return IppaStep(lam_star, s_star, lam_next, s_next, float(np.linalg.norm(lam_next - lam_star)))


@lru_cache(maxsize=64)
def _cached_report(schedule, horizon):
    return validate_assumptions(schedule, horizon)


def check_schedule(schedule, force=False, horizon=10**6):
    """Return the assumption report; raise when something fails unless ``force``."""
    report = _cached_report(schedule, horizon)
    if report.has_fails and not force:
        raise ScheduleRejectedError(
            "schedule fails " + ", ".join(report.failed()), report=report
        )
    if report.has_inconclusive:
        warnings.warn("schedule assumptions are inconclusive at the test horizon", stacklevel=3)
    return report


@dataclass
class IppaRun:
    """Trace of ``max_iter`` steps; row ``j`` holds the quantities indexed ``j + 1``.

    ``lam`` has one extra leading row with the starting point.
    """

    oracle: ProxOracle
    schedule: Schedule
    lam: np.ndarray
    lam_star: np.ndarray
    s_star: np.ndarray
    s: np.ndarray
    gammas: np.ndarray
    eps: np.ndarray
    err_norm: np.ndarray
    report: object = None

    @property
    def n_iter(self):
        return self.gammas.size

    @property
    def cum_gamma(self):
        """``sum_{i<N} gamma_i`` aligned with row ``N - 1`` (the ``N``-th iterate)."""
        return np.cumsum(self.gammas)


def run_ippa(oracle, lam0, schedule, injector=None, max_iter=100, force=False, horizon=10**6):
    """Run ``max_iter`` inexact prox steps from ``lam0``."""
    report = check_schedule(schedule, force=force, horizon=horizon)
    lam = oracle._check(lam0, "lam0")
    d = lam.size
    if injector is not None:
        injector.reset()
    gammas = schedule.gammas(max_iter)
    eps = schedule.epsilons(max_iter)
    L = np.empty((max_iter + 1, d))
    Ls = np.empty((max_iter, d))
    Ss = np.empty((max_iter, d))
    S = np.empty((max_iter, d))
    E = np.empty(max_iter)
    L[0] = lam
    for k in range(max_iter):
        st = ippa_step(oracle, L[k], gammas[k], eps[k], injector)
        Ls[k], Ss[k], L[k + 1], S[k], E[k] = st.lam_star, st.s_star, st.lam_next, st.s_next, st.err_norm
    return IppaRun(oracle, schedule, L, Ls, Ss, S, gammas, eps, E, report)


# ---------------------------------------------------------------- diagnostics


@dataclass
class IppaDiagnostics:
    """Per-iteration quantities from the convergence theory, aligned with the run rows."""

    sbar: np.ndarray
    h_star_sbar: float
    cum_gamma: np.ndarray
    dist_star_to_sbar: np.ndarray
    dist_s_to_sbar: np.ndarray
    sq_gap_star: np.ndarray
    sq_gap_s: np.ndarray
    vertical: np.ndarray
    conj_gap: np.ndarray
    fenchel_young: np.ndarray
    increment_excess: np.ndarray
    plane_height: np.ndarray


def diagnostics(run):
    """Evaluate the theory-level diagnostics along an IPPA run.

    ``increment_excess[j]`` is ``||s*^{k+1}||^2 - ||s*^k||^2 - (eps_k / gamma_k)^2``
    for ``k = j + 1`` (so it has ``n_iter - 1`` entries); it should be
    nonpositive.
    """
    o = run.oracle
    sbar = o.sbar()
    hs = o.conjugate(sbar)
    n = run.n_iter
    h_vals = np.array([o.value(l) for l in run.lam_star])
    conj = np.array([o.conjugate(s) for s in run.s_star])
    with np.errstate(invalid="ignore"):
        fy = np.where(
            np.isfinite(conj), h_vals + conj - np.einsum("ij,ij->i", run.lam_star, run.s_star), np.nan
        )
    plane = h_vals - run.lam_star @ sbar
    vert = plane + hs if math.isfinite(hs) else np.full(n, np.nan)
    conj_gap = np.abs(conj - hs) if math.isfinite(hs) else np.full(n, np.nan)
    ns2 = np.einsum("ij,ij->i", run.s_star, run.s_star)
    sb2 = float(sbar @ sbar)
    excess = ns2[1:] - ns2[:-1] - (run.eps[:-1] / run.gammas[1:]) ** 2
    return IppaDiagnostics(
        sbar=sbar,
        h_star_sbar=hs,
        cum_gamma=run.cum_gamma,
        dist_star_to_sbar=np.linalg.norm(run.s_star - sbar, axis=1),
        dist_s_to_sbar=np.linalg.norm(run.s - sbar, axis=1),
        sq_gap_star=ns2 - sb2,
        sq_gap_s=np.einsum("ij,ij->i", run.s, run.s) - sb2,
        vertical=vert,
        conj_gap=conj_gap,
        fenchel_young=fy,
        increment_excess=excess,
        plane_height=plane,
    )


def firm_nonexpansive_gap(oracle, lam1, lam2, gamma):
    """``<p1 - p2, l1 - l2> - ||p1 - p2||^2``; nonnegative for an exact prox.

    With ``p = l - gamma * s`` this equals ``gamma * (<ds, dl> - gamma ||ds||^2)``,
    which avoids differencing two large prox points.
    """
    if not gamma > 0:
        raise ConfigError("gamma must be positive")
    _, s1 = oracle.prox_pair(oracle._check(lam1), gamma)
    _, s2 = oracle.prox_pair(oracle._check(lam2), gamma)
    ds = s1 - s2
    dl = np.asarray(lam1, dtype=float) - np.asarray(lam2, dtype=float)
    return float(gamma * (ds @ dl - gamma * (ds @ ds)))
