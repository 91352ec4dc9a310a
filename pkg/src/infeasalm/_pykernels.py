"""Pure-numpy kernels.  The compiled module ``_ckernels`` mirrors these exactly."""

from __future__ import annotations

from itertools import combinations

import numpy as np

STATUS_CONVERGED = 0
STATUS_MAXITER = 1
STATUS_UNBOUNDED = 2

DOM_FREE = 0
DOM_BOX = 1
DOM_AFFINE = 2

STEP_MAX = 1e16
BACKTRACK_MAX = 200


def _phi(x, Qf, qf, rf, Qc, qc, rc, curved, klo, khi, shift, gamma):
    """Penalised objective ``f(x) + gamma/2 * dist_K(C(x) - shift)**2`` and its gradient."""
    g = Qf @ x + qf
    val = 0.5 * x @ Qf @ x + qf @ x + rf
    if rc.size:
        J = qc.copy()
        if curved.any():
            J[curved] += Qc[curved] @ x
        c = qc @ x + rc
        if curved.any():
            c[curved] += 0.5 * np.einsum("kij,i,j->k", Qc[curved], x, x)
        u = c - shift
        r = u - np.clip(u, klo, khi)
        val += 0.5 * gamma * (r @ r)
        g = g + gamma * (J.T @ r)
    return val, g


def _proj(z, dom, dlo, dhi, P, pc):
    if dom == DOM_FREE:
        return z
    if dom == DOM_BOX:
        return np.clip(z, dlo, dhi)
    return P @ z + pc


def inner_pg(x0, Qf, qf, rf, Qc, qc, rc, curved, klo, khi, lam, gamma,
             dom, dlo, dhi, P, pc, step0, tol, max_iter, unbounded):
    """Accelerated projected gradient with backtracking and adaptive restart.

    Returns ``(x, phi, residual, iters, step, status)`` where ``residual`` is
    the gradient-mapping norm at ``x`` for the final step size.
    """
    shift = lam / gamma
    args = (Qf, qf, rf, Qc, qc, rc, curved, klo, khi, shift, gamma)
    x = _proj(np.array(x0, dtype=float), dom, dlo, dhi, P, pc)
    fx, gx = _phi(x, *args)
    step = float(step0)
    resid = np.linalg.norm((x - _proj(x - step * gx, dom, dlo, dhi, P, pc)) / step)
    if resid <= tol:
        return x, fx, resid, 0, step, STATUS_CONVERGED
    y, fy, gy = x, fx, gx
    tk = 1.0
    for it in range(1, max_iter + 1):
        clean = True
        for _ in range(BACKTRACK_MAX):
            xn = _proj(y - step * gy, dom, dlo, dhi, P, pc)
            d = xn - y
            dd = d @ d
            fn, gn = _phi(xn, *args)
            if fn <= fy + gy @ d + 0.5 * dd / step or (gn - gy) @ d <= 0.5 * dd / step:
                break
            step *= 0.5
            clean = False
        if fn < unbounded:
            return xn, fn, np.inf, it, step, STATUS_UNBOUNDED
        resid = np.linalg.norm((xn - _proj(xn - step * gn, dom, dlo, dhi, P, pc)) / step)
        if resid <= tol:
            return xn, fn, resid, it, step, STATUS_CONVERGED
        tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        if (y - xn) @ (xn - x) > 0.0:
            # momentum points uphill: restart
            tn = 1.0
            y, fy, gy = xn, fn, gn
        else:
            beta = (tk - 1.0) / tn
            y = xn + beta * (xn - x)
            if beta == 0.0:
                fy, gy = fn, gn
            else:
                fy, gy = _phi(y, *args)
        x, fx = xn, fn
        tk = tn
        if clean:
            step = min(2.0 * step, STEP_MAX)
    return x, fx, resid, max_iter, step, STATUS_MAXITER


# ---------------------------------------------------------------- max-affine


def maxaffine_value(A, b, lam):
    return float(np.max(A @ lam + b))


def _dominates(A, b, mu, i, tol):
    """Whether piece ``i`` attains the max at ``mu``.

    Differences ``(a_p - a_i) . mu + b_p - b_i`` are compared against their own
    rounding scale, so a large common term in every piece does not loosen the test.
    """
    D = A - A[i]
    e = b - b[i]
    return bool(np.all(D @ mu + e <= tol * (1.0 + np.abs(D) @ np.abs(mu) + np.abs(e))))


def maxaffine_prox(A, b, lam, gamma, tol=1e-12):
    """Exact prox of ``gamma * max_i (a_i . mu + b_i)`` by support enumeration.

    Returns ``(mu, weights, support)``; ``mu = lam - gamma * A[support].T @ weights``.
    Raises ``ValueError`` when no support passes the optimality checks.
    """
    N, d = A.shape
    vals = A @ lam + b
    scale = 1.0 + np.max(np.abs(vals)) + gamma * np.max(np.sum(A * A, axis=1))
    # singletons first
    for i in range(N):
        mu = lam - gamma * A[i]
        if _dominates(A, b, mu, i, tol):
            return mu, np.array([1.0]), (i,)
    best = None
    for size in range(2, min(N, d + 1) + 1):
        for T in combinations(range(N), size):
            AT = A[list(T)]
            M = np.zeros((size + 1, size + 1))
            M[:size, :size] = gamma * (AT @ AT.T)
            M[:size, size] = 1.0
            M[size, :size] = 1.0
            # values relative to the first piece; the constant absorbs the common part
            rhs = np.concatenate(((AT - AT[0]) @ lam + (b[list(T)] - b[T[0]]), [1.0]))
            try:
                sol = np.linalg.solve(M, rhs)
            except np.linalg.LinAlgError:
                continue
            if not np.all(np.isfinite(sol)) or np.linalg.norm(M @ sol - rhs) > tol * scale:
                continue
            w = sol[:size]
            if np.any(w < -tol):
                continue
            mu = lam - gamma * (AT.T @ w)
            if not _dominates(A, b, mu, T[0], tol):
                continue
            obj = np.max(A @ mu + b) + (mu - lam) @ (mu - lam) / (2.0 * gamma)
            if best is None or obj < best[0]:
                best = (obj, mu, np.clip(w, 0.0, None), T)
    if best is None:
        raise ValueError("no support set satisfies the prox optimality conditions")
    return best[1], best[2], best[3]


def maxaffine_conj(A, b, s, tol=1e-10):
    """``h*(s) = min { -b.w : A.T w = s, w in simplex }`` by vertex enumeration; ``inf`` if infeasible."""
    N, d = A.shape
    target = np.concatenate((s, [1.0]))
    scale = 1.0 + np.max(np.abs(A)) + np.max(np.abs(s))
    best = np.inf
    for size in range(1, min(N, d + 1) + 1):
        for T in combinations(range(N), size):
            M = np.vstack((A[list(T)].T, np.ones(size)))
            G = M.T @ M
            if np.linalg.matrix_rank(G, tol=1e-12 * max(1.0, np.abs(G).max())) < size:
                continue
            w = np.linalg.solve(G, M.T @ target)
            if np.linalg.norm(M @ w - target) > tol * scale or np.any(w < -tol):
                continue
            best = min(best, float(-b[list(T)] @ w))
    return best
