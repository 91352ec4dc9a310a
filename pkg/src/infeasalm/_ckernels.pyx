# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels.  Same algorithms and return conventions as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY, isfinite
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef int BACKTRACK_MAX = 200
cdef double STEP_MAX = 1e16


cdef inline double _clip(double v, double lo, double hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


cdef class _Problem:
    cdef double[:, ::1] Qf
    cdef double[::1] qf
    cdef double rf
    cdef double[:, :, ::1] Qc
    cdef double[:, ::1] qc
    cdef double[::1] rc
    cdef unsigned char[::1] curved
    cdef double[::1] klo, khi, shift
    cdef double gamma
    cdef int dom
    cdef double[::1] dlo, dhi, pc
    cdef double[:, ::1] P
    cdef int n, m
    cdef double[::1] r_buf, tmp

    cdef double phi(self, double[::1] x, double[::1] g) nogil:
        cdef int n = self.n, m = self.m, i, j, k
        cdef double val = self.rf, acc, ri, qx
        for i in range(n):
            acc = self.qf[i]
            for j in range(n):
                acc += self.Qf[i, j] * x[j]
            g[i] = acc
            val += 0.5 * (acc + self.qf[i]) * x[i]
        for k in range(m):
            acc = self.rc[k]
            for j in range(n):
                acc += self.qc[k, j] * x[j]
            if self.curved[k]:
                qx = 0.0
                for i in range(n):
                    for j in range(n):
                        qx += x[i] * self.Qc[k, i, j] * x[j]
                acc += 0.5 * qx
            acc -= self.shift[k]
            ri = acc - _clip(acc, self.klo[k], self.khi[k])
            self.r_buf[k] = ri
            val += 0.5 * self.gamma * ri * ri
            if ri != 0.0:
                for j in range(n):
                    acc = self.qc[k, j]
                    if self.curved[k]:
                        for i in range(n):
                            acc += self.Qc[k, j, i] * x[i]
                    g[j] += self.gamma * ri * acc
        return val

    cdef void proj(self, double[::1] z, double[::1] out) nogil:
        cdef int n = self.n, i, j
        cdef double acc
        if self.dom == 0:
            for i in range(n):
                out[i] = z[i]
        elif self.dom == 1:
            for i in range(n):
                out[i] = _clip(z[i], self.dlo[i], self.dhi[i])
        else:
            for i in range(n):
                acc = self.pc[i]
                for j in range(n):
                    acc += self.P[i, j] * z[j]
                self.tmp[i] = acc
            for i in range(n):
                out[i] = self.tmp[i]


cdef double _gm_resid(_Problem pr, double[::1] x, double[::1] g, double step, double[::1] w) nogil:
    cdef int i, n = pr.n
    cdef double acc = 0.0, t
    for i in range(n):
        w[i] = x[i] - step * g[i]
    pr.proj(w, w)
    for i in range(n):
        t = (x[i] - w[i]) / step
        acc += t * t
    return sqrt(acc)


def inner_pg(x0, Qf, qf, double rf, Qc, qc, rc, curved, klo, khi, lam, double gamma,
             int dom, dlo, dhi, P, pc, double step0, double tol, int max_iter, double unbounded):
    cdef int n = len(x0)
    cdef int m = len(rc)
    cdef _Problem pr = _Problem()
    pr.n = n
    pr.m = m
    pr.Qf = np.array(Qf, dtype=np.float64, order="C")
    pr.qf = np.array(qf, dtype=np.float64, order="C")
    pr.rf = rf
    pr.Qc = np.array(Qc, dtype=np.float64, order="C").reshape(m, n, n)
    pr.qc = np.array(qc, dtype=np.float64, order="C").reshape(m, n)
    pr.rc = np.array(rc, dtype=np.float64, order="C")
    pr.curved = np.array(curved, dtype=np.uint8, order="C")
    pr.klo = np.array(klo, dtype=np.float64, order="C")
    pr.khi = np.array(khi, dtype=np.float64, order="C")
    pr.shift = np.array(lam, dtype=np.float64, order="C") / gamma
    pr.gamma = gamma
    pr.dom = dom
    pr.dlo = np.array(dlo if dlo is not None else np.zeros(n), dtype=np.float64, order="C")
    pr.dhi = np.array(dhi if dhi is not None else np.zeros(n), dtype=np.float64, order="C")
    pr.P = np.array(P if P is not None else np.zeros((n, n)), dtype=np.float64, order="C")
    pr.pc = np.array(pc if pc is not None else np.zeros(n), dtype=np.float64, order="C")
    pr.r_buf = np.zeros(m)
    pr.tmp = np.zeros(n)

    cdef double[::1] x = np.array(x0, dtype=np.float64)
    cdef double[::1] y = np.zeros(n)
    cdef double[::1] xn = np.zeros(n)
    cdef double[::1] gx = np.zeros(n)
    cdef double[::1] gy = np.zeros(n)
    cdef double[::1] gn = np.zeros(n)
    cdef double[::1] w = np.zeros(n)
    cdef double fx, fy, fn, step = step0, resid, tk = 1.0, tn, beta, dd, gd, gdiff, restart
    cdef int it, bt, i, clean

    pr.proj(x, x)
    fx = pr.phi(x, gx)
    resid = _gm_resid(pr, x, gx, step, w)
    if resid <= tol:
        return np.asarray(x).copy(), fx, resid, 0, step, 0
    for i in range(n):
        y[i] = x[i]
        gy[i] = gx[i]
    fy = fx
    for it in range(1, max_iter + 1):
        clean = 1
        for bt in range(BACKTRACK_MAX):
            for i in range(n):
                w[i] = y[i] - step * gy[i]
            pr.proj(w, xn)
            dd = 0.0
            gd = 0.0
            for i in range(n):
                dd += (xn[i] - y[i]) * (xn[i] - y[i])
                gd += gy[i] * (xn[i] - y[i])
            fn = pr.phi(xn, gn)
            gdiff = 0.0
            for i in range(n):
                gdiff += (gn[i] - gy[i]) * (xn[i] - y[i])
            if fn <= fy + gd + 0.5 * dd / step or gdiff <= 0.5 * dd / step:
                break
            step *= 0.5
            clean = 0
        if fn < unbounded:
            return np.asarray(xn).copy(), fn, INFINITY, it, step, 2
        resid = _gm_resid(pr, xn, gn, step, w)
        if resid <= tol:
            return np.asarray(xn).copy(), fn, resid, it, step, 0
        tn = 0.5 * (1.0 + sqrt(1.0 + 4.0 * tk * tk))
        restart = 0.0
        for i in range(n):
            restart += (y[i] - xn[i]) * (xn[i] - x[i])
        if restart > 0.0:
            tn = 1.0
            for i in range(n):
                y[i] = xn[i]
                gy[i] = gn[i]
            fy = fn
        else:
            beta = (tk - 1.0) / tn
            for i in range(n):
                y[i] = xn[i] + beta * (xn[i] - x[i])
            if beta == 0.0:
                for i in range(n):
                    gy[i] = gn[i]
                fy = fn
            else:
                fy = pr.phi(y, gy)
        for i in range(n):
            x[i] = xn[i]
        fx = fn
        tk = tn
        if clean:
            step = min(2.0 * step, STEP_MAX)
    return np.asarray(x).copy(), fx, resid, max_iter, step, 1


# ---------------------------------------------------------------- max-affine


cdef int _solve(double* M, double* rhs, int k) nogil:
    """In-place Gaussian elimination with partial pivoting; 0 on success."""
    cdef int col, row, piv, j
    cdef double best, t, amax = 0.0
    for row in range(k * k):
        if fabs(M[row]) > amax:
            amax = fabs(M[row])
    if amax == 0.0:
        return 1
    for col in range(k):
        piv = col
        best = fabs(M[col * k + col])
        for row in range(col + 1, k):
            if fabs(M[row * k + col]) > best:
                best = fabs(M[row * k + col])
                piv = row
        if best <= 1e-13 * amax:
            return 1
        if piv != col:
            for j in range(k):
                t = M[col * k + j]
                M[col * k + j] = M[piv * k + j]
                M[piv * k + j] = t
            t = rhs[col]
            rhs[col] = rhs[piv]
            rhs[piv] = t
        for row in range(col + 1, k):
            t = M[row * k + col] / M[col * k + col]
            if t != 0.0:
                for j in range(col, k):
                    M[row * k + j] -= t * M[col * k + j]
                rhs[row] -= t * rhs[col]
    for col in range(k - 1, -1, -1):
        t = rhs[col]
        for j in range(col + 1, k):
            t -= M[col * k + j] * rhs[j]
        rhs[col] = t / M[col * k + col]
    return 0


cdef int _next_comb(int* T, int size, int N) nogil:
    cdef int i = size - 1, j
    while i >= 0 and T[i] == N - size + i:
        i -= 1
    if i < 0:
        return 0
    T[i] += 1
    for j in range(i + 1, size):
        T[j] = T[j - 1] + 1
    return 1


cdef int _dominates(double[:, ::1] A, double[::1] b, double[::1] mu, int i, double tol) noexcept:
    # piece i attains the max; differences are tested against their own rounding scale
    cdef int p, j, N = A.shape[0], d = A.shape[1]
    cdef double gap, bound, dij
    for p in range(N):
        gap = b[p] - b[i]
        bound = 1.0 + fabs(gap)
        for j in range(d):
            dij = A[p, j] - A[i, j]
            gap += dij * mu[j]
            bound += fabs(dij) * fabs(mu[j])
        if gap > tol * bound:
            return 0
    return 1


def maxaffine_prox(A_in, b_in, lam_in, double gamma, double tol=1e-12):
    cdef double[:, ::1] A = np.array(A_in, dtype=np.float64, order="C")
    cdef double[::1] b = np.array(b_in, dtype=np.float64, order="C")
    cdef double[::1] lam = np.array(lam_in, dtype=np.float64, order="C")
    cdef int N = A.shape[0], d = A.shape[1]
    cdef int i, j, p, size, kk, maxsize = min(N, d + 1), ok
    cdef double vmax, vi, scale, aa, obj, best_obj = INFINITY, acc
    cdef double[::1] mu = np.zeros(d)
    cdef double[::1] best_mu = np.zeros(d)
    cdef double[::1] best_w = np.zeros(maxsize)
    cdef int[::1] best_T = np.zeros(maxsize, dtype=np.intc)
    cdef int best_size = 0
    cdef int* T = <int*>malloc(maxsize * sizeof(int))
    cdef double* M = <double*>malloc((maxsize + 1) * (maxsize + 1) * sizeof(double))
    cdef double* M0 = <double*>malloc((maxsize + 1) * (maxsize + 1) * sizeof(double))
    cdef double* rhs = <double*>malloc((maxsize + 1) * sizeof(double))
    cdef double* rhs0 = <double*>malloc((maxsize + 1) * sizeof(double))
    try:
        vmax = -INFINITY
        aa = 0.0
        for i in range(N):
            acc = b[i]
            vi = 0.0
            for j in range(d):
                acc += A[i, j] * lam[j]
                vi += A[i, j] * A[i, j]
            if fabs(acc) > vmax:
                vmax = fabs(acc)
            if vi > aa:
                aa = vi
        scale = 1.0 + vmax + gamma * aa
        for i in range(N):
            for j in range(d):
                mu[j] = lam[j] - gamma * A[i, j]
            if _dominates(A, b, mu, i, tol):
                return np.asarray(mu).copy(), np.array([1.0]), (i,)
        for size in range(2, maxsize + 1):
            for i in range(size):
                T[i] = i
            while True:
                kk = size + 1
                for i in range(size):
                    for j in range(size):
                        acc = 0.0
                        for p in range(d):
                            acc += A[T[i], p] * A[T[j], p]
                        M[i * kk + j] = gamma * acc
                    M[i * kk + size] = 1.0
                    M[size * kk + i] = 1.0
                    # values relative to the first piece; the constant absorbs the common part
                    acc = b[T[i]] - b[T[0]]
                    for p in range(d):
                        acc += (A[T[i], p] - A[T[0], p]) * lam[p]
                    rhs[i] = acc
                M[size * kk + size] = 0.0
                rhs[size] = 1.0
                for i in range(kk * kk):
                    M0[i] = M[i]
                for i in range(kk):
                    rhs0[i] = rhs[i]
                ok = _solve(M, rhs, kk) == 0
                if ok:
                    acc = 0.0
                    for i in range(kk):
                        vi = -rhs0[i]
                        for j in range(kk):
                            vi += M0[i * kk + j] * rhs[j]
                        acc += vi * vi
                        if not isfinite(rhs[i]):
                            ok = 0
                    if sqrt(acc) > tol * scale:
                        ok = 0
                if ok:
                    for i in range(size):
                        if rhs[i] < -tol:
                            ok = 0
                if ok:
                    for j in range(d):
                        acc = lam[j]
                        for i in range(size):
                            acc -= gamma * A[T[i], j] * rhs[i]
                        mu[j] = acc
                    vmax = -INFINITY
                    for p in range(N):
                        acc = b[p]
                        for j in range(d):
                            acc += A[p, j] * mu[j]
                        if acc > vmax:
                            vmax = acc
                    if not _dominates(A, b, mu, T[0], tol):
                        ok = 0
                if ok:
                    obj = vmax
                    for j in range(d):
                        obj += (mu[j] - lam[j]) * (mu[j] - lam[j]) / (2.0 * gamma)
                    if obj < best_obj:
                        best_obj = obj
                        best_size = size
                        for j in range(d):
                            best_mu[j] = mu[j]
                        for i in range(size):
                            best_w[i] = rhs[i] if rhs[i] > 0.0 else 0.0
                            best_T[i] = T[i]
                if not _next_comb(T, size, N):
                    break
        if best_size == 0:
            raise ValueError("no support set satisfies the prox optimality conditions")
        return (
            np.asarray(best_mu).copy(),
            np.asarray(best_w)[:best_size].copy(),
            tuple(int(best_T[i]) for i in range(best_size)),
        )
    finally:
        free(T)
        free(M)
        free(M0)
        free(rhs)
        free(rhs0)


def maxaffine_conj(A_in, b_in, s_in, double tol=1e-10):
    cdef double[:, ::1] A = np.array(A_in, dtype=np.float64, order="C")
    cdef double[::1] b = np.array(b_in, dtype=np.float64, order="C")
    cdef double[::1] s = np.array(s_in, dtype=np.float64, order="C")
    cdef int N = A.shape[0], d = A.shape[1]
    cdef int i, j, p, size, maxsize = min(N, d + 1), ok
    cdef double scale, acc, vi, best = INFINITY, val, amax = 0.0, smax = 0.0
    cdef int* T = <int*>malloc(maxsize * sizeof(int))
    cdef double* G = <double*>malloc(maxsize * maxsize * sizeof(double))
    cdef double* rhs = <double*>malloc(maxsize * sizeof(double))
    try:
        for i in range(N):
            for j in range(d):
                if fabs(A[i, j]) > amax:
                    amax = fabs(A[i, j])
        for j in range(d):
            if fabs(s[j]) > smax:
                smax = fabs(s[j])
        scale = 1.0 + amax + smax
        for size in range(1, maxsize + 1):
            for i in range(size):
                T[i] = i
            while True:
                # normal equations of [A_T^T; 1^T] w = [s; 1]
                for i in range(size):
                    for j in range(size):
                        acc = 1.0
                        for p in range(d):
                            acc += A[T[i], p] * A[T[j], p]
                        G[i * size + j] = acc
                    acc = 1.0
                    for p in range(d):
                        acc += A[T[i], p] * s[p]
                    rhs[i] = acc
                ok = _solve(G, rhs, size) == 0
                if ok:
                    acc = 0.0
                    for p in range(d):
                        vi = -s[p]
                        for i in range(size):
                            vi += A[T[i], p] * rhs[i]
                        acc += vi * vi
                    vi = -1.0
                    for i in range(size):
                        vi += rhs[i]
                        if rhs[i] < -tol:
                            ok = 0
                    acc += vi * vi
                    if sqrt(acc) > tol * scale:
                        ok = 0
                if ok:
                    val = 0.0
                    for i in range(size):
                        val -= b[T[i]] * rhs[i]
                    if val < best:
                        best = val
                if not _next_comb(T, size, N):
                    break
        return best
    finally:
        free(T)
        free(G)
        free(rhs)
