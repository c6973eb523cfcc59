# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: fully-corrective Frank-Wolfe hull membership and Lloyd k-means.

Mirrors ``steer._kernels_py`` line for line; see that module for semantics.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY

cnp.import_array()


cdef bint _affine_min(double[:, ::1] M, double[::1] b, double[::1] sol, Py_ssize_t m) noexcept nogil:
    # M holds the (m+1)x(m+1) bordered Gram system on entry; destroyed on exit
    cdef Py_ssize_t c, r, q, piv
    cdef double scale = 1.0, t, f
    for r in range(m):
        for q in range(m):
            if fabs(M[r, q]) > scale:
                scale = fabs(M[r, q])
    for r in range(m + 1):
        b[r] = 0.0
    b[m] = 1.0
    for c in range(m + 1):
        piv = c
        for r in range(c + 1, m + 1):
            if fabs(M[r, c]) > fabs(M[piv, c]):
                piv = r
        if fabs(M[piv, c]) <= 1e-14 * scale:
            return False
        if piv != c:
            for q in range(m + 1):
                t = M[c, q]
                M[c, q] = M[piv, q]
                M[piv, q] = t
            t = b[c]
            b[c] = b[piv]
            b[piv] = t
        for r in range(c + 1, m + 1):
            f = M[r, c] / M[c, c]
            for q in range(c, m + 1):
                M[r, q] -= f * M[c, q]
            b[r] -= f * b[c]
    for r in range(m, -1, -1):
        t = b[r]
        for q in range(r + 1, m + 1):
            t -= M[r, q] * sol[q]
        sol[r] = t / M[r, r]
    return True


cdef int _fw(const double[:, ::1] X, const double[::1] p, double tau, int max_iter,
             double gap_tol, double[::1] lam, double[::1] g, double[::1] x,
             Py_ssize_t[::1] S, double[::1] w, double[::1] v, double[:, ::1] M,
             double[::1] b, double[::1] sol, double* out_res) noexcept nogil:
    cdef Py_ssize_t n = X.shape[0], dim = X.shape[1], cap = S.shape[0]
    cdef Py_ssize_t i, j, a, c, m, j0, jmin, kk, drop
    cdef double tau2 = tau * tau, best, acc, t, f2, gap, theta, den, ratio, wsum, dropw
    cdef bint ok, allpos, member_of
    cdef int it = 0

    j0 = 0
    best = INFINITY
    for j in range(n):
        acc = 0.0
        for i in range(dim):
            t = X[j, i] - p[i]
            acc += t * t
        if acc < best:
            best = acc
            j0 = j
    m = 1
    S[0] = j0
    w[0] = 1.0
    for i in range(dim):
        x[i] = X[j0, i] - p[i]

    while it < max_iter:
        f2 = 0.0
        for i in range(dim):
            f2 += x[i] * x[i]
        if f2 <= tau2:
            break
        jmin = 0
        for j in range(n):
            acc = 0.0
            for i in range(dim):
                acc += (X[j, i] - p[i]) * x[i]
            g[j] = acc
            if acc < g[jmin]:
                jmin = j
        gap = f2 - g[jmin]
        if 0.5 * f2 - gap > 0.5 * tau2 or gap <= gap_tol:
            break
        member_of = False
        for a in range(m):
            if S[a] == jmin:
                member_of = True
        if member_of or m >= cap:
            break
        S[m] = jmin
        w[m] = 0.0
        m += 1
        it += 1
        ok = True
        while True:
            for a in range(m):
                for c in range(a, m):
                    acc = 0.0
                    for i in range(dim):
                        acc += (X[S[a], i] - p[i]) * (X[S[c], i] - p[i])
                    M[a, c] = acc
                    M[c, a] = acc
                M[a, m] = 1.0
                M[m, a] = 1.0
            M[m, m] = 0.0
            ok = _affine_min(M, b, sol, m)
            if not ok:
                m -= 1
                wsum = 0.0
                for a in range(m):
                    wsum += w[a]
                for a in range(m):
                    w[a] /= wsum
                break
            allpos = True
            for a in range(m):
                v[a] = sol[a]
                if v[a] <= 0.0:
                    allpos = False
            if allpos:
                for a in range(m):
                    w[a] = v[a]
                break
            theta = INFINITY
            drop = -1
            dropw = INFINITY
            for a in range(m):
                if v[a] <= 0.0:
                    den = w[a] - v[a]
                    ratio = w[a] / den if den > 0.0 else 0.0
                    if ratio < theta:
                        theta = ratio
            for a in range(m):
                w[a] = (1.0 - theta) * w[a] + theta * v[a]
            for a in range(m):
                if v[a] <= 0.0 and w[a] < dropw:
                    dropw = w[a]
                    drop = a
            kk = 0
            wsum = 0.0
            for a in range(m):
                if a != drop and w[a] > 1e-15:
                    S[kk] = S[a]
                    w[kk] = w[a]
                    wsum += w[a]
                    kk += 1
            m = kk
            for a in range(m):
                w[a] /= wsum
        for i in range(dim):
            acc = 0.0
            for a in range(m):
                acc += w[a] * (X[S[a], i] - p[i])
            x[i] = acc
        if not ok:
            break

    for j in range(n):
        lam[j] = 0.0
    for a in range(m):
        lam[S[a]] = w[a]
    f2 = 0.0
    for i in range(dim):
        f2 += x[i] * x[i]
    out_res[0] = sqrt(f2)
    return it


def _workspace(Py_ssize_t n, Py_ssize_t dim):
    cap = dim + 2
    return (np.zeros(n), np.zeros(n), np.zeros(dim), np.zeros(cap, dtype=np.intp),
            np.zeros(cap), np.zeros(cap), np.zeros((cap + 1, cap + 1)),
            np.zeros(cap + 1), np.zeros(cap + 1))


def frank_wolfe(points, query, double tau, int max_iter, double gap_tol):
    cdef const double[:, ::1] X = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[::1] p = np.ascontiguousarray(query, dtype=np.float64)
    lam, g, x, S, w, v, M, b, sol = _workspace(X.shape[0], X.shape[1])
    cdef double res = 0.0
    cdef int it = _fw(X, p, tau, max_iter, gap_tol, lam, g, x, S, w, v, M, b, sol, &res)
    return float(res), it, lam


def hull_residuals(points, queries, double tau, int max_iter, double gap_tol):
    cdef const double[:, ::1] X = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:, ::1] Q = np.ascontiguousarray(queries, dtype=np.float64)
    cdef Py_ssize_t m = Q.shape[0], q
    res_arr = np.empty(m)
    it_arr = np.empty(m, dtype=np.int64)
    cdef double[::1] res = res_arr
    cdef long long[::1] its = it_arr
    lam_a, g_a, x_a, S_a, w_a, v_a, M_a, b_a, sol_a = _workspace(X.shape[0], X.shape[1])
    cdef double[::1] lam = lam_a, g = g_a, x = x_a, w = w_a, v = v_a, b = b_a, sol = sol_a
    cdef Py_ssize_t[::1] S = S_a
    cdef double[:, ::1] M = M_a
    with nogil:
        for q in range(m):
            its[q] = _fw(X, Q[q], tau, max_iter, gap_tol, lam, g, x, S, w, v, M, b, sol, &res[q])
    return res_arr, it_arr


cdef void _assign(const double[:, ::1] X, const double[:, ::1] C, long long[::1] labels) noexcept nogil:
    cdef Py_ssize_t n = X.shape[0], dim = X.shape[1], k = C.shape[0], a, c, i
    cdef double best, acc, t
    cdef long long arg
    for a in range(n):
        best = INFINITY
        arg = 0
        for c in range(k):
            acc = 0.0
            for i in range(dim):
                t = X[a, i] - C[c, i]
                acc += t * t
            if acc < best:
                best = acc
                arg = c
        labels[a] = arg


def lloyd(points, centroids, int max_iter, double tol):
    cdef const double[:, ::1] X = np.ascontiguousarray(points, dtype=np.float64)
    C_arr = np.array(centroids, dtype=np.float64, order="C")
    cdef double[:, ::1] C = C_arr
    cdef Py_ssize_t n = X.shape[0], dim = X.shape[1], k = C.shape[0], a, c, i
    labels_arr = np.zeros(n, dtype=np.int64)
    cdef long long[::1] labels = labels_arr
    sums_arr = np.zeros((k, dim))
    cdef double[:, ::1] sums = sums_arr
    counts_arr = np.zeros(k, dtype=np.int64)
    cdef long long[::1] counts = counts_arr
    cdef double shift, t, nv
    cdef int it = 0
    with nogil:
        while it < max_iter:
            _assign(X, C, labels)
            for c in range(k):
                counts[c] = 0
                for i in range(dim):
                    sums[c, i] = 0.0
            for a in range(n):
                c = labels[a]
                counts[c] += 1
                for i in range(dim):
                    sums[c, i] += X[a, i]
            shift = 0.0
            for c in range(k):
                if counts[c] > 0:
                    for i in range(dim):
                        nv = sums[c, i] / counts[c]
                        t = nv - C[c, i]
                        shift += t * t
                        C[c, i] = nv
            it += 1
            if shift <= tol:
                break
        _assign(X, C, labels)
    return C_arr, labels_arr, it
