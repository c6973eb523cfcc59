"""Pure-numpy kernels; the reference for the compiled ``_kernels`` module.

Both modules expose the same three functions with identical semantics.
"""

import numpy as np


def _affine_min(G):
    """Weights of the min-norm point of the affine hull of the active vertices.

    Solves the bordered system ``[[G, 1], [1^T, 0]] [v; mu] = [0; 1]`` where
    ``G`` is the Gram matrix of the active (shifted) vertices. Returns None when
    the system is numerically singular.
    """
    m = G.shape[0]
    M = np.zeros((m + 1, m + 1))
    M[:m, :m] = G
    M[:m, m] = 1.0
    M[m, :m] = 1.0
    b = np.zeros(m + 1)
    b[m] = 1.0
    scale = max(1.0, float(np.abs(G).max()))
    # Gaussian elimination with partial pivoting, mirrored by the compiled kernel
    for c in range(m + 1):
        piv = c + int(np.argmax(np.abs(M[c:, c])))
        if abs(M[piv, c]) <= 1e-14 * scale:
            return None
        if piv != c:
            M[[c, piv]] = M[[piv, c]]
            b[[c, piv]] = b[[piv, c]]
        for r in range(c + 1, m + 1):
            f = M[r, c] / M[c, c]
            M[r, c:] -= f * M[c, c:]
            b[r] -= f * b[c]
    x = np.zeros(m + 1)
    for r in range(m, -1, -1):
        x[r] = (b[r] - M[r, r + 1:] @ x[r + 1:]) / M[r, r]
    return x[:m]


def frank_wolfe(points, query, tau, max_iter, gap_tol):
    """Fully-corrective Frank-Wolfe for ``min ||X^T lam - p||`` over the simplex.

    Each major iteration adds the Frank-Wolfe vertex to the active set, then
    re-optimises the weights over the active set exactly (Wolfe's min-norm-point
    minor cycle), so the weights stay on the simplex throughout. Starts at the
    vertex nearest ``query`` and stops as soon as the residual is within ``tau``
    (member), the duality gap certifies a distance above ``tau`` (non-member),
    the gap falls below ``gap_tol``, or ``max_iter`` major iterations have run.
    Returns ``(residual_norm, iterations, weights)``.
    """
    X = np.ascontiguousarray(points, dtype=np.float64)
    p = np.asarray(query, dtype=np.float64)
    Z = X - p
    n = Z.shape[0]
    tau2 = tau * tau
    j0 = int(np.argmin((Z * Z).sum(axis=1)))
    S = [j0]
    w = np.array([1.0])
    x = Z[j0].copy()
    it = 0
    while it < max_iter:
        f2 = x @ x
        if f2 <= tau2:
            break
        g = Z @ x
        j = int(np.argmin(g))
        gap = f2 - g[j]
        if 0.5 * f2 - gap > 0.5 * tau2 or gap <= gap_tol or j in S:
            break
        S.append(j)
        w = np.append(w, 0.0)
        it += 1
        while True:
            ZS = Z[S]
            v = _affine_min(ZS @ ZS.T)
            if v is None:
                S.pop()
                w = w[:-1]
                w /= w.sum()
                break
            if (v > 0.0).all():
                w = v
                break
            neg = v <= 0.0
            den = w[neg] - v[neg]
            theta = np.min(np.where(den > 0.0, w[neg] / np.where(den > 0.0, den, 1.0), 0.0))
            w = (1.0 - theta) * w + theta * v
            keep = w > 1e-15
            keep[np.argmin(np.where(neg, w, np.inf))] = False
            S = [s for s, k in zip(S, keep) if k]
            w = w[keep]
            w /= w.sum()
        x = w @ Z[S]
        if v is None:
            break
    lam = np.zeros(n)
    lam[S] = w
    return float(np.sqrt(x @ x)), it, lam


def hull_residuals(points, queries, tau, max_iter, gap_tol):
    Q = np.asarray(queries, dtype=np.float64)
    res = np.empty(Q.shape[0])
    iters = np.empty(Q.shape[0], dtype=np.int64)
    for i in range(Q.shape[0]):
        res[i], iters[i], _ = frank_wolfe(points, Q[i], tau, max_iter, gap_tol)
    return res, iters


def _assign(X, C):
    d2 = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def lloyd(points, centroids, max_iter, tol):
    """Lloyd iterations from the given centroids; empty clusters keep their centre.

    Stops once the summed squared centre shift is ``<= tol``. Returns
    ``(centroids, labels, iterations)`` with labels matching the final centres.
    """
    X = np.asarray(points, dtype=np.float64)
    C = np.array(centroids, dtype=np.float64)
    k = C.shape[0]
    it = 0
    while it < max_iter:
        labels = _assign(X, C)
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(C)
        np.add.at(sums, labels, X)
        new = C.copy()
        nz = counts > 0
        new[nz] = sums[nz] / counts[nz, None]
        shift = ((new - C) ** 2).sum()
        C = new
        it += 1
        if shift <= tol:
            break
    return C, _assign(X, C), it
