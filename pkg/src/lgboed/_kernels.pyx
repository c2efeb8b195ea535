# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Signatures mirror :mod:`lgboed._fallback` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef int _cholesky(double* S, int s) noexcept nogil:
    # in-place lower Cholesky of a row-major s x s matrix; returns 0 on success
    cdef int i, j, k
    cdef double acc
    for j in range(s):
        acc = S[j * s + j]
        for k in range(j):
            acc -= S[j * s + k] * S[j * s + k]
        if not acc > 0.0:
            return -1
        acc = sqrt(acc)
        S[j * s + j] = acc
        for i in range(j + 1, s):
            for k in range(j):
                S[i * s + j] -= S[i * s + k] * S[j * s + k]
            S[i * s + j] /= acc
    return 0


cdef void _chol_solve(const double* L, int s, double* b) noexcept nogil:
    # solve (L L^T) z = b in place for one right-hand side
    cdef int i, k
    cdef double acc
    for i in range(s):
        acc = b[i]
        for k in range(i):
            acc -= L[i * s + k] * b[k]
        b[i] = acc / L[i * s + i]
    for i in range(s - 1, -1, -1):
        acc = b[i]
        for k in range(i + 1, s):
            acc -= L[k * s + i] * b[k]
        b[i] = acc / L[i * s + i]


def riccati_fixed_point(const double[:, ::1] A, const double[:, ::1] H, const double[:, ::1] Q,
                        const double[:, ::1] R, double tol, long max_iter):
    """Iterate ``G <- A (G - G H^T (H G H^T + R)^-1 H G) A^T + Q`` from ``G = Q``.

    Returns ``(G, iterations, status)`` where status is 0 on convergence
    (Frobenius step below ``tol``), 1 when the budget ran out and 2 when the
    innovation covariance lost positive definiteness.
    """
    cdef int n = A.shape[0]
    cdef int s = H.shape[0]
    G_arr = np.array(Q, dtype=np.float64, copy=True)
    cdef double[:, ::1] G = G_arr
    cdef double* P = <double*>malloc(n * s * sizeof(double))
    cdef double* S = <double*>malloc(s * s * sizeof(double))
    cdef double* W = <double*>malloc(n * s * sizeof(double))
    cdef double* D = <double*>malloc(n * n * sizeof(double))
    cdef double* T = <double*>malloc(n * n * sizeof(double))
    cdef double* Gn = <double*>malloc(n * n * sizeof(double))
    cdef double* col = <double*>malloc(s * sizeof(double))
    cdef int i, j, k
    cdef long it = 0
    cdef int status = 1
    cdef double acc, diff, step
    if P == NULL or S == NULL or W == NULL or D == NULL or T == NULL or Gn == NULL or col == NULL:
        free(P); free(S); free(W); free(D); free(T); free(Gn); free(col)
        raise MemoryError()
    with nogil:
        while it < max_iter:
            it += 1
            # P = G H^T
            for i in range(n):
                for j in range(s):
                    acc = 0.0
                    for k in range(n):
                        acc += G[i, k] * H[j, k]
                    P[i * s + j] = acc
            # S = H P + R
            for i in range(s):
                for j in range(s):
                    acc = R[i, j]
                    for k in range(n):
                        acc += H[i, k] * P[k * s + j]
                    S[i * s + j] = acc
            for i in range(s):
                for j in range(i + 1, s):
                    acc = 0.5 * (S[i * s + j] + S[j * s + i])
                    S[i * s + j] = acc
                    S[j * s + i] = acc
            if _cholesky(S, s) != 0:
                status = 2
                break
            # W = P S^-1 (row by row)
            for i in range(n):
                for j in range(s):
                    col[j] = P[i * s + j]
                _chol_solve(S, s, col)
                for j in range(s):
                    W[i * s + j] = col[j]
            # D = G - W P^T
            for i in range(n):
                for j in range(n):
                    acc = G[i, j]
                    for k in range(s):
                        acc -= W[i * s + k] * P[j * s + k]
                    D[i * n + j] = acc
            # T = A D
            for i in range(n):
                for j in range(n):
                    acc = 0.0
                    for k in range(n):
                        acc += A[i, k] * D[k * n + j]
                    T[i * n + j] = acc
            # Gn = T A^T + Q
            for i in range(n):
                for j in range(n):
                    acc = Q[i, j]
                    for k in range(n):
                        acc += T[i * n + k] * A[j, k]
                    Gn[i * n + j] = acc
            diff = 0.0
            for i in range(n):
                for j in range(i, n):
                    acc = 0.5 * (Gn[i * n + j] + Gn[j * n + i])
                    step = acc - G[i, j]
                    diff += step * step if i == j else 2.0 * step * step
                    G[i, j] = acc
                    G[j, i] = acc
            if sqrt(diff) < tol:
                status = 0
                break
    free(P); free(S); free(W); free(D); free(T); free(Gn); free(col)
    return G_arr, int(it), status


def simulate_lti(const double[:, ::1] A, const double[:, ::1] H, const double[:, ::1] x0,
                 const double[:, :, ::1] eta, const double[:, :, ::1] v):
    """States ``x_t = A x_{t-1} + eta_t`` and outputs ``y_t = H x_t + v_t`` for a batch."""
    cdef int B = eta.shape[0]
    cdef int T = eta.shape[1]
    cdef int n = A.shape[0]
    cdef int s = H.shape[0]
    xs_arr = np.empty((B, T, n), dtype=np.float64)
    ys_arr = np.empty((B, T, s), dtype=np.float64)
    cdef double[:, :, ::1] xs = xs_arr
    cdef double[:, :, ::1] ys = ys_arr
    cdef double* x = <double*>malloc(n * sizeof(double))
    cdef double* xn = <double*>malloc(n * sizeof(double))
    cdef int b, t, i, k
    cdef double acc
    if x == NULL or xn == NULL:
        free(x); free(xn)
        raise MemoryError()
    with nogil:
        for b in range(B):
            for i in range(n):
                x[i] = x0[b, i]
            for t in range(T):
                for i in range(n):
                    acc = eta[b, t, i]
                    for k in range(n):
                        acc += A[i, k] * x[k]
                    xn[i] = acc
                for i in range(n):
                    x[i] = xn[i]
                    xs[b, t, i] = xn[i]
                for i in range(s):
                    acc = v[b, t, i]
                    for k in range(n):
                        acc += H[i, k] * x[k]
                    ys[b, t, i] = acc
    free(x); free(xn)
    return xs_arr, ys_arr


def filter_means(const double[:, ::1] A, const double[:, ::1] H, const double[:, :, ::1] gains,
                 const double[::1] mu0, const double[:, :, ::1] ys):
    """Kalman mean recursion with a precomputed gain sequence, for a batch of output series.

    Returns ``(mu_pred, mu_post)`` of shape ``(B, T, n)``.
    """
    cdef int B = ys.shape[0]
    cdef int T = ys.shape[1]
    cdef int s = ys.shape[2]
    cdef int n = A.shape[0]
    pred_arr = np.empty((B, T, n), dtype=np.float64)
    post_arr = np.empty((B, T, n), dtype=np.float64)
    cdef double[:, :, ::1] pred = pred_arr
    cdef double[:, :, ::1] post = post_arr
    cdef double* mu = <double*>malloc(n * sizeof(double))
    cdef double* mp = <double*>malloc(n * sizeof(double))
    cdef double* innov = <double*>malloc(s * sizeof(double))
    cdef int b, t, i, k
    cdef double acc
    if mu == NULL or mp == NULL or innov == NULL:
        free(mu); free(mp); free(innov)
        raise MemoryError()
    with nogil:
        for b in range(B):
            for i in range(n):
                mu[i] = mu0[i]
            for t in range(T):
                for i in range(n):
                    acc = 0.0
                    for k in range(n):
                        acc += A[i, k] * mu[k]
                    mp[i] = acc
                    pred[b, t, i] = acc
                for i in range(s):
                    acc = ys[b, t, i]
                    for k in range(n):
                        acc -= H[i, k] * mp[k]
                    innov[i] = acc
                for i in range(n):
                    acc = mp[i]
                    for k in range(s):
                        acc += gains[t, i, k] * innov[k]
                    mu[i] = acc
                    post[b, t, i] = acc
    free(mu); free(mp); free(innov)
    return pred_arr, post_arr
