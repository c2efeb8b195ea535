"""Pure numpy implementations of the compiled kernels in ``_kernels.pyx``."""

from __future__ import annotations

import numpy as np
import scipy.linalg


def riccati_fixed_point(A, H, Q, R, tol, max_iter):
    G = np.array(Q, dtype=float, copy=True)
    it = 0
    status = 1
    while it < max_iter:
        it += 1
        P = G @ H.T
        S = H @ P + R
        S = 0.5 * (S + S.T)
        try:
            c = scipy.linalg.cho_factor(S, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            status = 2
            break
        W = scipy.linalg.cho_solve(c, P.T, check_finite=False).T
        D = G - W @ P.T
        Gn = A @ D @ A.T + Q
        Gn = 0.5 * (Gn + Gn.T)
        diff = np.linalg.norm(Gn - G)
        G = Gn
        if diff < tol:
            status = 0
            break
    return G, it, status


def simulate_lti(A, H, x0, eta, v):
    B, T, n = eta.shape
    xs = np.empty((B, T, n))
    x = np.array(x0, dtype=float, copy=True)
    for t in range(T):
        x = x @ A.T + eta[:, t]
        xs[:, t] = x
    ys = xs @ H.T + v
    return xs, ys


def filter_means(A, H, gains, mu0, ys):
    B, T, s = ys.shape
    n = A.shape[0]
    pred = np.empty((B, T, n))
    post = np.empty((B, T, n))
    mu = np.broadcast_to(np.asarray(mu0, dtype=float), (B, n))
    for t in range(T):
        mp = mu @ A.T
        innov = ys[:, t] - mp @ H.T
        mu = mp + innov @ gains[t].T
        pred[:, t] = mp
        post[:, t] = mu
    return pred, post
