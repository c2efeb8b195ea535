"""Kalman filtering and the stationary solvers built on it.

Everything here is data-independent except the filter means: the covariance
recursion, the discrete Lyapunov equation, the DARE and the joint moments of
the mismatched and true filter means.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from . import backend
from .core import GaussianBelief, LtiModel, ModelPair, require_stable
from .errors import ConvergenceError, SingularCovarianceError, ValidationError

LYAP_TOL = 1e-12
LYAP_MAX_DOUBLINGS = 64
DARE_TOL = 1e-12
DARE_MAX_ITER = 100_000
RESIDUAL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class FilterStep:
    predicted: GaussianBelief
    posterior: GaussianBelief
    gain: np.ndarray
    innovation_cov: np.ndarray


@dataclass(frozen=True, eq=False)
class StationaryQuantities:
    """Asymptotic covariances of one model.

    sigma_L : open-loop state covariance, ``Sigma_L = A Sigma_L A^T + Q``
    gamma   : one-step predictive covariance (DARE solution)
    sigma_D : filtered covariance
    K, S    : stationary gain and innovation covariance
    """

    sigma_L: np.ndarray
    gamma: np.ndarray
    sigma_D: np.ndarray
    K: np.ndarray
    S: np.ndarray
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class JointStationaryMoments:
    """Stationary second moments of the stacked filter means ``[mu_t; mu*_t]``.

    ``M_delta`` is ``None`` when the two state dimensions differ.
    """

    M: np.ndarray
    script_A: np.ndarray
    script_Q: np.ndarray
    M_delta: np.ndarray | None
    M_S: np.ndarray


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def _chol(S: np.ndarray, what: str = "innovation covariance"):
    try:
        return scipy.linalg.cho_factor(S, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(f"{what} is not positive definite") from exc


def _update(H, R, cov_pred):
    """Measurement update of a covariance; returns (posterior cov, gain, S)."""
    S = _sym(H @ cov_pred @ H.T + R)
    c = _chol(S)
    K = scipy.linalg.cho_solve(c, H @ cov_pred, check_finite=False).T
    n = cov_pred.shape[0]
    post = _sym((np.eye(n) - K @ H) @ cov_pred)
    return post, K, S


def predict(model: LtiModel, belief: GaussianBelief) -> GaussianBelief:
    """Time update: ``N(A mu, A Sigma A^T + Q)``."""
    if belief.dim != model.n:
        raise ValidationError(f"belief dimension {belief.dim} != state dimension {model.n}")
    A = model.A
    return GaussianBelief(A @ belief.mean, _sym(A @ belief.cov @ A.T + model.Q))


def kalman_step(model: LtiModel, prior: GaussianBelief, y) -> FilterStep:
    """Measurement update of the predictive belief ``prior`` with observation ``y``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if prior.dim != model.n:
        raise ValidationError(f"prior dimension {prior.dim} != state dimension {model.n}")
    if y.shape != (model.s,):
        raise ValidationError(f"observation must have length {model.s}, got shape {y.shape}")
    cov, K, S = _update(model.H, model.R, prior.cov)
    mean = prior.mean + K @ (y - model.H @ prior.mean)
    return FilterStep(prior, GaussianBelief(mean, cov), K, S)


def filter_trajectory(model: LtiModel, ys: Sequence) -> list[FilterStep]:
    """Run the filter from ``model.init`` over ``ys`` (predict, then update, per step)."""
    steps = []
    belief = model.init
    for y in ys:
        step = kalman_step(model, predict(model, belief), y)
        steps.append(step)
        belief = step.posterior
    return steps


def covariance_sequence(model: LtiModel, horizon: int, cov0: np.ndarray | None = None):
    """Predicted/posterior covariances, gains and innovation covariances for steps ``1..horizon``.

    Arrays have leading dimension ``horizon``. Once the recursion reaches an
    exact floating-point fixed point the remaining steps are copies.
    """
    n, s = model.n, model.s
    A, H, Q, R = model.A, model.H, model.Q, model.R
    pred = np.empty((horizon, n, n))
    post = np.empty((horizon, n, n))
    gains = np.empty((horizon, n, s))
    innov = np.empty((horizon, s, s))
    cov = np.array(model.init.cov if cov0 is None else cov0, dtype=float)
    t = 0
    while t < horizon:
        p = _sym(A @ cov @ A.T + Q)
        c, K, S = _update(H, R, p)
        pred[t], post[t], gains[t], innov[t] = p, c, K, S
        t += 1
        if t > 1 and np.array_equal(c, cov):
            pred[t:], post[t:], gains[t:], innov[t:] = p, c, K, S
            break
        cov = c
    return pred, post, gains, innov


def _residual_ok(residual: np.ndarray, X: np.ndarray) -> bool:
    return np.linalg.norm(residual) < RESIDUAL_TOL * (1.0 + np.linalg.norm(X))


def solve_lyapunov(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Solve ``X = A X A^T + Q`` for stable ``A`` by doubling.

    Each pass adds ``A_k X A_k^T`` and squares ``A_k``, so pass ``k`` covers
    ``2^k`` steps of the plain fixed-point iteration.
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or Q.shape != A.shape:
        raise ValidationError(f"incompatible shapes A {A.shape}, Q {Q.shape}")
    require_stable(A)
    X = _sym(Q)
    Ak = A.copy()
    for _ in range(LYAP_MAX_DOUBLINGS):
        step = Ak @ X @ Ak.T
        X = _sym(X + step)
        if np.linalg.norm(step) < LYAP_TOL:
            break
        Ak = Ak @ Ak
    else:
        raise ConvergenceError("Lyapunov doubling did not converge", last_iterate=X)
    if not _residual_ok(A @ X @ A.T + Q - X, X):
        raise ConvergenceError("Lyapunov solution fails its residual check", last_iterate=X)
    return X


def dare_residual(model: LtiModel, gamma: np.ndarray) -> np.ndarray:
    A, H, Q, R = model.A, model.H, model.Q, model.R
    S = H @ gamma @ H.T + R
    AG = A @ gamma
    return AG @ A.T + Q - AG @ H.T @ np.linalg.solve(S, H @ gamma @ A.T) - gamma


def solve_dare(model: LtiModel, sigma_L: np.ndarray | None = None) -> StationaryQuantities:
    """Stationary filter quantities by iterating the covariance recursion from ``Q``.

    The step tolerance is ``1e-12 * max(1, ||Q||_F)``. With ``H = 0`` the
    recursion is the Lyapunov equation, whose solution is returned directly.
    """
    A, H, Q, R = model.A, model.H, model.Q, model.R
    require_stable(A)
    if not np.any(H):
        if sigma_L is None:
            sigma_L = solve_lyapunov(A, Q)
        sigma_D, K, S = _update(H, R, sigma_L)
        return StationaryQuantities(sigma_L, sigma_L, sigma_D, K, S, 0)
    tol = DARE_TOL * max(1.0, float(np.linalg.norm(Q)))
    gamma, iterations, status = backend.kernels.riccati_fixed_point(
        np.ascontiguousarray(A),
        np.ascontiguousarray(H),
        np.ascontiguousarray(Q),
        np.ascontiguousarray(R),
        tol,
        DARE_MAX_ITER,
    )
    if status == 2:
        raise SingularCovarianceError("innovation covariance lost positive definiteness")
    if status != 0:
        raise ConvergenceError(
            f"Riccati iteration did not converge in {iterations} steps",
            last_iterate=gamma,
            iterations=iterations,
        )
    if not _residual_ok(dare_residual(model, gamma), gamma):
        raise ConvergenceError("DARE solution fails its residual check", last_iterate=gamma)
    sigma_D, K, S = _update(H, R, gamma)
    if sigma_L is None:
        sigma_L = solve_lyapunov(A, Q)
    return StationaryQuantities(sigma_L, gamma, sigma_D, K, S, iterations)


def joint_system(pair: ModelPair, sq: StationaryQuantities, sq_star: StationaryQuantities):
    """Transition and noise blocks of the stacked mean recursion ``z_t = A z_{t-1} + noise``."""
    m, ms = pair.inference, pair.truth
    n, ns = m.n, ms.n
    K, Ks = sq.K, sq_star.K
    script_A = np.zeros((n + ns, n + ns))
    script_A[:n, :n] = (np.eye(n) - K @ m.H) @ m.A
    script_A[:n, n:] = K @ ms.H @ ms.A
    script_A[n:, n:] = ms.A
    G = np.vstack([K, Ks])
    script_Q = _sym(G @ sq_star.S @ G.T)
    return script_A, script_Q


def mean_difference_maps(pair: ModelPair):
    """Row blocks ``[-I I]`` (state space, or None) and ``[-HA  H*A*]`` (data space)."""
    m, ms = pair.inference, pair.truth
    state = None
    if pair.same_state_dim:
        state = np.hstack([-np.eye(m.n), np.eye(ms.n)])
    data = np.hstack([-m.H @ m.A, ms.H @ ms.A])
    return state, data


def joint_moments(
    pair: ModelPair, sq: StationaryQuantities, sq_star: StationaryQuantities
) -> JointStationaryMoments:
    """Stationary covariance of ``[mu_t; mu*_t]`` when both filters run on data from the truth."""
    script_A, script_Q = joint_system(pair, sq, sq_star)
    M = solve_lyapunov(script_A, script_Q)
    state, data = mean_difference_maps(pair)
    M_delta = _sym(state @ M @ state.T) if state is not None else None
    M_S = _sym(data @ M @ data.T)
    return JointStationaryMoments(M, script_A, script_Q, M_delta, M_S)


def stationary_pair(pair: ModelPair):
    """``(sq, sq_star, joint)`` for a pair, reusing the inference solution when M is M*."""
    sq = solve_dare(pair.inference)
    sq_star = sq if pair.truth is pair.inference else solve_dare(pair.truth)
    return sq, sq_star, joint_moments(pair, sq, sq_star)
