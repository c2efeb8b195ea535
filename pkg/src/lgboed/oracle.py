"""Monte Carlo estimators of every criterion, by direct simulation from the true model.

These only use sampling, Kalman updates and the Gaussian density or divergence
definitions, never the closed-form criterion formulas, so they serve as an
independent check on :mod:`lgboed.criteria`.

Reproducibility: trajectory ``i`` draws from its own stream seeded by
``SeedSequence(seed, spawn_key=(i,))`` (single-step estimators use one stream
per fixed-size block of draws). Results therefore do not depend on the number
of worker processes, and identical configs give bit-identical estimates.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np
import scipy.linalg

from . import backend
from .core import GaussianBelief, LtiModel, ModelPair
from .errors import ValidationError
from .stationary import covariance_sequence, solve_lyapunov

CLIP_TOL = 1e-10
BLOCK = 1000  # draws per RNG stream in the single-step estimators
CHUNK = 25  # trajectories per work unit


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    n_samples: int = 10_000
    horizon: int = 1
    burn_in: int = 0

    def __post_init__(self):
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must be an integer in [0, 2^64), got {self.seed!r}")
        if self.n_samples < 1:
            raise ValidationError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.horizon < 1:
            raise ValidationError(f"horizon must be >= 1, got {self.horizon}")
        if not 0 <= self.burn_in < self.horizon:
            raise ValidationError(f"burn_in must lie in [0, horizon), got {self.burn_in}")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n: int

    def within(self, value: float, k: float = 3.0, abs_floor: float = 0.0) -> bool:
        """Whether ``value`` lies within ``k`` standard errors (or ``abs_floor``) of the mean."""
        return abs(self.mean - value) <= max(k * self.std_error, abs_floor)


def estimate(samples: np.ndarray) -> McEstimate:
    """Sample mean and its standard error (``inf`` for a single sample)."""
    samples = np.asarray(samples, dtype=float).ravel()
    n = samples.size
    if n == 0:
        raise ValidationError("no samples")
    se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return McEstimate(float(np.mean(samples)), se, n)


def psd_sqrt(C: np.ndarray, name: str = "covariance") -> np.ndarray:
    """A factor ``L`` with ``L L^T = C`` for symmetric PSD ``C``, via eigendecomposition.

    Eigenvalues in ``[-1e-10 * scale, 0)`` are clipped to zero; anything more
    negative is rejected.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    w, V = np.linalg.eigh(0.5 * (C + C.T))
    floor = -CLIP_TOL * max(1.0, float(np.max(np.abs(w), initial=0.0)))
    if w.size and w.min() < floor:
        raise ValidationError(f"{name} is not positive semidefinite (eigenvalue {w.min():.3e})")
    return V * np.sqrt(np.clip(w, 0.0, None))


def stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def _gaussian_draws(rng, mean, L, count):
    return mean + rng.standard_normal((count, L.shape[1])) @ L.T


# trajectories --------------------------------------------------------------


def simulate_arrays(A, H, Q, R, x0_mean, x0_cov, horizon: int, seed: int, index: int = 0):
    """Simulate one trajectory from raw matrices; ``Q``, ``R`` and ``x0_cov`` may be singular.

    Returns ``(states, observations)`` with shapes ``(horizon + 1, n)`` (row 0
    is ``x_0``) and ``(horizon, s)``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    n, s = A.shape[0], H.shape[0]
    rng = stream(seed, index)
    x0, eta, v = _trajectory_noise(
        rng,
        np.asarray(x0_mean, dtype=float),
        psd_sqrt(x0_cov, "x0_cov"),
        psd_sqrt(Q, "Q"),
        psd_sqrt(R, "R"),
        horizon,
    )
    xs, ys = backend.kernels.simulate_lti(
        np.ascontiguousarray(A), np.ascontiguousarray(H), x0[None], eta[None], v[None]
    )
    states = np.vstack([x0[None], xs[0]])
    return states.reshape(horizon + 1, n), ys[0].reshape(horizon, s)


def _trajectory_noise(rng, x0_mean, L0, Lq, Lr, horizon):
    x0 = _gaussian_draws(rng, x0_mean, L0, 1)[0]
    eta = rng.standard_normal((horizon, Lq.shape[1])) @ Lq.T
    v = rng.standard_normal((horizon, Lr.shape[1])) @ Lr.T
    return x0, np.ascontiguousarray(eta), np.ascontiguousarray(v)


def simulate_trajectory(model: LtiModel, horizon: int, seed: int, index: int = 0):
    """Draw ``x_0`` from ``model.init`` and iterate the state and observation equations."""
    return simulate_arrays(
        model.A, model.H, model.Q, model.R, model.init.mean, model.init.cov, horizon, seed, index
    )


def _simulate_batch(model: LtiModel, horizon: int, seed: int, indices: range):
    L0 = psd_sqrt(model.init.cov, "init covariance")
    Lq = psd_sqrt(model.Q, "Q")
    Lr = psd_sqrt(model.R, "R")
    B = len(indices)
    x0 = np.empty((B, model.n))
    eta = np.empty((B, horizon, model.n))
    v = np.empty((B, horizon, model.s))
    for b, i in enumerate(indices):
        x0[b], eta[b], v[b] = _trajectory_noise(
            stream(seed, i), model.init.mean, L0, Lq, Lr, horizon
        )
    return backend.kernels.simulate_lti(
        np.ascontiguousarray(model.A), np.ascontiguousarray(model.H), x0, eta, v
    )


def _run_filter(model: LtiModel, gains: np.ndarray, ys: np.ndarray):
    return backend.kernels.filter_means(
        np.ascontiguousarray(model.A),
        np.ascontiguousarray(model.H),
        np.ascontiguousarray(gains),
        np.ascontiguousarray(model.init.mean),
        np.ascontiguousarray(ys),
    )


def _map_chunks(fn, n: int, workers: int) -> np.ndarray:
    chunks = [range(a, min(a + CHUNK, n)) for a in range(0, n, CHUNK)]
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, chunks))
    else:
        parts = [fn(c) for c in chunks]
    return np.concatenate(parts)


# single-step estimators ----------------------------------------------------


def _blocks(n: int):
    for k, start in enumerate(range(0, n, BLOCK)):
        yield k, min(BLOCK, n - start)


def _posterior(model: LtiModel, prior: GaussianBelief):
    """Gain and posterior covariance of one measurement update."""
    S = model.H @ prior.cov @ model.H.T + model.R
    K = scipy.linalg.solve(S, model.H @ prior.cov, assume_a="pos").T
    cov = (np.eye(model.n) - K @ model.H) @ prior.cov
    return K, 0.5 * (cov + cov.T)


def _draw_observations(model: LtiModel, prior: GaussianBelief, cfg: SimConfig) -> np.ndarray:
    """Observations ``y = H x + v`` with ``x ~ prior``, ``v ~ N(0, R)``."""
    Lx = psd_sqrt(prior.cov, "prior covariance")
    Lr = psd_sqrt(model.R, "R")
    out = []
    for k, count in _blocks(cfg.n_samples):
        rng = stream(cfg.seed, k)
        x = _gaussian_draws(rng, prior.mean, Lx, count)
        v = rng.standard_normal((count, model.s)) @ Lr.T
        out.append(x @ model.H.T + v)
    return np.vstack(out)


def _logdet(C):
    sign, val = np.linalg.slogdet(C)
    if sign <= 0:
        raise ValidationError("covariance is not positive definite")
    return val


def _quad_rows(C, D):
    """``d_i^T C^-1 d_i`` for each row ``d_i`` of ``D``."""
    X = scipy.linalg.solve(C, D.T, assume_a="pos")
    return np.einsum("ij,ji->i", D, X)


def generalized_info_rows(r_means, r_cov, p_means, p_cov, q_means, q_cov) -> np.ndarray:
    """Generalized information ``I_r[p || q]`` for rows of means sharing covariances."""
    r_means, p_means, q_means = (np.atleast_2d(m) for m in (r_means, p_means, q_means))
    const = 0.5 * (
        np.trace(scipy.linalg.solve(q_cov, r_cov, assume_a="pos"))
        - np.trace(scipy.linalg.solve(p_cov, r_cov, assume_a="pos"))
        + _logdet(q_cov)
        - _logdet(p_cov)
    )
    return const + 0.5 * (_quad_rows(q_cov, r_means - q_means) - _quad_rows(p_cov, r_means - p_means))


def kl_rows(p1_means, p1_cov, p0_means, p0_cov) -> np.ndarray:
    """``KL(N(m1, C1) || N(m0, C0))`` for rows of means sharing covariances."""
    n = p1_cov.shape[0]
    const = 0.5 * (
        np.trace(scipy.linalg.solve(p0_cov, p1_cov, assume_a="pos")) - n + _logdet(p0_cov) - _logdet(p1_cov)
    )
    diff = np.atleast_2d(p1_means) - np.atleast_2d(p0_means)
    return const + 0.5 * _quad_rows(p0_cov, diff)


def _log_density_rows(y, mean, cov):
    s = cov.shape[0]
    return -0.5 * (s * math.log(2 * math.pi) + _logdet(cov) + _quad_rows(cov, y - mean))


def mc_eig_single_step(model: LtiModel, prior: GaussianBelief, cfg: SimConfig) -> McEstimate:
    """Average of ``KL(posterior || prior)`` over ``y`` drawn from the model's predictive."""
    ys = _draw_observations(model, prior, cfg)
    K, post_cov = _posterior(model, prior)
    post_means = prior.mean + (ys - prior.mean @ model.H.T) @ K.T
    return estimate(kl_rows(post_means, post_cov, prior.mean, prior.cov))


def mc_egig_single_step(
    pair: ModelPair, prior: GaussianBelief, prior_star: GaussianBelief, cfg: SimConfig
) -> McEstimate:
    """Average of ``I_{post*}[post || prior]`` over ``y`` drawn from the truth's predictive."""
    pair.require_same_state_dim("EGIG")
    m, ms = pair.inference, pair.truth
    ys = _draw_observations(ms, prior_star, cfg)
    K, post_cov = _posterior(m, prior)
    Ks, post_cov_s = _posterior(ms, prior_star)
    post = prior.mean + (ys - prior.mean @ m.H.T) @ K.T
    post_s = prior_star.mean + (ys - prior_star.mean @ ms.H.T) @ Ks.T
    return estimate(generalized_info_rows(post_s, post_cov_s, post, post_cov, prior.mean, prior.cov))


def mc_edi_single_step(
    pair: ModelPair, prior: GaussianBelief, prior_star: GaussianBelief, cfg: SimConfig
) -> McEstimate:
    """Average log Bayes factor ``log p(y | M*) - log p(y | M)`` over ``y`` from the truth."""
    m, ms = pair.inference, pair.truth
    ys = _draw_observations(ms, prior_star, cfg)
    S = m.H @ prior.cov @ m.H.T + m.R
    Ss = ms.H @ prior_star.cov @ ms.H.T + ms.R
    logp_star = _log_density_rows(ys, ms.H @ prior_star.mean, Ss)
    logp = _log_density_rows(ys, m.H @ prior.mean, S)
    return estimate(logp_star - logp)


# trajectory estimators -----------------------------------------------------


def _filter_pair(pair: ModelPair, cfg: SimConfig, indices: range):
    """Simulate from the truth and run both filters with their exact time-varying gains."""
    m, ms = pair.inference, pair.truth
    _, ys = _simulate_batch(ms, cfg.horizon, cfg.seed, indices)
    seq = covariance_sequence(m, cfg.horizon)
    seq_s = covariance_sequence(ms, cfg.horizon)
    pred, post = _run_filter(m, seq[2], ys)
    pred_s, post_s = _run_filter(ms, seq_s[2], ys)
    return (pred, post, seq), (pred_s, post_s, seq_s)


def _stacked_terms(C_inv, C_ref, diff):
    """``Tr[C_t^-1 C_ref_t]`` per step and ``d^T C_t^-1 d`` per trajectory and step."""
    trace = np.einsum("tij,tji->t", C_inv, C_ref)
    quad = np.einsum("bti,tij,btj->bt", diff, C_inv, diff)
    return trace, quad


def _stacked_logdet(C):
    sign, val = np.linalg.slogdet(C)
    if np.any(sign <= 0):
        raise ValidationError("covariance is not positive definite")
    return val


def _delta_edi_chunk(pair: ModelPair, cfg: SimConfig, indices: range) -> np.ndarray:
    m, ms = pair.inference, pair.truth
    (pred, _, seq), (pred_s, _, seq_s) = _filter_pair(pair, cfg, indices)
    t0 = cfg.burn_in
    S, Ss = seq[3][t0:], seq_s[3][t0:]
    diff = pred_s[:, t0:] @ ms.H.T - pred[:, t0:] @ m.H.T
    trace, quad = _stacked_terms(np.linalg.inv(S), Ss, diff)
    const = trace - m.s + _stacked_logdet(S) - _stacked_logdet(Ss)
    return 0.5 * np.mean(const[None, :] + quad, axis=1)


def _egig_chunk(pair: ModelPair, cfg: SimConfig, sigma_L: np.ndarray, indices: range) -> np.ndarray:
    (_, post, seq), (_, post_s, seq_s) = _filter_pair(pair, cfg, indices)
    t0 = cfg.burn_in
    P, Ps = seq[1][t0:], seq_s[1][t0:]
    r, p = post_s[:, t0:], post[:, t0:]
    T = P.shape[0]
    L_inv = np.broadcast_to(np.linalg.inv(sigma_L), (T,) + sigma_L.shape)
    tr_q, quad_q = _stacked_terms(L_inv, Ps, r)
    tr_p, quad_p = _stacked_terms(np.linalg.inv(P), Ps, r - p)
    const = tr_q - tr_p + _logdet(sigma_L) - _stacked_logdet(P)
    return 0.5 * np.mean(const[None, :] + quad_q - quad_p, axis=1)


def mc_delta_edi(pair: ModelPair, cfg: SimConfig, workers: int = 1) -> McEstimate:
    """Per-step predictive KL (truth to inference), averaged over steps after ``burn_in``.

    Each trajectory contributes its time average; the standard error is taken
    across trajectories.
    """
    values = _map_chunks(partial(_delta_edi_chunk, pair, cfg), cfg.n_samples, workers)
    return estimate(values)


def mc_egig_infinite_horizon(pair: ModelPair, cfg: SimConfig, workers: int = 1) -> McEstimate:
    """Generalized information of the mismatched filtered belief, viewed from the true
    filtered belief, against the stationary prior ``N(0, Sigma_L)``.

    Evaluated at every step after ``burn_in`` and time-averaged per trajectory;
    the standard error is taken across trajectories.
    """
    pair.require_same_state_dim("EGIG")
    sigma_L = solve_lyapunov(pair.inference.A, pair.inference.Q)
    values = _map_chunks(partial(_egig_chunk, pair, cfg, sigma_L), cfg.n_samples, workers)
    return estimate(values)


def mc_eig_infinite_horizon(model: LtiModel, cfg: SimConfig, workers: int = 1) -> McEstimate:
    """The matched special case of :func:`mc_egig_infinite_horizon`."""
    return mc_egig_infinite_horizon(ModelPair(model, model), cfg, workers)
