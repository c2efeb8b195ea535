"""Closed-form information criteria for linear-Gaussian models (all values in nats).

Single-step criteria take caller-supplied predictive beliefs
``N(mu_{t|t-1}, Sigma_{t|t-1})``; apply :func:`lgboed.stationary.predict` first
when one step of dynamics is wanted. Asymptotic criteria take the outputs of
:func:`lgboed.stationary.solve_dare` and :func:`lgboed.stationary.joint_moments`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import GaussianBelief, LtiModel, ModelPair
from .errors import SingularCovarianceError, ValidationError
from .stationary import (
    JointStationaryMoments,
    StationaryQuantities,
    mean_difference_maps,
    predict,
)


@dataclass(frozen=True)
class CriteriaRecord:
    eig: float = float("nan")
    egig: float = float("nan")
    edi: float = float("nan")
    delta_edi: float = float("nan")


@dataclass(frozen=True, eq=False)
class DiscrepancyTerms:
    """``delta_H = H* - H`` (None if state dimensions differ) and ``delta_y = H* mu* - H mu``."""

    delta_H: np.ndarray | None
    delta_y: np.ndarray
    S: np.ndarray
    S_star: np.ndarray


class _PD:
    """Cholesky factor of a PD matrix with the handful of operations the criteria need."""

    def __init__(self, M: np.ndarray, what: str):
        M = 0.5 * (M + M.T)
        try:
            self.c = scipy.linalg.cho_factor(M, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SingularCovarianceError(f"{what} is not positive definite") from exc
        self.what = what

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.c[0]))))

    def solve(self, B: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve(self.c, B, check_finite=False)

    def trace_solve(self, B: np.ndarray) -> float:
        return float(np.trace(self.solve(B)))

    def quad(self, v: np.ndarray) -> float:
        return float(v @ self.solve(v))


def _check_dims(a: GaussianBelief, b: GaussianBelief) -> None:
    if a.dim != b.dim:
        raise ValidationError(f"dimension mismatch: {a.dim} vs {b.dim}")


def gaussian_kl(p1: GaussianBelief, p0: GaussianBelief) -> float:
    """``KL[p1 || p0]`` for multivariate normals."""
    _check_dims(p1, p0)
    f0 = _PD(p0.cov, "reference covariance")
    f1 = _PD(p1.cov, "covariance") if p1.dim else None
    d = p1.mean - p0.mean
    n = p1.dim
    logdet1 = f1.logdet() if f1 is not None else 0.0
    return 0.5 * (f0.trace_solve(p1.cov) - n + f0.quad(d) + f0.logdet() - logdet1)


def generalized_info(r: GaussianBelief, p: GaussianBelief, q: GaussianBelief) -> float:
    """``int r log(p / q)``: the change from ``q`` to ``p`` as seen from ``r``. May be negative."""
    _check_dims(r, p)
    _check_dims(r, q)
    fp = _PD(p.cov, "p covariance")
    fq = _PD(q.cov, "q covariance")
    dp = r.mean - p.mean
    dq = r.mean - q.mean
    return 0.5 * (
        fq.trace_solve(r.cov)
        - fp.trace_solve(r.cov)
        - fp.quad(dp)
        + fq.quad(dq)
        + fq.logdet()
        - fp.logdet()
    )


def predictive(model: LtiModel, prior: GaussianBelief) -> GaussianBelief:
    """Data predictive ``N(H mu, H Sigma H^T + R)`` of a predictive state belief."""
    if prior.dim != model.n:
        raise ValidationError(f"prior dimension {prior.dim} != state dimension {model.n}")
    H = model.H
    return GaussianBelief(H @ prior.mean, H @ prior.cov @ H.T + model.R)


def discrepancy_terms(
    pair: ModelPair, prior: GaussianBelief, prior_star: GaussianBelief
) -> DiscrepancyTerms:
    m, ms = pair.inference, pair.truth
    pred = predictive(m, prior)
    pred_star = predictive(ms, prior_star)
    delta_H = ms.H - m.H if pair.same_state_dim else None
    return DiscrepancyTerms(delta_H, pred_star.mean - pred.mean, pred.cov, pred_star.cov)


def eig_single_step(model: LtiModel, prior: GaussianBelief) -> float:
    """``1/2 log det(I + H^T R^-1 H Sigma)``, evaluated as ``1/2 (log|S| - log|R|)``."""
    S = predictive(model, prior).cov
    return 0.5 * (_PD(S, "S").logdet() - _PD(model.R, "R").logdet())


def eig_single_step_direct(model: LtiModel, prior: GaussianBelief) -> float:
    """The determinant-lemma form ``1/2 log det(I + H^T R^-1 H Sigma)``, for cross-checks."""
    H = model.H
    M = np.eye(model.n) + H.T @ np.linalg.solve(model.R, H) @ prior.cov
    sign, logdet = np.linalg.slogdet(M)
    return 0.5 * logdet


def eig_infinite_horizon(sq: StationaryQuantities) -> float:
    """``1/2 log(|Sigma_L| / |Sigma_D|)``."""
    return 0.5 * (_PD(sq.sigma_L, "Sigma_L").logdet() - _PD(sq.sigma_D, "Sigma_D").logdet())


def egig_single_step(
    pair: ModelPair, prior: GaussianBelief, prior_star: GaussianBelief
) -> float:
    """Expected generalized information gain of one update of the mismatched filter.

    Data are generated by ``pair.truth`` from the predictive ``prior_star``;
    inference uses ``pair.inference`` with predictive ``prior``.
    """
    pair.require_same_state_dim("EGIG")
    m, ms = pair.inference, pair.truth
    terms = discrepancy_terms(pair, prior, prior_star)
    fS = _PD(terms.S, "S")
    fR = _PD(m.R, "R")
    dH = terms.delta_H
    dHmu = dH @ prior_star.mean
    return 0.5 * (
        fS.logdet()
        - fR.logdet()
        - fR.trace_solve(dH @ prior_star.cov @ dH.T)
        - fR.trace_solve(ms.R)
        + fS.trace_solve(terms.S_star)
        - fR.quad(dHmu)
        + fS.quad(terms.delta_y)
    )


def egig_infinite_horizon(
    pair: ModelPair,
    joint: JointStationaryMoments,
    sq: StationaryQuantities,
    sq_star: StationaryQuantities,
) -> float:
    """``1/2 (Tr[Sigma_L^-1 Sigma_L*] - Tr[Sigma_D^-1 (Sigma_D* + M_delta)] + log|Sigma_L|/|Sigma_D|)``."""
    pair.require_same_state_dim("EGIG")
    fL = _PD(sq.sigma_L, "Sigma_L")
    fD = _PD(sq.sigma_D, "Sigma_D")
    return 0.5 * (
        fL.trace_solve(sq_star.sigma_L)
        - fD.trace_solve(sq_star.sigma_D + joint.M_delta)
        + fL.logdet()
        - fD.logdet()
    )


def edi_single_step(pair: ModelPair, prior: GaussianBelief, prior_star: GaussianBelief) -> float:
    """KL from the truth's data predictive to the inference model's; state dimensions may differ."""
    terms = discrepancy_terms(pair, prior, prior_star)
    fS = _PD(terms.S, "S")
    fSs = _PD(terms.S_star, "S*")
    s = terms.S.shape[0]
    return 0.5 * (
        fS.trace_solve(terms.S_star)
        + fS.logdet()
        - fSs.logdet()
        + fS.quad(terms.delta_y)
        - s
    )


def edi_augmented_special_case(
    model: LtiModel,
    prior: GaussianBelief,
    delta: np.ndarray,
    gamma_pred: np.ndarray,
    mu_delta: np.ndarray,
) -> float:
    """EDI when the truth observes ``[H, delta]`` on a state augmented with an independent block.

    ``prior`` is the inference model's predictive belief; ``gamma_pred`` and
    ``mu_delta`` are the predictive covariance and mean of the extra block.
    """
    delta = np.atleast_2d(np.asarray(delta, dtype=float))
    gamma_pred = np.atleast_2d(np.asarray(gamma_pred, dtype=float))
    mu_delta = np.atleast_1d(np.asarray(mu_delta, dtype=float))
    k = delta.shape[1]
    if delta.shape[0] != model.s or gamma_pred.shape != (k, k) or mu_delta.shape != (k,):
        raise ValidationError(
            f"incompatible shapes: delta {delta.shape}, gamma {gamma_pred.shape},"
            f" mu_delta {mu_delta.shape} for s={model.s}"
        )
    S = predictive(model, prior).cov
    fS = _PD(S, "S")
    extra = delta @ gamma_pred @ delta.T
    W = fS.solve(extra)
    sign, logdet = np.linalg.slogdet(np.eye(model.s) + W)
    shift = delta @ mu_delta
    return 0.5 * (float(np.trace(W)) - logdet + fS.quad(shift))


def delta_edi(
    pair: ModelPair,
    joint: JointStationaryMoments,
    sq: StationaryQuantities,
    sq_star: StationaryQuantities,
) -> float:
    """Asymptotic per-step growth of the EDI: ``1/2 (Tr[S^-1 S*] + log|S|/|S*| + Tr[S^-1 M_S] - s)``."""
    fS = _PD(sq.S, "S")
    fSs = _PD(sq_star.S, "S*")
    s = sq.S.shape[0]
    return 0.5 * (
        fS.trace_solve(sq_star.S)
        + fS.logdet()
        - fSs.logdet()
        + fS.trace_solve(joint.M_S)
        - s
    )


def edi_cumulative(pair: ModelPair, t: int, return_increments: bool = False):
    """EDI of the first ``t`` observations, summing expected per-step predictive KLs.

    Both filters start from their models' ``init``. Covariances and gains are
    the exact time-varying ones; the second moments of the stacked filter
    means follow ``M_k = A_k M_{k-1} A_k^T + Q_k`` with the per-step gains.
    """
    if t < 1:
        raise ValidationError(f"t must be >= 1, got {t}")
    m, ms = pair.inference, pair.truth
    n, ns = m.n, ms.n
    cov, cov_s = np.array(m.init.cov), np.array(ms.init.cov)
    z = np.concatenate([m.init.mean, ms.init.mean])
    second = np.outer(z, z)
    _, data_map = mean_difference_maps(pair)
    increments = np.empty(t)
    for k in range(t):
        pred = m.A @ cov @ m.A.T + m.Q
        pred_s = ms.A @ cov_s @ ms.A.T + ms.Q
        S = m.H @ pred @ m.H.T + m.R
        S_s = ms.H @ pred_s @ ms.H.T + ms.R
        fS = _PD(S, "S")
        fSs = _PD(S_s, "S*")
        dy2 = data_map @ second @ data_map.T
        increments[k] = 0.5 * (
            fS.trace_solve(S_s) + fS.logdet() - fSs.logdet() + fS.trace_solve(dy2) - m.s
        )
        K = fS.solve(m.H @ pred).T
        K_s = fSs.solve(ms.H @ pred_s).T
        step_A = np.zeros((n + ns, n + ns))
        step_A[:n, :n] = (np.eye(n) - K @ m.H) @ m.A
        step_A[:n, n:] = K @ ms.H @ ms.A
        step_A[n:, n:] = ms.A
        G = np.vstack([K, K_s])
        second = step_A @ second @ step_A.T + G @ S_s @ G.T
        second = 0.5 * (second + second.T)
        cov = (np.eye(n) - K @ m.H) @ pred
        cov = 0.5 * (cov + cov.T)
        cov_s = (np.eye(ns) - K_s @ ms.H) @ pred_s
        cov_s = 0.5 * (cov_s + cov_s.T)
    total = float(np.sum(increments))
    if return_increments:
        return total, increments
    return total


def evaluate_all(pair: ModelPair) -> CriteriaRecord:
    """All four criteria of a pair: single-step EIG/EGIG/EDI from the inits, asymptotic delta-EDI."""
    from .stationary import stationary_pair

    m, ms = pair.inference, pair.truth
    prior = predict(m, m.init)
    prior_star = predict(ms, ms.init)
    eig = eig_single_step(m, prior)
    egig = egig_single_step(pair, prior, prior_star) if pair.same_state_dim else float("nan")
    edi = edi_single_step(pair, prior, prior_star)
    sq, sq_star, joint = stationary_pair(pair)
    return CriteriaRecord(eig, egig, edi, delta_edi(pair, joint, sq, sq_star))


__all__ = [
    "CriteriaRecord",
    "DiscrepancyTerms",
    "gaussian_kl",
    "generalized_info",
    "predictive",
    "discrepancy_terms",
    "eig_single_step",
    "eig_single_step_direct",
    "eig_infinite_horizon",
    "egig_single_step",
    "egig_infinite_horizon",
    "edi_single_step",
    "edi_augmented_special_case",
    "delta_edi",
    "edi_cumulative",
    "evaluate_all",
]
