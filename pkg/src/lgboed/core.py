"""Gaussian beliefs, linear time-invariant models and continuous-to-discrete conversion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, StabilityError, ValidationError

SYM_TOL = 1e-9
PSD_TOL = 1e-10
PD_TOL = 1e-12
STABILITY_MARGIN = 1e-8


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def symmetrize(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Return ``(M + M^T) / 2`` after checking ``M`` is square and nearly symmetric."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{name} contains non-finite entries")
    scale = max(1.0, float(np.max(np.abs(M))) if M.size else 0.0)
    asym = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if asym > SYM_TOL * scale:
        raise ValidationError(f"{name} is not symmetric (max asymmetry {asym:.3g})")
    return 0.5 * (M + M.T)


def check_psd(M: np.ndarray, name: str = "matrix") -> None:
    if M.size == 0:
        return
    eig = np.linalg.eigvalsh(M)
    # tolerance grows with the matrix scale so large-unit states are not rejected for rounding
    if eig[0] < -PSD_TOL * max(1.0, abs(eig[-1])):
        raise ValidationError(
            f"{name} is not positive semidefinite (smallest eigenvalue {eig[0]:.3g})"
        )


def check_pd(M: np.ndarray, name: str = "matrix") -> None:
    if M.size == 0:
        return
    eig = np.linalg.eigvalsh(M)
    if eig[0] <= PD_TOL:
        raise ValidationError(
            f"{name} must be positive definite (smallest eigenvalue {eig[0]:.3g})"
        )


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    """Multivariate normal belief N(mean, cov); the covariance is symmetrized and PSD-checked."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.ndim != 1:
            raise ValidationError(f"mean must be a vector, got shape {mean.shape}")
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        cov = symmetrize(cov, "cov")
        if cov.shape[0] != mean.shape[0]:
            raise ValidationError(
                f"mean has length {mean.shape[0]} but cov is {cov.shape[0]}x{cov.shape[1]}"
            )
        check_psd(cov, "cov")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def make_belief(mean, cov) -> GaussianBelief:
    return GaussianBelief(mean, cov)


@dataclass(frozen=True, eq=False)
class LtiModel:
    """Discrete-time model ``x_t = A x_{t-1} + eta_t``, ``y_t = H x_t + v_t``.

    ``eta_t ~ N(0, Q)`` with ``Q`` PSD, ``v_t ~ N(0, R)`` with ``R`` PD, and
    ``x_0 ~ init``. When ``init`` is omitted it defaults to ``N(0, I)``.
    """

    A: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    init: GaussianBelief | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValidationError(f"A must be square, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ValidationError("A contains non-finite entries")
        n = A.shape[0]
        H = np.asarray(self.H, dtype=float)
        if H.ndim == 1:
            H = H.reshape(1, -1)
        if H.ndim != 2 or H.shape[1] != n:
            raise ValidationError(f"H must have {n} columns, got shape {H.shape}")
        if not np.all(np.isfinite(H)):
            raise ValidationError("H contains non-finite entries")
        s = H.shape[0]
        Q = symmetrize(np.atleast_2d(self.Q), "Q")
        if Q.shape != (n, n):
            raise ValidationError(f"Q must be {n}x{n}, got {Q.shape}")
        check_psd(Q, "Q")
        R = symmetrize(np.atleast_2d(self.R), "R")
        if R.shape != (s, s):
            raise ValidationError(f"R must be {s}x{s}, got {R.shape}")
        check_pd(R, "R")
        init = self.init
        if init is None:
            init = GaussianBelief(np.zeros(n), np.eye(n))
        elif not isinstance(init, GaussianBelief):
            init = GaussianBelief(*init)
        if init.dim != n:
            raise ValidationError(f"init has dimension {init.dim}, expected {n}")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "H", _frozen(H))
        object.__setattr__(self, "Q", _frozen(Q))
        object.__setattr__(self, "R", _frozen(R))
        object.__setattr__(self, "init", init)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def s(self) -> int:
        return self.H.shape[0]

    def replace(self, **changes) -> "LtiModel":
        fields = dict(A=self.A, H=self.H, Q=self.Q, R=self.R, init=self.init)
        fields.update(changes)
        return LtiModel(**fields)


@dataclass(frozen=True, eq=False)
class ModelPair:
    """Inference model ``inference`` (M) and data-generating model ``truth`` (M*)."""

    inference: LtiModel
    truth: LtiModel

    def __post_init__(self):
        if self.inference.s != self.truth.s:
            raise ValidationError(
                f"observation dimensions differ: {self.inference.s} vs {self.truth.s}"
            )

    @property
    def same_state_dim(self) -> bool:
        return self.inference.n == self.truth.n

    def require_same_state_dim(self, what: str) -> None:
        if not self.same_state_dim:
            raise ValidationError(
                f"{what} needs equal state dimensions, got n={self.inference.n}"
                f" and n*={self.truth.n}"
            )


@dataclass(frozen=True, eq=False)
class CtlsModel:
    """Continuous dynamics ``dx/dt = Ac x`` sampled every ``dt`` with discrete noise ``Qd``, ``Rd``."""

    Ac: np.ndarray
    C: np.ndarray
    dt: float
    Qd: np.ndarray
    Rd: np.ndarray
    init: GaussianBelief | None = None
    state_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValidationError(f"dt must be positive, got {self.dt}")
        Ac = np.atleast_2d(np.asarray(self.Ac, dtype=float))
        if Ac.shape[0] != Ac.shape[1]:
            raise ValidationError(f"Ac must be square, got shape {Ac.shape}")
        C = np.asarray(self.C, dtype=float)
        if C.ndim == 1:
            C = C.reshape(1, -1)
        if C.shape[1] != Ac.shape[0]:
            raise ValidationError(f"C must have {Ac.shape[0]} columns, got shape {C.shape}")
        Qd = symmetrize(np.atleast_2d(self.Qd), "Qd")
        check_psd(Qd, "Qd")
        Rd = symmetrize(np.atleast_2d(self.Rd), "Rd")
        check_pd(Rd, "Rd")
        object.__setattr__(self, "Ac", _frozen(Ac))
        object.__setattr__(self, "C", _frozen(C))
        object.__setattr__(self, "Qd", _frozen(Qd))
        object.__setattr__(self, "Rd", _frozen(Rd))
        object.__setattr__(self, "dt", float(self.dt))


def expm(M: np.ndarray) -> np.ndarray:
    """Matrix exponential (scaling and squaring with a Pade kernel)."""
    return scipy.linalg.expm(np.asarray(M, dtype=float))


def discretize(ctls: CtlsModel, init: GaussianBelief | None = None) -> LtiModel:
    """Sample ``ctls`` at its time step: ``A = exp(Ac dt)``, ``H = C``, ``Q = Qd``, ``R = Rd``.

    The initial belief is ``init`` if given, else ``ctls.init``, else the
    stationary distribution ``N(0, Sigma_L)`` when ``A`` is stable and
    ``N(0, I)`` otherwise.
    """
    A = expm(ctls.Ac * ctls.dt)
    init = init if init is not None else ctls.init
    if init is None:
        from .stationary import solve_lyapunov

        n = A.shape[0]
        try:
            init = GaussianBelief(np.zeros(n), solve_lyapunov(A, ctls.Qd))
        except StabilityError:
            init = GaussianBelief(np.zeros(n), np.eye(n))
    return LtiModel(A, ctls.C, ctls.Qd, ctls.Rd, init)


def spectral_radius(
    A: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000, seed: int = 0
) -> float:
    """Largest eigenvalue modulus of ``A`` by power iteration.

    The iterated operator is squared at every step (``B <- B^2`` with the
    scale tracked in log space), so after ``k`` steps the growth of the
    iterate measures ``rho^(2^k)``. This converges for complex-conjugate or
    sign-alternating dominant pairs, where plain power iteration oscillates,
    and the bias of the ``2^k``-th root estimate shrinks geometrically. A
    new random start vector is drawn if the iterate collapses.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"spectral_radius needs a square matrix, got {A.shape}")
    if A.size == 0:
        return 0.0
    if not np.all(np.isfinite(A)):
        raise ValidationError("matrix contains non-finite entries")
    rng = np.random.default_rng(seed)
    n = A.shape[0]

    scale = float(np.linalg.norm(A))
    if scale == 0.0:
        return 0.0
    B = A / scale
    log_scale = math.log(scale)
    power = 1.0

    def random_unit():
        v = rng.standard_normal(n)
        return v / np.linalg.norm(v)

    x = random_unit()
    estimate = None
    for it in range(max_iter):
        y = B @ x
        ny = float(np.linalg.norm(y))
        if ny <= 1e-300 or not math.isfinite(ny):
            x = random_unit()
            y = B @ x
            ny = float(np.linalg.norm(y))
            if ny <= 1e-300:
                # B annihilates two random directions: nilpotent to working precision
                return 0.0
        new = math.exp((log_scale + math.log(ny)) / power)
        # oscillating dominant pairs make single differences optimistic; demand a margin
        if estimate is not None and abs(new - estimate) <= 1e-3 * tol * max(1.0, new):
            return new
        estimate = new
        x = y / ny
        if power >= 2.0**1000:
            break
        B = B @ B
        c = float(np.linalg.norm(B))
        if c == 0.0:
            return 0.0
        B /= c
        log_scale = 2.0 * log_scale + math.log(c)
        power *= 2.0
    raise ConvergenceError(
        "spectral radius power iteration did not converge",
        last_iterate=estimate,
        iterations=it + 1,
    )


def require_stable(A: np.ndarray, what: str = "A") -> float:
    """Raise :class:`StabilityError` unless ``spectral_radius(A) < 1 - 1e-8``."""
    rho = spectral_radius(A)
    if not rho < 1.0 - STABILITY_MARGIN:
        raise StabilityError(f"{what} is not asymptotically stable (spectral radius {rho:.12g})", rho)
    return rho


# serialization -------------------------------------------------------------


def _matrix_to_list(M: np.ndarray) -> list:
    return [[float(v) for v in row] for row in np.atleast_2d(M)]


def belief_to_dict(b: GaussianBelief) -> dict[str, Any]:
    return {"mean": [float(v) for v in b.mean], "cov": _matrix_to_list(b.cov)}


def belief_from_dict(d: dict[str, Any]) -> GaussianBelief:
    return GaussianBelief(np.asarray(d["mean"], dtype=float), np.asarray(d["cov"], dtype=float))


def model_to_dict(model: LtiModel) -> dict[str, Any]:
    return {
        "kind": "lti",
        "A": _matrix_to_list(model.A),
        "H": _matrix_to_list(model.H),
        "Q": _matrix_to_list(model.Q),
        "R": _matrix_to_list(model.R),
        "init": belief_to_dict(model.init),
    }


def model_from_dict(d: dict[str, Any]) -> LtiModel:
    init = d.get("init")
    n = len(d["A"])
    H = np.asarray(d["H"], dtype=float).reshape(-1, n)
    return LtiModel(
        np.asarray(d["A"], dtype=float).reshape(n, n),
        H,
        np.asarray(d["Q"], dtype=float),
        np.asarray(d["R"], dtype=float),
        belief_from_dict(init) if init is not None else None,
    )
