"""Example systems and their observer parameterizations.

Spring-mass-damper
    Two masses in a row between two walls, state ``(x1, x2, v1, v2)``. The
    reduced inference model keeps only ``m1``, grounded through ``k1 + k2``
    and ``b1 + b2``: the limit of a rigid ``m2`` attachment (``k3`` or ``b3``
    to infinity). Process noise enters the velocities only.

F-16 longitudinal surrogate
    A fixed, stable 4-state closed-loop model with states
    ``(theta, V, alpha, q)`` shipped in ``data/f16_surrogate.json``. Its values
    are representative of a stabilized longitudinal airframe, not those of any
    published linearization.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from importlib import resources

import numpy as np

from .core import CtlsModel, LtiModel, ModelPair, discretize
from .errors import StabilityError, ValidationError

SMD_STATES = ("x1", "x2", "v1", "v2")
F16_STATES = ("theta", "V", "alpha", "q")


@dataclass(frozen=True)
class SpringMassParams:
    m1: float = 1.0
    m2: float = 1.0
    k1: float = 1.0
    k2: float = 1.0
    k3: float = 1.0
    b1: float = 0.1
    b2: float = 0.1
    b3: float = 0.1
    dt: float = 0.05
    q_scale: float = 0.01
    r_scale: float = 0.01

    def __post_init__(self):
        for name in ("m1", "m2", "k1", "k2", "k3", "dt", "q_scale", "r_scale"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValidationError(f"{name} must be positive, got {value}")
        for name in ("b1", "b2", "b3"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValidationError(f"{name} must be nonnegative, got {value}")

    def with_(self, **changes) -> "SpringMassParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


def two_mass_dynamics(p: SpringMassParams) -> np.ndarray:
    stiffness = np.array([[-(p.k1 + p.k2), p.k2], [p.k2, -(p.k2 + p.k3)]])
    damping = np.array([[-(p.b1 + p.b2), p.b2], [p.b2, -(p.b2 + p.b3)]])
    inv_mass = np.diag([1.0 / p.m1, 1.0 / p.m2])
    Ac = np.zeros((4, 4))
    Ac[0, 2] = Ac[1, 3] = 1.0
    Ac[2:, :2] = inv_mass @ stiffness
    Ac[2:, 2:] = inv_mass @ damping
    return Ac


def one_mass_dynamics(p: SpringMassParams) -> np.ndarray:
    return np.array([[0.0, 1.0], [-(p.k1 + p.k2) / p.m1, -(p.b1 + p.b2) / p.m1]])


def observer_smd(d: float, n_states: int = 4) -> np.ndarray:
    """Unit-norm row measuring ``cos(d) * x1 + sin(d) * v1`` on the 4- or 2-state model."""
    if not (0.0 <= d <= math.pi / 2):
        raise ValidationError(f"design d must lie in [0, pi/2], got {d}")
    c, s = math.cos(d), math.sin(d)
    if n_states == 4:
        return np.array([[c, 0.0, s, 0.0]])
    if n_states == 2:
        return np.array([[c, s]])
    raise ValidationError(f"spring-mass observer defined for 2 or 4 states, not {n_states}")


def build_two_mass(p: SpringMassParams, C: np.ndarray | None = None) -> CtlsModel:
    """Continuous two-mass model; ``C`` defaults to the ``d = pi/4`` observer."""
    C = observer_smd(math.pi / 4, 4) if C is None else np.atleast_2d(C)
    s = C.shape[0]
    Qd = p.q_scale * np.diag([0.0, 0.0, 1.0, 1.0])
    return CtlsModel(two_mass_dynamics(p), C, p.dt, Qd, p.r_scale * np.eye(s), state_names=SMD_STATES)


def build_one_mass(p: SpringMassParams, C: np.ndarray | None = None) -> CtlsModel:
    """Continuous one-mass reduction (``m1`` grounded through ``k1 + k2``, ``b1 + b2``)."""
    C = observer_smd(math.pi / 4, 2) if C is None else np.atleast_2d(C)
    s = C.shape[0]
    Qd = p.q_scale * np.diag([0.0, 1.0])
    return CtlsModel(one_mass_dynamics(p), C, p.dt, Qd, p.r_scale * np.eye(s), state_names=("x1", "v1"))


def smd_pair(p: SpringMassParams, d: float) -> ModelPair:
    """Inference = one-mass model, truth = two-mass model, both observed with design ``d``."""
    inference = discretize(build_one_mass(p, observer_smd(d, 2)))
    truth = discretize(build_two_mass(p, observer_smd(d, 4)))
    return ModelPair(inference, truth)


# F-16 surrogate -------------------------------------------------------------


def _f16_data() -> dict:
    text = resources.files("lgboed").joinpath("data/f16_surrogate.json").read_text()
    return json.loads(text)


def build_f16_surrogate(C: np.ndarray | None = None) -> CtlsModel:
    """The shipped 4-state longitudinal surrogate; ``C`` defaults to its existing outputs."""
    data = _f16_data()
    Ac = np.array(data["Ac"], dtype=float)
    C = np.array(data["C"], dtype=float) if C is None else np.atleast_2d(C)
    s = C.shape[0]
    r = np.array(data["output_noise"], dtype=float)
    if C.shape[0] != len(r):
        r = np.concatenate([r, np.full(s - len(r), data["new_output_noise"])])
    return CtlsModel(
        Ac,
        C,
        float(data["dt"]),
        np.diag(np.array(data["process_noise"], dtype=float)),
        np.diag(r),
        state_names=tuple(data["states"]),
    )


def observer_f16(d1: float, d2: float) -> np.ndarray:
    """New output ``d1*theta + d2*alpha + d3*q`` with ``d3 = +sqrt(1 - d1^2 - d2^2)``."""
    r2 = d1 * d1 + d2 * d2
    if r2 > 1.0 + 1e-12:
        raise ValidationError(f"d1^2 + d2^2 must be <= 1, got {r2}")
    d3 = math.sqrt(max(0.0, 1.0 - r2))
    return np.array([[d1, 0.0, d2, d3]])


def f16_design_model(d1: float, d2: float) -> LtiModel:
    """Discretized surrogate with the new output row appended beneath the existing outputs."""
    base = np.array(_f16_data()["C"], dtype=float)
    C = np.vstack([base, observer_f16(d1, d2)])
    return discretize(build_f16_surrogate(C))


def perturb_dynamics(model: LtiModel, delta: np.ndarray) -> LtiModel:
    """Truth with ``A* = A + delta * A`` (elementwise); rejects an unstable result."""
    from .core import spectral_radius

    delta = np.asarray(delta, dtype=float)
    if delta.shape != model.A.shape:
        raise ValidationError(f"delta must have shape {model.A.shape}, got {delta.shape}")
    A_star = model.A + delta * model.A
    rho = spectral_radius(A_star)
    if not rho < 1.0 - 1e-8:
        raise StabilityError(f"perturbed dynamics are unstable (spectral radius {rho:.12g})", rho)
    return model.replace(A=A_star)
