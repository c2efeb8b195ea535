"""Design sweeps, EGIG sensitivity and Pareto fronts, plus the two example studies."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import LtiModel, ModelPair
from .criteria import CriteriaRecord, delta_edi, egig_infinite_horizon, eig_infinite_horizon
from .errors import BoedError, ValidationError
from .models import (
    SpringMassParams,
    f16_design_model,
    observer_smd,
    perturb_dynamics,
    build_one_mass,
    build_two_mass,
)
from .core import discretize
from .stationary import StationaryQuantities, joint_moments, solve_dare

DEFAULT_FD_STEP = 1e-5


@dataclass(frozen=True)
class DesignPoint:
    params: tuple[float, ...]
    label: str = ""


@dataclass(frozen=True, eq=False)
class PerturbationSpec:
    """Relative perturbation of the dynamics: ``A* = A + delta * A`` elementwise."""

    delta: np.ndarray
    mode: str = "elementwise-relative"

    def __post_init__(self):
        if self.mode != "elementwise-relative":
            raise ValidationError(f"unsupported perturbation mode {self.mode!r}")

    def apply(self, model: LtiModel) -> LtiModel:
        return perturb_dynamics(model, self.delta)


@dataclass(frozen=True)
class SweepRecord:
    design: DesignPoint
    criteria: CriteriaRecord
    extras: dict = field(default_factory=dict)
    error: str | None = None


@dataclass(frozen=True)
class SweepResult:
    records: tuple[SweepRecord, ...]
    config: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        out = []
        for r in self.records:
            if hasattr(r.criteria, name):
                out.append(getattr(r.criteria, name))
            else:
                out.append(r.extras.get(name, math.nan))
        return np.array(out, dtype=float)

    def argmax(self, name: str) -> int:
        values = self.column(name)
        if np.all(np.isnan(values)):
            raise ValueError(f"no finite values in column {name!r}")
        return int(np.nanargmax(values))


Evaluator = Callable[[DesignPoint], "tuple[CriteriaRecord, dict]"]


def _evaluate_one(evaluator: Evaluator, point: DesignPoint) -> SweepRecord:
    try:
        criteria, extras = evaluator(point)
    except (BoedError, ValueError, np.linalg.LinAlgError) as exc:
        return SweepRecord(point, CriteriaRecord(), {}, f"{type(exc).__name__}: {exc}")
    return SweepRecord(point, criteria, dict(extras))


def sweep(
    design_grid: Sequence[DesignPoint],
    evaluator: Evaluator,
    workers: int = 1,
    config: dict | None = None,
) -> SweepResult:
    """Evaluate every design point; failures are recorded per point instead of aborting.

    With ``workers > 1`` points are spread over processes (``evaluator`` must
    be picklable); records are always returned in grid order.
    """
    grid = list(design_grid)
    if not grid:
        raise ValidationError("design grid is empty")
    fn = partial(_evaluate_one, evaluator)
    if workers > 1 and len(grid) > 1:
        chunk = max(1, len(grid) // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(fn, grid, chunksize=chunk))
    else:
        records = [fn(p) for p in grid]
    return SweepResult(tuple(records), dict(config or {}))


def pareto_front(points: Sequence[Sequence[float]]) -> list[int]:
    """Indices of points not dominated under (maximize first objective, minimize second).

    A point is dominated when another is at least as good in both objectives
    and strictly better in one. Duplicates do not dominate each other, so ties
    stay on the front. Points with a NaN objective are never on the front.
    Indices are returned in input order.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValidationError("pareto_front needs at least one point")
    valid = np.flatnonzero(~np.isnan(pts).any(axis=1))
    # descending objective1, ties by ascending objective2
    order = valid[np.lexsort((pts[valid, 1], -pts[valid, 0]))]
    front = []
    best2 = math.inf
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and pts[order[j], 0] == pts[order[i], 0]:
            j += 1
        group_best = pts[order[i], 1]
        if group_best < best2:
            front.extend(int(k) for k in order[i:j] if pts[k, 1] == group_best)
            best2 = group_best
        i = j
    return sorted(front)


def pareto_front_bruteforce(points: Sequence[Sequence[float]]) -> list[int]:
    """O(n^2) reference implementation of :func:`pareto_front`."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    front = []
    for i, p in enumerate(pts):
        if np.isnan(p).any():
            continue
        dominated = False
        for j, q in enumerate(pts):
            if j == i or np.isnan(q).any():
                continue
            if q[0] >= p[0] and q[1] <= p[1] and (q[0] > p[0] or q[1] < p[1]):
                dominated = True
                break
        if not dominated:
            front.append(i)
    return front


def fd_gradient(
    f: Callable[[np.ndarray], float],
    shape: tuple[int, int],
    step: float = DEFAULT_FD_STEP,
    scheme: str = "central",
    mask: np.ndarray | None = None,
) -> np.ndarray:
    """Finite-difference gradient of ``f`` at the zero matrix; masked-out entries are left at 0."""
    if not step > 0:
        raise ValidationError(f"step must be positive, got {step}")
    grad = np.zeros(shape)
    base = f(np.zeros(shape)) if scheme == "forward" else None
    for idx in np.ndindex(*shape):
        if mask is not None and not mask[idx]:
            continue
        e = np.zeros(shape)
        e[idx] = step
        if scheme == "central":
            grad[idx] = (f(e) - f(-e)) / (2.0 * step)
        elif scheme == "forward":
            grad[idx] = (f(e) - base) / step
        else:
            raise ValidationError(f"unknown scheme {scheme!r}")
    return grad


class _EgigOfDelta:
    """``delta -> asymptotic EGIG`` for pairs built by ``pair_builder``; caches the inference DARE."""

    def __init__(self, pair_builder: Callable[[np.ndarray], ModelPair]):
        self.pair_builder = pair_builder
        self._cache: dict[int, tuple[LtiModel, StationaryQuantities]] = {}

    def _sq(self, model: LtiModel) -> StationaryQuantities:
        hit = self._cache.get(id(model))
        if hit is None or hit[0] is not model:
            hit = (model, solve_dare(model))
            self._cache[id(model)] = hit
        return hit[1]

    def __call__(self, delta: np.ndarray) -> float:
        pair = self.pair_builder(delta)
        sq = self._sq(pair.inference)
        sq_star = sq if pair.truth is pair.inference else solve_dare(pair.truth)
        joint = joint_moments(pair, sq, sq_star)
        return egig_infinite_horizon(pair, joint, sq, sq_star)


def egig_gradient(
    pair_builder: Callable[[np.ndarray], ModelPair],
    shape: tuple[int, int],
    step: float = DEFAULT_FD_STEP,
    scheme: str = "central",
    mask: np.ndarray | None = None,
) -> np.ndarray:
    return fd_gradient(_EgigOfDelta(pair_builder), shape, step, scheme, mask)


def egig_sensitivity(
    pair_builder: Callable[[np.ndarray], ModelPair],
    shape: tuple[int, int],
    step: float = DEFAULT_FD_STEP,
    mask: np.ndarray | None = None,
) -> float:
    """Frobenius norm of the central-difference gradient of asymptotic EGIG w.r.t. ``delta`` at 0."""
    return float(np.linalg.norm(egig_gradient(pair_builder, shape, step, "central", mask)))


def relative_perturbation_builder(model: LtiModel) -> Callable[[np.ndarray], ModelPair]:
    """``delta -> ModelPair(model, model with A* = A + delta * A)``."""
    return partial(_relative_pair, model)


def _relative_pair(model: LtiModel, delta: np.ndarray) -> ModelPair:
    if not np.any(delta):
        return ModelPair(model, model)
    return ModelPair(model, perturb_dynamics(model, delta))


# spring-mass study ---------------------------------------------------------


def k3_grid(p: SpringMassParams, points: int = 10, low: float = 1.0, high: float = 100.0) -> np.ndarray:
    """Log-spaced stiffnesses ``[low, high] * k1``."""
    return p.k1 * np.logspace(math.log10(low), math.log10(high), points)


def smd_delta_edi(p: SpringMassParams, d: float, k3_values: Iterable[float]) -> np.ndarray:
    """Asymptotic delta-EDI of the one-mass model against two-mass truths, one per ``k3``."""
    inference = discretize(build_one_mass(p, observer_smd(d, 2)))
    sq = solve_dare(inference)
    out = []
    for k3 in k3_values:
        truth = discretize(build_two_mass(p.with_(k3=float(k3)), observer_smd(d, 4)))
        pair = ModelPair(inference, truth)
        sq_star = solve_dare(truth)
        out.append(delta_edi(pair, joint_moments(pair, sq, sq_star), sq, sq_star))
    return np.array(out)


def smd_design_evaluator(
    p: SpringMassParams, k3_values: tuple[float, ...], point: DesignPoint
) -> tuple[CriteriaRecord, dict]:
    (d,) = point.params
    inference = discretize(build_one_mass(p, observer_smd(d, 2)))
    eig = eig_infinite_horizon(solve_dare(inference))
    values = smd_delta_edi(p, d, k3_values)
    mean = float(np.mean(values))
    return CriteriaRecord(eig=eig, delta_edi=mean), {"delta_edi_mean": mean}


def smd_design_grid(points: int = 50) -> list[DesignPoint]:
    return [DesignPoint((float(d),), f"d={d:.6g}") for d in np.linspace(0.0, math.pi / 2, points)]


def smd_study(
    p: SpringMassParams | None = None,
    points: int = 50,
    k3_values: Sequence[float] | None = None,
    workers: int = 1,
) -> SweepResult:
    """EIG of the one-mass model and mean delta-EDI against two-mass truths over the observer angle."""
    p = p or SpringMassParams()
    k3s = tuple(float(k) for k in (k3_grid(p) if k3_values is None else k3_values))
    evaluator = partial(smd_design_evaluator, p, k3s)
    config = {"params": p.to_dict(), "k3_values": list(k3s), "points": points}
    return sweep(smd_design_grid(points), evaluator, workers, config)


# F-16 study ----------------------------------------------------------------


def f16_design_grid(resolution: int = 21) -> list[DesignPoint]:
    """Points of a ``resolution x resolution`` grid on ``[-1, 1]^2`` that lie in the closed unit disk."""
    axis = np.linspace(-1.0, 1.0, resolution)
    grid = []
    for d1 in axis:
        for d2 in axis:
            if d1 * d1 + d2 * d2 <= 1.0 + 1e-12:
                grid.append(DesignPoint((float(d1), float(d2)), f"d1={d1:.6g},d2={d2:.6g}"))
    return grid


def f16_design_evaluator(step: float, point: DesignPoint) -> tuple[CriteriaRecord, dict]:
    d1, d2 = point.params
    model = f16_design_model(d1, d2)
    sq = solve_dare(model)
    eig = eig_infinite_horizon(sq)
    mask = model.A != 0.0
    sens = egig_sensitivity(relative_perturbation_builder(model), model.A.shape, step, mask)
    d3 = math.sqrt(max(0.0, 1.0 - d1 * d1 - d2 * d2))
    return CriteriaRecord(eig=eig, egig=eig), {"d3": d3, "egig_sensitivity": sens}


def f16_study(resolution: int = 21, step: float = DEFAULT_FD_STEP, workers: int = 1) -> SweepResult:
    """Asymptotic EIG and EGIG sensitivity over the unit-norm new-output designs."""
    config = {"resolution": resolution, "step": step}
    return sweep(f16_design_grid(resolution), partial(f16_design_evaluator, step), workers, config)
