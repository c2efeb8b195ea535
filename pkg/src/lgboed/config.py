"""Run configuration: JSON files, dotted-path overrides and validation.

A config is a JSON object. Matrices are row-major arrays of arrays. Keys::

    study     one of STUDIES (the CLI subcommand takes precedence)
    regime    "single-step" or "infinite-horizon" for the criterion studies
    models    {"inference": model, "truth": model}; truth defaults to inference.
              A model is {"kind": "lti", "A", "H", "Q", "R", "init": {"mean", "cov"}}
              or {"kind": "ctls", "Ac", "C", "dt", "Qd", "Rd", "init"}
    smd       spring-mass parameters plus "points" and "k3_grid" ({"points", "low",
              "high"} as multiples of k1, or "values" for an explicit list)
    f16       {"resolution", "step"}
    sim       {"seed", "n_samples", "horizon", "burn_in"}
    oracle    {"regimes": [...]} subset of ["single-step", "infinite-horizon"]
    output    {"path", "format"}
    workers   process count for sweeps and trajectory oracles

``--config defaults`` loads the packaged ``configs/defaults.json``.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, fields
from importlib import resources
from typing import Any

import numpy as np

from .core import (
    CtlsModel,
    LtiModel,
    ModelPair,
    belief_from_dict,
    discretize,
    model_to_dict,
    spectral_radius,
)
from .errors import BoedError
from .models import SpringMassParams
from .oracle import SimConfig

STUDIES = ("eig", "egig", "edi", "delta-edi", "smd-study", "f16-study", "oracle")
REGIMES = ("single-step", "infinite-horizon")
FORMATS = ("csv", "json")
TOP_LEVEL_KEYS = {"study", "regime", "models", "smd", "f16", "sim", "oracle", "output", "workers", "version"}
DEFAULTS_NAME = "defaults"


class ConfigError(BoedError, ValueError):
    """A schema or invariant violation, tied to a config file and a dotted field path."""

    def __init__(self, source: str, field: str, message: str):
        super().__init__(f"{source}: field {field}: {message}")
        self.source = source
        self.field = field
        self.message = message


@dataclass(frozen=True)
class Issue:
    field: str
    message: str

    def format(self, source: str) -> str:
        return f"{source}: field {self.field}: {self.message}"


# loading -------------------------------------------------------------------


def load_raw(path: str) -> dict:
    """Parse a config file (or the packaged defaults) into a plain dict."""
    if path == DEFAULTS_NAME:
        text = resources.files("lgboed").joinpath("configs/defaults.json").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(path, "<root>", f"invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(path, "<root>", "config must be a JSON object")
    return data


def parse_value(text: str) -> Any:
    """Override values are JSON when they parse as JSON, plain strings otherwise."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides: list[tuple[str, Any]], source: str) -> dict:
    """Return a copy of ``data`` with each dotted ``key`` set to its value."""
    out = copy.deepcopy(data)
    for key, value in overrides:
        parts = key.split(".")
        if not all(parts):
            raise ConfigError(source, key, "malformed override key")
        node = out
        for i, part in enumerate(parts[:-1]):
            child = node.get(part)
            if child is None:
                child = node[part] = {}
            if not isinstance(child, dict):
                raise ConfigError(source, ".".join(parts[: i + 1]), "cannot override inside a non-object")
            node = child
        node[parts[-1]] = value
    return out


# model parsing ---------------------------------------------------------------


def _matrix(d: dict, key: str, field: str, source: str) -> np.ndarray:
    if key not in d:
        raise ConfigError(source, f"{field}.{key}", "missing")
    try:
        M = np.asarray(d[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(source, f"{field}.{key}", f"not a numeric array ({exc})") from exc
    if not np.all(np.isfinite(M)):
        raise ConfigError(source, f"{field}.{key}", "contains non-finite values")
    return M


def _model_issues(d: Any, field: str) -> list[Issue]:
    """Every problem with one model definition, checked field by field."""
    if not isinstance(d, dict):
        return [Issue(field, "model must be an object")]
    kind = d.get("kind", "lti")
    names = {"lti": ("A", "H", "Q", "R"), "ctls": ("Ac", "C", "Qd", "Rd")}.get(kind)
    if names is None:
        return [Issue(f"{field}.kind", f"unknown model kind {kind!r} (expected 'lti' or 'ctls')")]
    issues = []
    mats = {}
    for key in names:
        try:
            mats[key] = _matrix(d, key, field, "")
        except ConfigError as exc:
            issues.append(Issue(exc.field, exc.message))
    dyn, obs, q, r = names
    if dyn in mats:
        A = mats[dyn]
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            issues.append(Issue(f"{field}.{dyn}", f"must be square, got shape {A.shape}"))
            del mats[dyn]
    n = mats[dyn].shape[0] if dyn in mats else None
    if obs in mats and n is not None:
        H = mats[obs]
        if H.ndim == 1:
            H = H.reshape(1, -1)
        if H.ndim != 2 or H.shape[1] != n:
            issues.append(Issue(f"{field}.{obs}", f"must have {n} columns, got shape {H.shape}"))
        else:
            mats[obs] = H
    for key, kind_req in ((q, "psd"), (r, "pd")):
        if key not in mats:
            continue
        M = np.atleast_2d(mats[key])
        if M.shape[0] != M.shape[1]:
            issues.append(Issue(f"{field}.{key}", f"must be square, got shape {M.shape}"))
            continue
        if not np.allclose(M, M.T, rtol=0.0, atol=1e-9 * max(1.0, float(np.max(np.abs(M), initial=0.0)))):
            issues.append(Issue(f"{field}.{key}", "must be symmetric"))
            continue
        w = np.linalg.eigvalsh(0.5 * (M + M.T))
        scale = max(1.0, float(np.max(np.abs(w), initial=0.0)))
        if kind_req == "pd" and not w.min() > 1e-12 * scale:
            issues.append(Issue(f"{field}.{key}", f"must be positive definite (smallest eigenvalue {w.min():.6g})"))
        if kind_req == "psd" and w.min() < -1e-10 * scale:
            issues.append(Issue(f"{field}.{key}", f"must be positive semidefinite (smallest eigenvalue {w.min():.6g})"))
    if n is not None and q in mats and np.atleast_2d(mats[q]).shape != (n, n):
        issues.append(Issue(f"{field}.{q}", f"must be {n}x{n}"))
    if obs in mats and r in mats and n is not None and mats[obs].ndim == 2:
        s = mats[obs].shape[0]
        if np.atleast_2d(mats[r]).shape != (s, s):
            issues.append(Issue(f"{field}.{r}", f"must be {s}x{s} to match {obs}"))
    if kind == "ctls":
        dt = d.get("dt")
        if not isinstance(dt, (int, float)) or not (dt > 0 and math.isfinite(dt)):
            issues.append(Issue(f"{field}.dt", f"must be a positive number, got {dt!r}"))
    if "init" in d:
        try:
            init = belief_from_dict(d["init"])
            if n is not None and init.dim != n:
                issues.append(Issue(f"{field}.init", f"dimension {init.dim} != state dimension {n}"))
        except (KeyError, TypeError, ValueError, BoedError, np.linalg.LinAlgError) as exc:
            issues.append(Issue(f"{field}.init", str(exc)))
    if issues:
        return issues
    try:
        model = build_model(d, field, "")
    except (BoedError, ValueError) as exc:
        return [Issue(field, str(exc))]
    rho = spectral_radius(model.A)
    if not rho < 1.0 - 1e-8:
        issues.append(Issue(f"{field}.{dyn}", f"dynamics unstable: spectral radius {rho:.12g} (must be < 1)"))
    return issues


def build_model(d: dict, field: str, source: str) -> LtiModel:
    kind = d.get("kind", "lti")
    try:
        init = belief_from_dict(d["init"]) if "init" in d else None
        if kind == "lti":
            return LtiModel(
                _matrix(d, "A", field, source),
                _matrix(d, "H", field, source),
                _matrix(d, "Q", field, source),
                _matrix(d, "R", field, source),
                init,
            )
        if kind == "ctls":
            ctls = CtlsModel(
                _matrix(d, "Ac", field, source),
                _matrix(d, "C", field, source),
                float(d.get("dt", float("nan"))),
                _matrix(d, "Qd", field, source),
                _matrix(d, "Rd", field, source),
            )
            return discretize(ctls, init)
    except ConfigError:
        raise
    except (BoedError, ValueError, TypeError, KeyError) as exc:
        raise ConfigError(source, field, str(exc)) from exc
    raise ConfigError(source, f"{field}.kind", f"unknown model kind {kind!r}")


# resolved config -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RunConfig:
    source: str
    raw: dict
    study: str
    regime: str
    workers: int
    output_path: str | None
    output_format: str

    def section(self, name: str) -> dict:
        value = self.raw.get(name, {})
        return value if isinstance(value, dict) else {}

    def pair(self) -> ModelPair:
        models = self.section("models")
        if "inference" not in models:
            raise ConfigError(self.source, "models.inference", "missing")
        m = self._model(models, "inference")
        ms = m if models.get("truth") is None else self._model(models, "truth")
        try:
            return ModelPair(m, ms)
        except (BoedError, ValueError) as exc:
            raise ConfigError(self.source, "models.truth", str(exc)) from exc

    def _model(self, models: dict, role: str) -> LtiModel:
        field = f"models.{role}"
        structural = [i for i in _model_issues(models[role], field) if "unstable" not in i.message]
        if structural:
            raise ConfigError(self.source, structural[0].field, structural[0].message)
        return build_model(models[role], field, self.source)

    def sim(self) -> SimConfig:
        return _sim_from(self.section("sim"), self.source)

    def smd_params(self) -> SpringMassParams:
        return _smd_params_from(self.section("smd"), self.source)


def _sim_from(d: dict, source: str) -> SimConfig:
    allowed = {f.name for f in fields(SimConfig)}
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(source, f"sim.{unknown[0]}", "unknown key")
    for key, value in d.items():
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(source, f"sim.{key}", f"must be an integer, got {value!r}")
    try:
        return SimConfig(**d)
    except (BoedError, ValueError) as exc:
        raise ConfigError(source, "sim", str(exc)) from exc


SMD_EXTRA_KEYS = {"points", "k3_grid"}


def _smd_params_from(d: dict, source: str) -> SpringMassParams:
    allowed = {f.name for f in fields(SpringMassParams)}
    unknown = sorted(set(d) - allowed - SMD_EXTRA_KEYS)
    if unknown:
        raise ConfigError(source, f"smd.{unknown[0]}", "unknown key")
    kwargs = {k: v for k, v in d.items() if k in allowed}
    for key, value in kwargs.items():
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(source, f"smd.{key}", f"must be a number, got {value!r}")
    try:
        return SpringMassParams(**{k: float(v) for k, v in kwargs.items()})
    except (BoedError, ValueError) as exc:
        raise ConfigError(source, "smd", str(exc)) from exc


def resolve(data: dict, source: str, study: str | None = None, output: str | None = None,
            fmt: str | None = None, workers: int | None = None) -> RunConfig:
    """Check the top-level schema and fold command-line choices into a :class:`RunConfig`."""
    issues = top_level_issues(data)
    if issues:
        raise ConfigError(source, issues[0].field, issues[0].message)
    study = study or data.get("study")
    if study not in STUDIES:
        raise ConfigError(source, "study", f"must be one of {', '.join(STUDIES)}, got {study!r}")
    out = data.get("output", {}) or {}
    path = output if output is not None else out.get("path")
    fmt = fmt or out.get("format", "csv")
    if fmt not in FORMATS:
        raise ConfigError(source, "output.format", f"must be csv or json, got {fmt!r}")
    workers = workers if workers is not None else data.get("workers", 1)
    return RunConfig(source, data, study, data.get("regime", "infinite-horizon"), workers, path, fmt)


def top_level_issues(data: dict) -> list[Issue]:
    issues = []
    for key in sorted(set(data) - TOP_LEVEL_KEYS):
        issues.append(Issue(key, "unknown key"))
    if "study" in data and data["study"] not in STUDIES:
        issues.append(Issue("study", f"must be one of {', '.join(STUDIES)}, got {data['study']!r}"))
    if "regime" in data and data["regime"] not in REGIMES:
        issues.append(Issue("regime", f"must be one of {', '.join(REGIMES)}, got {data['regime']!r}"))
    workers = data.get("workers", 1)
    if not isinstance(workers, int) or isinstance(workers, bool) or workers < 1:
        issues.append(Issue("workers", f"must be a positive integer, got {workers!r}"))
    out = data.get("output", {})
    if not isinstance(out, dict):
        issues.append(Issue("output", "must be an object"))
    else:
        if out.get("format", "csv") not in FORMATS:
            issues.append(Issue("output.format", f"must be csv or json, got {out.get('format')!r}"))
        if out.get("path") is not None and not isinstance(out.get("path"), str):
            issues.append(Issue("output.path", "must be a string or null"))
    for key in ("models", "smd", "f16", "sim", "oracle"):
        if key in data and not isinstance(data[key], dict):
            issues.append(Issue(key, "must be an object"))
    return issues


def validate_data(data: dict, source: str) -> list[Issue]:
    """All schema and invariant violations of a config, including per-model stability."""
    issues = top_level_issues(data)
    models = data.get("models")
    if isinstance(models, dict):
        for key in sorted(set(models) - {"inference", "truth"}):
            issues.append(Issue(f"models.{key}", "unknown key (expected inference, truth)"))
        if "inference" not in models:
            issues.append(Issue("models.inference", "missing"))
        model_issues = []
        for role in ("inference", "truth"):
            if models.get(role) is not None:
                model_issues += _model_issues(models[role], f"models.{role}")
        issues += model_issues
        if not model_issues and models.get("truth") is not None and "inference" in models:
            m = build_model(models["inference"], "models.inference", source)
            ms = build_model(models["truth"], "models.truth", source)
            if m.s != ms.s:
                issues.append(Issue("models.truth.H", f"observation dimension {ms.s} != inference {m.s}"))
    if isinstance(data.get("sim"), dict):
        try:
            _sim_from(data["sim"], source)
        except ConfigError as exc:
            issues.append(Issue(exc.field, exc.message))
    if isinstance(data.get("smd"), dict):
        smd = data["smd"]
        try:
            p = _smd_params_from(smd, source)
            from .models import build_one_mass, build_two_mass

            for name, builder in (("two-mass", build_two_mass), ("one-mass", build_one_mass)):
                rho = spectral_radius(discretize(builder(p)).A)
                if not rho < 1.0 - 1e-8:
                    issues.append(Issue("smd", f"{name} dynamics unstable: spectral radius {rho:.12g}"))
        except ConfigError as exc:
            issues.append(Issue(exc.field, exc.message))
        points = smd.get("points", 50)
        if not isinstance(points, int) or isinstance(points, bool) or points < 1:
            issues.append(Issue("smd.points", f"must be a positive integer, got {points!r}"))
        issues += _k3_issues(smd.get("k3_grid", {}))
    if isinstance(data.get("f16"), dict):
        f16 = data["f16"]
        for key in sorted(set(f16) - {"resolution", "step"}):
            issues.append(Issue(f"f16.{key}", "unknown key"))
        res = f16.get("resolution", 21)
        if not isinstance(res, int) or isinstance(res, bool) or res < 1:
            issues.append(Issue("f16.resolution", f"must be a positive integer, got {res!r}"))
        step = f16.get("step", 1e-5)
        if not isinstance(step, (int, float)) or isinstance(step, bool) or not step > 0:
            issues.append(Issue("f16.step", f"must be a positive number, got {step!r}"))
    if isinstance(data.get("oracle"), dict):
        regimes = data["oracle"].get("regimes", list(REGIMES))
        if not isinstance(regimes, list) or not regimes or any(r not in REGIMES for r in regimes):
            issues.append(Issue("oracle.regimes", f"must be a nonempty subset of {list(REGIMES)}"))
    return issues


def _k3_issues(k3: Any) -> list[Issue]:
    if not isinstance(k3, dict):
        return [Issue("smd.k3_grid", "must be an object")]
    issues = []
    for key in sorted(set(k3) - {"points", "low", "high", "values"}):
        issues.append(Issue(f"smd.k3_grid.{key}", "unknown key"))
    if "values" in k3:
        vals = k3["values"]
        if not isinstance(vals, list) or not vals or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 for v in vals
        ):
            issues.append(Issue("smd.k3_grid.values", "must be a nonempty list of positive numbers"))
        return issues
    low, high = k3.get("low", 1.0), k3.get("high", 100.0)
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 for v in (low, high)):
        issues.append(Issue("smd.k3_grid", "low and high must be positive numbers"))
    elif low > high:
        issues.append(Issue("smd.k3_grid", f"low ({low}) must not exceed high ({high})"))
    points = k3.get("points", 10)
    if not isinstance(points, int) or isinstance(points, bool) or points < 1:
        issues.append(Issue("smd.k3_grid.points", f"must be a positive integer, got {points!r}"))
    return issues


def k3_values(cfg: RunConfig, p: SpringMassParams) -> list[float]:
    from .design import k3_grid

    k3 = cfg.section("smd").get("k3_grid", {}) or {}
    issues = _k3_issues(k3)
    if issues:
        raise ConfigError(cfg.source, issues[0].field, issues[0].message)
    if "values" in k3:
        return [float(v) for v in k3["values"]]
    return [float(v) for v in k3_grid(p, k3.get("points", 10), k3.get("low", 1.0), k3.get("high", 100.0))]


def resolved_dict(cfg: RunConfig) -> dict:
    """The fully resolved config echoed next to every output table."""
    out = copy.deepcopy(cfg.raw)
    out["study"] = cfg.study
    out["regime"] = cfg.regime
    out["workers"] = cfg.workers
    out["output"] = {"path": cfg.output_path, "format": cfg.output_format}
    models = out.get("models")
    if isinstance(models, dict) and "inference" in models and cfg.study in ("eig", "egig", "edi", "delta-edi", "oracle"):
        pair = cfg.pair()
        out["models"] = {"inference": model_to_dict(pair.inference), "truth": model_to_dict(pair.truth)}
    return out
