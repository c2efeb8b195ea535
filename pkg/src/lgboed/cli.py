"""``boed`` command-line front end.

Exit codes:
  0  success
  1  unexpected error
  2  config schema or invariant violation (also ``validate`` finding issues)
  3  model instability
  4  solver non-convergence
  5  singular covariance during evaluation
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Any, Sequence

import numpy as np

from . import backend
from .config import (
    ConfigError,
    RunConfig,
    apply_overrides,
    k3_values,
    load_raw,
    parse_value,
    resolve,
    resolved_dict,
    validate_data,
)
from .core import STABILITY_MARGIN, ModelPair, spectral_radius
from .criteria import (
    delta_edi,
    edi_single_step,
    egig_infinite_horizon,
    egig_single_step,
    eig_infinite_horizon,
    eig_single_step,
)
from .design import SweepResult, f16_study, pareto_front, smd_study
from .errors import ConvergenceError, SingularCovarianceError, StabilityError
from .oracle import (
    SimConfig,
    mc_delta_edi,
    mc_edi_single_step,
    mc_egig_infinite_horizon,
    mc_egig_single_step,
    mc_eig_infinite_horizon,
    mc_eig_single_step,
)
from .stationary import predict, stationary_pair

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_UNSTABLE, EXIT_CONVERGENCE, EXIT_SINGULAR = 0, 1, 2, 3, 4, 5

SUBCOMMANDS = ("eig", "egig", "edi", "delta-edi", "smd-study", "f16-study", "oracle", "validate")

EPILOG = """\
exit codes: 0 success; 1 unexpected error; 2 config schema or invariant violation;
3 model instability; 4 solver non-convergence; 5 singular covariance.

Any further --a.b VALUE, --a.b=VALUE or a.b=VALUE arguments override the
config at that dotted path (values parse as JSON when possible).
"""


# tables --------------------------------------------------------------------


def format_number(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "" if v is None else str(v)


def _json_value(v: Any) -> Any:
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def render(rows: list[dict], columns: Sequence[str], fmt: str) -> str:
    if fmt == "json":
        records = [{c: _json_value(r.get(c)) for c in columns} for r in rows]
        return json.dumps(records, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([format_number(r.get(c)) for c in columns])
    return buf.getvalue()


# studies -------------------------------------------------------------------


def _require_stable_pair(pair: ModelPair) -> None:
    for role, model in (("inference", pair.inference), ("truth", pair.truth)):
        rho = spectral_radius(model.A)
        if not rho < 1.0 - STABILITY_MARGIN:
            raise StabilityError(
                f"field models.{role}.A: dynamics unstable (spectral radius {rho:.12g})", rho
            )


def _criterion_rows(cfg: RunConfig) -> tuple[list[dict], list[str], str]:
    pair = cfg.pair()
    m, ms = pair.inference, pair.truth
    study, regime = cfg.study, cfg.regime
    if regime == "single-step" and study != "delta-edi":
        prior, prior_star = predict(m, m.init), predict(ms, ms.init)
        value = {
            "eig": lambda: eig_single_step(m, prior),
            "egig": lambda: egig_single_step(pair, prior, prior_star),
            "edi": lambda: edi_single_step(pair, prior, prior_star),
        }[study]()
        column = study
    else:
        regime = "infinite-horizon"
        _require_stable_pair(pair)
        if study == "eig":
            value, column = eig_infinite_horizon(stationary_pair(ModelPair(m, m))[0]), "eig"
        else:
            sq, sq_star, joint = stationary_pair(pair)
            if study == "egig":
                value, column = egig_infinite_horizon(pair, joint, sq, sq_star), "egig"
            else:
                value, column = delta_edi(pair, joint, sq, sq_star), "delta_edi"
    row = {"regime": regime, column: value}
    return [row], ["regime", column], f"{column} = {value:.10g} ({regime})"


def _sweep_rows(result: SweepResult, design_cols: Sequence[str], value_cols: Sequence[str]):
    rows = []
    for rec in result.records:
        row = dict(zip(design_cols, rec.design.params))
        for c in value_cols:
            row[c] = getattr(rec.criteria, c) if hasattr(rec.criteria, c) else rec.extras.get(c, math.nan)
        if rec.error:
            row["error"] = rec.error
        rows.append(row)
    columns = list(design_cols) + list(value_cols)
    if any(rec.error for rec in result.records):
        columns.append("error")
    return rows, columns


def _pareto_summary(result: SweepResult, eig: np.ndarray, other: np.ndarray, design_cols) -> str:
    finite = np.isfinite(eig) & np.isfinite(other)
    if not finite.any():
        return "no design evaluated successfully"
    best = result.argmax("eig")
    params = ", ".join(f"{c}={v:.6g}" for c, v in zip(design_cols, result.records[best].design.params))
    front = pareto_front(np.column_stack([eig, other]))
    failed = sum(1 for r in result.records if r.error)
    tail = f", {failed} failed" if failed else ""
    return f"argmax eig at {params} (eig = {eig[best]:.10g}); pareto size {len(front)} of {len(eig)}{tail}"


def _smd(cfg: RunConfig):
    p = cfg.smd_params()
    smd = cfg.section("smd")
    points = smd.get("points", 50)
    result = smd_study(p, points, k3_values(cfg, p), cfg.workers)
    rows, columns = _sweep_rows(result, ["d"], ["eig", "delta_edi_mean"])
    eig = result.column("eig")
    # designs should be informative and also good at exposing the missing mass
    summary = _pareto_summary(result, eig, -result.column("delta_edi_mean"), ["d"])
    return rows, columns, summary + " (max eig, max delta_edi_mean)"


def _f16(cfg: RunConfig):
    f16 = cfg.section("f16")
    result = f16_study(f16.get("resolution", 21), f16.get("step", 1e-5), cfg.workers)
    cols = ["d1", "d2"]
    rows, columns = _sweep_rows(result, cols, ["d3", "eig", "egig_sensitivity"])
    summary = _pareto_summary(result, result.column("eig"), result.column("egig_sensitivity"), cols)
    return rows, columns, summary + " (max eig, min egig_sensitivity)"


def _oracle(cfg: RunConfig):
    pair = cfg.pair()
    m, ms = pair.inference, pair.truth
    sim = cfg.sim()
    regimes = cfg.section("oracle").get("regimes", ["single-step", "infinite-horizon"])
    rows = []
    if "single-step" in regimes:
        prior, prior_star = predict(m, m.init), predict(ms, ms.init)
        single = SimConfig(sim.seed, sim.n_samples, 1, 0)
        checks = [("eig", eig_single_step(m, prior), lambda: mc_eig_single_step(m, prior, single))]
        if pair.same_state_dim:
            checks.append(
                ("egig", egig_single_step(pair, prior, prior_star),
                 lambda: mc_egig_single_step(pair, prior, prior_star, single))
            )
        checks.append(
            ("edi", edi_single_step(pair, prior, prior_star),
             lambda: mc_edi_single_step(pair, prior, prior_star, single))
        )
        rows += [_oracle_row(name, "single-step", cf, est()) for name, cf, est in checks]
    if "infinite-horizon" in regimes:
        _require_stable_pair(pair)
        sq, sq_star, joint = stationary_pair(pair)
        sq_m = stationary_pair(ModelPair(m, m))[0]
        checks = [("eig", eig_infinite_horizon(sq_m), lambda: mc_eig_infinite_horizon(m, sim, cfg.workers))]
        if pair.same_state_dim:
            checks.append(
                ("egig", egig_infinite_horizon(pair, joint, sq, sq_star),
                 lambda: mc_egig_infinite_horizon(pair, sim, cfg.workers))
            )
        checks.append(
            ("delta_edi", delta_edi(pair, joint, sq, sq_star), lambda: mc_delta_edi(pair, sim, cfg.workers))
        )
        rows += [_oracle_row(name, "infinite-horizon", cf, est()) for name, cf, est in checks]
    columns = ["criterion", "regime", "closed_form", "mc_mean", "mc_std_error", "mc_n", "z_score"]
    worst = max(abs(r["z_score"]) for r in rows if math.isfinite(r["z_score"])) if rows else math.nan
    return rows, columns, f"{len(rows)} oracle checks; max |z| = {worst:.3g} (seed {sim.seed})"


def _oracle_row(name, regime, closed_form, est) -> dict:
    if est.std_error > 0:
        z = (est.mean - closed_form) / est.std_error
    else:
        z = 0.0 if est.mean == closed_form else math.inf
    return {
        "criterion": name,
        "regime": regime,
        "closed_form": closed_form,
        "mc_mean": est.mean,
        "mc_std_error": est.std_error,
        "mc_n": est.n,
        "z_score": z,
    }


def run(cfg: RunConfig, out=None) -> int:
    out = sys.stdout if out is None else out
    if cfg.study in ("eig", "egig", "edi", "delta-edi"):
        rows, columns, summary = _criterion_rows(cfg)
    elif cfg.study == "smd-study":
        rows, columns, summary = _smd(cfg)
    elif cfg.study == "f16-study":
        rows, columns, summary = _f16(cfg)
    else:
        rows, columns, summary = _oracle(cfg)
    table = render(rows, columns, cfg.output_format)
    if cfg.output_path is None:
        out.write(table)
        print(summary, file=sys.stderr)
        return EXIT_OK
    with open(cfg.output_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(table)
    with open(cfg.output_path + ".config.json", "w", encoding="utf-8") as fh:
        json.dump(resolved_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{cfg.study}: {summary}; wrote {len(rows)} rows to {cfg.output_path}", file=out)
    return EXIT_OK


# argument handling ----------------------------------------------------------


def split_overrides(extra: Sequence[str]) -> list[tuple[str, Any]]:
    """Turn leftover ``--a.b V``, ``--a.b=V`` and ``a.b=V`` tokens into ``(key, value)`` pairs."""
    pairs = []
    i = 0
    extra = list(extra)
    while i < len(extra):
        tok = extra[i]
        if tok.startswith("--"):
            body = tok[2:]
            if "=" in body:
                key, value = body.split("=", 1)
            else:
                if i + 1 >= len(extra):
                    raise ValueError(f"override {tok} needs a value")
                key, value = body, extra[i + 1]
                i += 1
        elif "=" in tok:
            key, value = tok.split("=", 1)
        else:
            raise ValueError(f"unrecognized argument {tok!r}")
        if "." not in key and key not in ("study", "regime", "workers"):
            raise ValueError(f"unrecognized option --{key}")
        pairs.append((key, parse_value(value)))
        i += 1
    return pairs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boed",
        description="Closed-form EIG, EGIG and EDI criteria for linear-Gaussian state-space models.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s 0.1.0 ({backend.NAME} kernels)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
        if name == "validate":
            p.add_argument("config_path", nargs="?", help="config file, or 'defaults'")
        p.add_argument("--config", help="config file, or 'defaults' for the packaged defaults")
        if name != "validate":
            p.add_argument("--output", help="output table path (stdout if omitted)")
            p.add_argument("--format", choices=("csv", "json"), help="table format (default csv)")
            p.add_argument("--workers", type=int, help="worker processes for sweeps and oracles")
    return parser


def _validate(source: str, data: dict, out) -> int:
    issues = validate_data(data, source)
    for issue in issues:
        print(issue.format(source), file=out)
    print(f"{len(issues)} issue{'s' if len(issues) != 1 else ''}", file=out)
    return EXIT_OK if not issues else EXIT_CONFIG


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    source = getattr(args, "config", None) or getattr(args, "config_path", None) or "defaults"
    try:
        overrides = split_overrides(extra)
    except ValueError as exc:
        parser.error(str(exc))
    try:
        try:
            raw = load_raw(source)
        except OSError as exc:
            print(f"{source}: cannot read config ({exc.strerror or exc})", file=sys.stderr)
            return EXIT_CONFIG
        data = apply_overrides(raw, overrides, source)
        if args.command == "validate":
            return _validate(source, data, sys.stdout)
        if args.workers is not None and args.workers < 1:
            raise ConfigError(source, "workers", f"must be a positive integer, got {args.workers}")
        cfg = resolve(data, source, args.command, args.output, args.format, args.workers)
        return run(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StabilityError as exc:
        print(f"error: {source}: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except ConvergenceError as exc:
        print(f"error: {source}: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except SingularCovarianceError as exc:
        print(f"error: {source}: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except Exception as exc:  # noqa: BLE001 - last-resort diagnostic for the CLI
        print(f"error: {source}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
