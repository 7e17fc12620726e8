"""Command-line front end.

Subcommands ``fit``, ``test`` and ``ci`` work on a CSV file; ``simulate``
runs the benchmark Monte-Carlo studies. Reports are JSON documents with a
``schema_version`` and the fully resolved configuration. Exit status is 0 on
success, 2 for bad input or configuration and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .design import (
    DEFAULT_ALPHA,
    DEFAULT_GAMMA,
    ModelSpec,
    all_effects,
    effect_label,
    load_csv,
    parse_effects,
    validate_spec,
)
from .errors import ArgumentError, InputError, NumericalError, SchemaError
from .inference import (
    bayesian_ci,
    effect_norm_parts,
    pointwise_ci,
    wald_test,
    wald_test_group,
)
from .kernels import DEFAULT_ORDER, columns
from .quadrature import GL_NODES, QMC_BATCHES, QMC_LOG2, uniform_grid
from .simulation import (
    atomic_write,
    run_ci_study,
    run_test_study,
    scenario_name,
    write_records_csv,
    write_summary_json,
)
from .solver import GRID_SIZE, default_grid, eval_effect, fit
from .spectral import RANK_TOL, effect_eigensystem

SCHEMA_VERSION = "1.0"
SEED_ENV = "SSANOVA_SEED"
EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3
COMMANDS = ("fit", "test", "ci", "simulate")
MAX_AXIS_POINTS_HIGH_ORDER = 6


@dataclass(frozen=True)
class RunConfig:
    """Everything a run depends on; serializes to and from plain JSON types."""

    command: str
    input: str | None = None
    response: str | None = None
    covariates: tuple[str, ...] | None = None
    effects: str | None = None
    order: int = DEFAULT_ORDER
    lam: float | None = None
    lambda_grid: tuple[float, ...] | None = None
    grid_size: int = GRID_SIZE
    gamma: float = DEFAULT_GAMMA
    alpha: float = DEFAULT_ALPHA
    out: str | None = None
    seed: int = 0
    jobs: int = 1
    points: int = 21
    groups: tuple[str, ...] = ()
    refit: bool = False
    study: str = "test"
    replicates: int = 300
    ns: tuple[int, ...] = (500,)
    rhos: tuple[float, ...] = (0.0,)
    target: str = "1"
    grid: int = 40

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ArgumentError(f"unknown configuration keys: {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
        return cls(**kw)


# ------------------------------------------------------------------ parsing


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _names(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssanova", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--order", type=int, default=DEFAULT_ORDER, help="Sobolev order m")
    common.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    common.add_argument("--seed", type=int, default=None, help=f"defaults to ${SEED_ENV}, then 0")
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--out", default=None)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", required=True, help="CSV file with a header row")
    data.add_argument("--response", required=True)
    data.add_argument("--covariates", type=_names, default=None,
                      help="comma-separated names; default is every other column")
    data.add_argument("--effects", default=None,
                      help='e.g. "1;2;3;1,2"; default is all main effects and pairs')
    lam = data.add_mutually_exclusive_group()
    lam.add_argument("--lambda", dest="lam", type=float, default=None)
    lam.add_argument("--lambda-grid", type=_floats, default=None)
    data.add_argument("--grid-size", type=int, default=GRID_SIZE, help="default GCV grid size")
    data.add_argument("--gamma", type=float, default=DEFAULT_GAMMA, help="GCV inflation factor")
    data.add_argument("--points", type=int, default=21, help="evaluation points per axis")

    sub.add_parser("fit", parents=[common, data], help="fit a model and report effect norms")
    p_test = sub.add_parser("test", parents=[common, data], help="Wald-type tests per effect")
    p_test.add_argument("--group", dest="groups", action="append", default=[],
                        help='extra joint test, e.g. "1,2;1,3" (repeatable)')
    p_test.add_argument("--refit", action="store_true",
                        help="refit with the significant effects and test them again")
    sub.add_parser("ci", parents=[common, data], help="pointwise intervals per effect")

    p_sim = sub.add_parser("simulate", parents=[common], help="benchmark Monte-Carlo study")
    p_sim.add_argument("--study", choices=("ci", "test"), default="test")
    p_sim.add_argument("--n", dest="ns", type=_ints, default=(500,))
    p_sim.add_argument("--rho", dest="rhos", type=_floats, default=(0.0,))
    p_sim.add_argument("--target", default="1")
    p_sim.add_argument("--replicates", type=int, default=300)
    p_sim.add_argument("--grid", type=int, default=40, help="evaluation points per axis")
    return parser


def resolve_seed(seed: int | None, environ=os.environ) -> int:
    if seed is not None:
        return seed
    text = environ.get(SEED_ENV)
    if text is None or not text.strip():
        return 0
    try:
        return int(text)
    except ValueError:
        raise ArgumentError(f"{SEED_ENV}={text!r} is not an integer") from None


def config_from_args(args: argparse.Namespace, environ=os.environ) -> RunConfig:
    values = {k: v for k, v in vars(args).items() if v is not None}
    values["seed"] = resolve_seed(args.seed, environ)
    if "groups" in values:
        values["groups"] = tuple(values["groups"])
    return RunConfig(**values)


# ------------------------------------------------------------------ helpers


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(doc: dict) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(doc: dict, cfg: RunConfig) -> None:
    text = dumps(doc)
    if cfg.out:
        atomic_write(Path(cfg.out), text)
    else:
        sys.stdout.write(text)


def _header(path: str) -> list[str]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        try:
            return [h.strip() for h in next(csv.reader(fh))]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None


def _load(cfg: RunConfig):
    covariates = cfg.covariates
    if covariates is None:
        covariates = tuple(h for h in _header(cfg.input) if h != cfg.response)
    if not covariates:
        raise SchemaError("no covariate columns")
    data = load_csv(cfg.input, cfg.response, covariates)
    effects = parse_effects(cfg.effects) if cfg.effects else all_effects(data.d, 2)
    grid = cfg.lambda_grid
    if cfg.lam is None and grid is None:
        grid = tuple(default_grid(data.n, cfg.order, cfg.grid_size))
    if cfg.points < 2:
        raise ArgumentError("--points must be at least 2")
    spec = ModelSpec(
        d=data.d,
        effects=effects,
        m=cfg.order,
        lam=cfg.lam,
        lambda_grid=None if cfg.lam is not None else tuple(grid),
        gcv_gamma=cfg.gamma,
        alpha=cfg.alpha,
    )
    return validate_spec(spec, data), data


def _resolved(cfg: RunConfig, spec: ModelSpec | None = None) -> dict:
    doc = {
        "config": cfg.to_dict(),
        "tolerances": {
            "rank_tol": RANK_TOL,
            "gauss_legendre_nodes": GL_NODES,
            "qmc_points": 2**QMC_LOG2,
            "qmc_batches": QMC_BATCHES,
        },
    }
    if spec is not None:
        doc["model"] = {
            "effects": [effect_label(S) for S in spec.effects],
            "m": spec.m,
            "lambda": spec.lam,
            "lambda_grid": list(spec.lambda_grid) if spec.lambda_grid is not None else None,
            "gcv_gamma": spec.gcv_gamma,
            "alpha": spec.alpha,
        }
    return doc


def _axis_points(cfg: RunConfig, S) -> int:
    return cfg.points if len(S) <= 2 else min(cfg.points, MAX_AXIS_POINTS_HIGH_ORDER)


def _effect_name(data, S) -> str:
    return ":".join(data.covariate_names[j] for j in columns(S)) if S else "(intercept)"


def _fit_summary(fitted) -> dict:
    doc = {
        "lambda": fitted.lam,
        "intercept": fitted.intercept,
        "sigma2": fitted.sigma2,
        "df": fitted.trace,
        "solver": fitted.solver.method,
        "effects": [effect_label(S) for S in fitted.spec.effects],
    }
    if fitted.gcv is not None:
        doc["gcv"] = fitted.gcv.to_dict()
    return doc


def _data_summary(data) -> dict:
    return {
        "n": data.n,
        "d": data.d,
        "response": data.response_name,
        "covariates": list(data.covariate_names),
        "scaling": [list(r) for r in data.scaling],
    }


def _base_report(cfg: RunConfig, spec, data, fitted) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": cfg.command,
        "resolved": _resolved(cfg, spec),
        "data": _data_summary(data),
        "fit": _fit_summary(fitted),
    }


def _test_record(rep, data) -> dict:
    doc = rep.to_dict()
    doc["effects"] = [effect_label(S) for S in rep.effects]
    doc["names"] = [_effect_name(data, S) for S in rep.effects]
    doc["components"] = {effect_label(S): v for S, v in rep.components.items()}
    return doc


def _run_tests(fitted, data, alpha, groups) -> dict:
    pen = fitted.spec.penalized
    eigs = {S: effect_eigensystem(fitted, S) for S in pen}
    singles = [_test_record(wald_test(fitted, eigs[S], S, alpha), data) for S in pen]
    group_docs = []
    if pen:
        group_docs.append(_test_record(wald_test_group(fitted, eigs, pen, alpha), data))
    for text in groups:
        group = [S for S in parse_effects(text) if S]
        group_docs.append(_test_record(wald_test_group(fitted, eigs, group, alpha), data))
    return {"single": singles, "groups": group_docs}


# ----------------------------------------------------------------- commands


def cmd_fit(cfg: RunConfig) -> dict:
    spec, data = _load(cfg)
    fitted = fit(spec, data)
    report = _base_report(cfg, spec, data, fitted)
    effects = {}
    for S in spec.penalized:
        parts = effect_norm_parts(fitted, S)
        pts = uniform_grid(len(S), _axis_points(cfg, S))
        effects[effect_label(S)] = {
            "name": _effect_name(data, S),
            "sq_norm": parts.total,
            "integral": parts.integral,
            "penalty": parts.penalty,
            "quadrature_error": parts.error,
            "curve": {
                "points": pts,
                "points_raw": data.unscale(pts, columns(S)),
                "values": eval_effect(fitted, S, pts),
            },
        }
    report["effects"] = effects
    _emit(report, cfg)
    return report


def cmd_test(cfg: RunConfig) -> dict:
    spec, data = _load(cfg)
    fitted = fit(spec, data)
    report = _base_report(cfg, spec, data, fitted)
    report["tests"] = _run_tests(fitted, data, cfg.alpha, cfg.groups)
    if cfg.refit:
        kept = tuple(
            tuple(int(j) for j in rec["effects"][0].split(","))
            for rec in report["tests"]["single"]
            if rec["reject"]
        )
        reduced = validate_spec(ModelSpec(
            d=spec.d, effects=((),) + kept, m=spec.m, lam=spec.lam,
            lambda_grid=spec.lambda_grid, gcv_gamma=spec.gcv_gamma, alpha=spec.alpha,
        ), data)
        refitted = fit(reduced, data)
        report["refit"] = {
            "fit": _fit_summary(refitted),
            "tests": _run_tests(refitted, data, cfg.alpha, ()),
        }
    _emit(report, cfg)
    if cfg.out:
        for rec in report["tests"]["single"] + report["tests"]["groups"]:
            label = ";".join(rec["effects"])
            print(f"{label:>16s}  T = {rec['statistic']:+.3f}  (p = {rec['p_value']:.3g})")
    return report


def cmd_ci(cfg: RunConfig) -> dict:
    spec, data = _load(cfg)
    fitted = fit(spec, data)
    report = _base_report(cfg, spec, data, fitted)
    bands = {}
    for S in spec.effects:
        if S:
            pts = uniform_grid(len(S), _axis_points(cfg, S))
            freq = pointwise_ci(fitted, effect_eigensystem(fitted, S), S, pts, cfg.alpha)
            raw = data.unscale(pts, columns(S))
        else:
            pts, raw = None, None
            freq = pointwise_ci(fitted, None, S, None, cfg.alpha)
        bayes = bayesian_ci(fitted, S, pts, cfg.alpha)
        bands[effect_label(S)] = {
            "name": _effect_name(data, S),
            "points": freq.points if S else [],
            "points_raw": raw if S else [],
            "estimate": freq.estimate,
            "ssaec": {"half_width": freq.half_width, "lower": freq.lower, "upper": freq.upper},
            "ssaebc": {
                "half_width": bayes.half_width,
                "lower": bayes.lower,
                "upper": bayes.upper,
                "clamped_variances": bayes.n_clamped,
            },
        }
    report["intervals"] = bands
    _emit(report, cfg)
    return report


def cmd_simulate(cfg: RunConfig) -> dict:
    out = Path(cfg.out or "simulation_out")
    if cfg.replicates < 1:
        raise ArgumentError("--replicates must be at least 1")
    if cfg.study == "ci":
        results = run_ci_study(
            cfg.ns, cfg.replicates, cfg.alpha, cfg.grid, seed=cfg.seed, jobs=cfg.jobs, m=cfg.order
        )
    else:
        target = [S for S in parse_effects(cfg.target) if S]
        if len(target) != 1:
            raise ArgumentError(f"--target must name one effect, got {cfg.target!r}")
        results = run_test_study(
            cfg.ns, cfg.rhos, target[0], cfg.replicates, cfg.alpha,
            seed=cfg.seed, jobs=cfg.jobs, m=cfg.order,
        )
    for res in results:
        write_records_csv(res, out / f"{scenario_name(res)}.csv")
    extra = {"schema_version": SCHEMA_VERSION, "command": "simulate", "resolved": _resolved(cfg)}
    write_summary_json(results, out / "summary.json", extra)
    _print_table(results, cfg)
    return {"scenarios": [r.to_dict() for r in results]}


def _print_table(results, cfg: RunConfig) -> None:
    if cfg.study == "test":
        print(f"{'n':>6s} {'target':>7s} {'rho':>5s} {'reject':>7s} {'mc_se':>7s}")
        for r in results:
            sc, ag = r.scenario, r.aggregates
            print(f"{sc['n']:6d} {sc['target']:>7s} {sc['rho_target']:5.2f} "
                  f"{ag['rejection_rate']:7.3f} {ag['mc_se']:7.3f}")
        return
    print(f"{'n':>6s} {'effect':>7s} {'cov_ec':>7s} {'cov_ebc':>7s} "
          f"{'len_ec':>8s} {'len_ebc':>8s} {'rmise':>8s}")
    for r in results:
        for lab, e in r.aggregates["effects"].items():
            print(f"{r.scenario['n']:6d} {lab:>7s} {e['cover_ssaec']['mean']:7.3f} "
                  f"{e['cover_ssaebc']['mean']:7.3f} {e['len_ssaec']['mean']:8.4f} "
                  f"{e['len_ssaebc']['mean']:8.4f} {e['rmise_median']:8.4f}")


HANDLERS = {"fit": cmd_fit, "test": cmd_test, "ci": cmd_ci, "simulate": cmd_simulate}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = config_from_args(args)
        HANDLERS[cfg.command](cfg)
    except (InputError, OSError) as exc:
        print(f"ssanova: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"ssanova: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
