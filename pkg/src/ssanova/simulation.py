"""Monte-Carlo studies on the three-covariate benchmark model.

The benchmark has ``d = 3``, ``m = 3``, all main effects and all two-way
interactions, uniform covariates and standard normal noise. Each effect is
``rho_S * g_S`` with ``g_S`` a fixed closed-form function whose L2 norm is
about 0.35.

Seeding: replicate ``r`` at sample size ``n`` of a study with root seed
``s`` draws from ``np.random.SeedSequence(s, spawn_key=(n, r))``. Replicates
therefore do not depend on execution order or on the number of workers, and
scenarios that differ only in effect sizes share covariates and noise
(common random numbers).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from joblib import Parallel, delayed

from .design import Dataset, ModelSpec, effect_label
from .errors import ArgumentError
from .inference import bayesian_ci, pointwise_ci, wald_test
from .kernels import Effect, columns, cross_gram
from .quadrature import integrate, uniform_grid
from .solver import PenaltyEigen, effect_grams, fit, penalty_gram
from .spectral import effect_eigensystem, eigensystem_from_gram

D = 3
ORDER = 3
EFFECTS: tuple[Effect, ...] = ((), (1,), (2,), (3,), (1, 2), (1, 3), (2, 3))
PENALIZED = EFFECTS[1:]
INTERCEPT_VALUE = 0.35
DEFAULT_GRID = 40
DEFAULT_REPLICATES = 300


def _g1(x1):
    return 3.063 * x1**2 - 2.144 * x1 + 0.051


def _g2(x2):
    return 4.202 * np.exp(-x2) - 5.883 * x2**2 + 8.236 * x2 - 4.813


def _g3(x3):
    return 0.407 * np.log(0.667 * x3**2 - 1.333 * x3 + 0.767) + 3.052 * x3**2 - 3.052 * x3 + 1.052


def _g12(x1, x2):
    return (
        -11.502 * x1**2 * x2 + 11.502 * x1 * x2**2 + 5.751 * x1**2 - 5.751 * x2**2
        - 3.834 * x1 + 3.834 * x2
    )


def _g13(x1, x3):
    return (
        -7.484 * x1**2 * x3 + 8.315 * x1 * x3**2 - 3.881 * x1 * x3 + 3.742 * x1**2
        - 4.158 * x3**2 - 0.832 * x1 + 4.435 * x3 - 0.832
    )


def _g23(x2, x3):
    return (
        -1.353 * x2**2 * x3**2 - 6.226 * x2**2 * x3 + 8.933 * x2 * x3**2 + 1.805 * x2 * x3
        + 3.564 * x2**2 - 4.015 * x3**2 - 3.880 * x2 + 1.173 * x3 + 0.752
    )


_EFFECT_FUNCS = {(1,): _g1, (2,): _g2, (3,): _g3, (1, 2): _g12, (1, 3): _g13, (2, 3): _g23}


def true_effect(S: Effect, x) -> np.ndarray | float:
    """Unscaled benchmark effect ``g_S`` at points of its own domain.

    ``x`` holds ``|S|`` coordinates per point (a scalar is fine for a main
    effect). The intercept is the constant 0.35.
    """
    S = tuple(S)
    if not S:
        return INTERCEPT_VALUE
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0 or (arr.ndim == 1 and len(S) > 1 and arr.shape[0] == len(S))
    pts = arr.reshape(-1, len(S))
    out = _EFFECT_FUNCS[S](*pts.T)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class TrueModel:
    """``f = sum_S rho_S g_S`` with unit noise variance."""

    rho: Mapping[Effect, float] = field(default_factory=dict)
    sigma: float = 1.0

    def size(self, S: Effect) -> float:
        return float(self.rho.get(tuple(S), 1.0))

    def effect(self, S: Effect, x) -> np.ndarray | float:
        return self.size(S) * true_effect(S, x)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.full(X.shape[0], self.size(()) * INTERCEPT_VALUE)
        for S in PENALIZED:
            if self.size(S):
                out += self.size(S) * true_effect(S, X[:, columns(S)])
        return out


def replicate_seed(root: int, n: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(root, spawn_key=(n, rep))


def _draw(n: int, seed) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    X = rng.random((n, D))
    eps = rng.standard_normal(n)
    return X, eps


def generate_replicate(n: int, rho: Mapping[Effect, float] | None = None, seed=0) -> Dataset:
    """One benchmark dataset; identical seeds give bitwise identical data."""
    if n < 2:
        raise ArgumentError(f"need n >= 2, got {n}")
    model = TrueModel(dict(rho or {}))
    X, eps = _draw(n, seed)
    return Dataset.unit(X, model(X) + model.sigma * eps)


def benchmark_spec(**kw) -> ModelSpec:
    return ModelSpec(d=D, effects=EFFECTS, m=kw.pop("m", ORDER), **kw)


@dataclass
class ScenarioResult:
    """Per-replicate records of one scenario plus their aggregates.

    ``estimates`` (interval studies only) stores the effect estimates on the
    evaluation grid, one row per replicate, for the empirical length.
    """

    scenario: dict
    records: list[dict]
    aggregates: dict = field(default_factory=dict)
    estimates: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def recompute(self) -> dict:
        if self.scenario["kind"] == "ci":
            return aggregate_ci(self.records, self.estimates, self.scenario["alpha"])
        return aggregate_test(self.records)

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "aggregates": self.aggregates}


def _mean_se(values) -> dict:
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return {"mean": float(v.mean()), "se": se}


# ---------------------------------------------------------------- intervals


def _rmise(fitted, S: Effect, model: TrueModel) -> float:
    if not S:
        return abs(fitted.intercept - model.effect((), None))
    design = fitted.data.X[:, columns(S)]
    c = fitted.coef

    def sq_err(nodes):
        est = cross_gram(fitted.spec.m, nodes, design) @ c
        return (est - model.effect(S, nodes)) ** 2

    value, _ = integrate(sq_err, len(S))
    return math.sqrt(max(value, 0.0))


def _ci_replicate(n: int, rep: int, root: int, rho: dict, alpha: float, grid: int, m: int):
    model = TrueModel(rho)
    X, eps = _draw(n, replicate_seed(root, n, rep))
    data = Dataset.unit(X, model(X) + eps)
    spec = benchmark_spec(m=m, alpha=alpha)
    fitted = fit(spec, data)
    sigma2 = fitted.sigma2
    gcv = fitted.gcv
    rec = {
        "replicate": rep,
        "n": n,
        "lambda": fitted.lam,
        "lambda_at_edge": int(gcv.argmin in (0, len(gcv.grid) - 1)),
        "sigma2": sigma2,
        "trace": fitted.trace,
    }
    estimates = {}
    for S in EFFECTS:
        lab = effect_label(S)
        if S:
            pts = uniform_grid(len(S), grid)
            eig = effect_eigensystem(fitted, S)
            freq = pointwise_ci(fitted, eig, S, pts, alpha, sigma2)
        else:
            pts = None
            freq = pointwise_ci(fitted, None, S, None, alpha, sigma2)
        bayes = bayesian_ci(fitted, S, pts, alpha, sigma2)
        truth = model.effect(S, pts) if S else model.effect((), None)
        rec[f"len_ssaec_{lab}"] = float(np.mean(freq.half_width))
        rec[f"len_ssaebc_{lab}"] = float(np.mean(bayes.half_width))
        rec[f"cover_ssaec_{lab}"] = float(np.mean(freq.covers(truth)))
        rec[f"cover_ssaebc_{lab}"] = float(np.mean(bayes.covers(truth)))
        rec[f"rmise_{lab}"] = _rmise(fitted, S, model)
        estimates[lab] = freq.estimate
    return rec, estimates


def aggregate_ci(records: Sequence[dict], estimates: Mapping[str, np.ndarray], alpha: float) -> dict:
    agg = {
        "replicates": len(records),
        "sigma2": _mean_se([r["sigma2"] for r in records]),
        "sigma2_in_band": float(np.mean([0.8 <= r["sigma2"] <= 1.2 for r in records])),
        "lambda_median": float(np.median([r["lambda"] for r in records])),
        "lambda_at_edge": float(np.mean([r["lambda_at_edge"] for r in records])),
        "effects": {},
    }
    for S in EFFECTS:
        lab = effect_label(S)
        est = np.asarray(estimates.get(lab, np.empty((0, 0))))
        if est.ndim == 2 and est.shape[0] > 1:
            q_hi = np.quantile(est, 1 - alpha / 2, axis=0)
            q_lo = np.quantile(est, alpha / 2, axis=0)
            empirical = float(np.mean((q_hi - q_lo) / 2))
        else:
            empirical = 0.0
        rmise = [r[f"rmise_{lab}"] for r in records]
        agg["effects"][lab] = {
            "len_ssaec": _mean_se([r[f"len_ssaec_{lab}"] for r in records]),
            "len_ssaebc": _mean_se([r[f"len_ssaebc_{lab}"] for r in records]),
            "cover_ssaec": _mean_se([r[f"cover_ssaec_{lab}"] for r in records]),
            "cover_ssaebc": _mean_se([r[f"cover_ssaebc_{lab}"] for r in records]),
            "empirical_length": empirical,
            "rmise_median": float(np.median(rmise)),
            "rmise_mean": float(np.mean(rmise)),
        }
    return agg


def run_ci_study(
    ns: Sequence[int],
    replicates: int = DEFAULT_REPLICATES,
    alpha: float = 0.05,
    grid: int = DEFAULT_GRID,
    *,
    rho: Mapping[Effect, float] | None = None,
    seed: int = 0,
    jobs: int = 1,
    m: int = ORDER,
) -> list[ScenarioResult]:
    """Interval length, coverage and RMISE of both interval types, per sample size.

    Lengths are half-widths, comparable to the empirical length
    ``(Q_{1-alpha/2} - Q_{alpha/2}) / 2`` of the estimates across replicates.
    """
    if replicates < 1:
        raise ArgumentError("replicates must be at least 1")
    rho = {tuple(k): float(v) for k, v in (rho or {}).items()}
    results = []
    for n in ns:
        out = Parallel(n_jobs=jobs)(
            delayed(_ci_replicate)(n, r, seed, rho, alpha, grid, m) for r in range(replicates)
        )
        records = [rec for rec, _ in out]
        estimates = {
            effect_label(S): np.vstack([est[effect_label(S)] for _, est in out]) for S in EFFECTS
        }
        scenario = {
            "kind": "ci",
            "n": int(n),
            "rho": {effect_label(S): TrueModel(rho).size(S) for S in EFFECTS},
            "alpha": alpha,
            "replicates": replicates,
            "grid": grid,
            "m": m,
            "seed": seed,
        }
        res = ScenarioResult(scenario, records, estimates=estimates)
        res.aggregates = res.recompute()
        results.append(res)
    return results


# -------------------------------------------------------------------- tests


def _test_replicate(
    n: int, rep: int, root: int, target: Effect, rhos: Sequence[float], base: dict,
    alpha: float, m: int,
):
    X, eps = _draw(n, replicate_seed(root, n, rep))
    spec = benchmark_spec(m=m, alpha=alpha)
    # everything that depends on X alone is shared by all effect sizes
    probe = Dataset.unit(X, eps)
    grams = effect_grams(spec, probe)
    eig_j = PenaltyEigen.of(penalty_gram(grams, n))
    eig_s = eigensystem_from_gram(target, m, X[:, columns(target)], grams[target])
    out = []
    for rho_s in rhos:
        model = TrueModel({**base, target: rho_s})
        data = Dataset.unit(X, model(X) + eps)
        fitted = fit(spec, data, grams=grams, eig=eig_j)
        rep_t = wald_test(fitted, eig_s, target, alpha)
        out.append(
            {
                "replicate": rep,
                "n": n,
                "rho": rho_s,
                "lambda": fitted.lam,
                "sigma2": rep_t.sigma2,
                "statistic": rep_t.statistic,
                "p_value": rep_t.p_value,
                "reject": int(rep_t.reject),
                "norm": rep_t.norm,
                "s1": rep_t.s1,
                "s2": rep_t.s2,
            }
        )
    return out


def aggregate_test(records: Sequence[dict]) -> dict:
    rej = np.array([r["reject"] for r in records], dtype=float)
    stat = np.array([r["statistic"] for r in records], dtype=float)
    R = len(rej)
    p = float(rej.mean())
    return {
        "replicates": R,
        "rejection_rate": p,
        "mc_se": math.sqrt(p * (1 - p) / R),
        "statistic_mean": float(stat.mean()),
        "statistic_sd": float(stat.std(ddof=1)) if R > 1 else 0.0,
        "lambda_median": float(np.median([r["lambda"] for r in records])),
    }


def run_test_study(
    ns: Sequence[int],
    rhos: Sequence[float],
    target: Effect,
    replicates: int = DEFAULT_REPLICATES,
    alpha: float = 0.05,
    *,
    base: Mapping[Effect, float] | None = None,
    seed: int = 0,
    jobs: int = 1,
    m: int = ORDER,
) -> list[ScenarioResult]:
    """Rejection rates of the Wald test for ``target`` over ``(n, rho_target)``.

    Non-target effects keep size ``base`` (1 by default); ``rho = 0`` rows
    measure size and the rest power.
    """
    target = tuple(target)
    if target not in PENALIZED:
        raise ArgumentError(f"target {target} is not a penalized benchmark effect")
    if replicates < 1:
        raise ArgumentError("replicates must be at least 1")
    base = {tuple(k): float(v) for k, v in (base or {}).items()}
    rhos = [float(r) for r in rhos]
    results = []
    for n in ns:
        out = Parallel(n_jobs=jobs)(
            delayed(_test_replicate)(n, r, seed, target, rhos, base, alpha, m)
            for r in range(replicates)
        )
        for k, rho_s in enumerate(rhos):
            records = [reps[k] for reps in out]
            scenario = {
                "kind": "test",
                "n": int(n),
                "target": effect_label(target),
                "rho_target": rho_s,
                "alpha": alpha,
                "replicates": replicates,
                "m": m,
                "seed": seed,
            }
            results.append(ScenarioResult(scenario, records, aggregate_test(records)))
    return results


# ------------------------------------------------------------------ output


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def scenario_name(res: ScenarioResult) -> str:
    sc = res.scenario
    if sc["kind"] == "ci":
        return f"ci_n{sc['n']}"
    return f"test_S{sc['target'].replace(',', '-')}_n{sc['n']}_rho{sc['rho_target']:g}"


def write_records_csv(res: ScenarioResult, path) -> None:
    buf = io.StringIO()
    keys = list(res.records[0]) if res.records else []
    writer = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    writer.writeheader()
    for rec in res.records:
        writer.writerow(
            {k: repr(float(v)) if isinstance(v, (float, np.floating)) else v for k, v in rec.items()}
        )
    atomic_write(Path(path), buf.getvalue())


def write_summary_json(results: Sequence[ScenarioResult], path, extra: dict | None = None) -> None:
    doc = dict(extra or {})
    doc["scenarios"] = [r.to_dict() for r in results]
    atomic_write(Path(path), json.dumps(doc, indent=2, sort_keys=True) + "\n")
