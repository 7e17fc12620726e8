"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``ACCEPTANCE <k> PASS|FAIL`` line. The Monte-Carlo
studies are shared module fixtures; together they take 20 to 40 minutes
on one core.
"""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from ssanova.design import Dataset, ModelSpec
from ssanova.kernels import cross_gram, gram_matrix, EffectKernel
from ssanova.quadrature import tensor_rule
from ssanova.simulation import PENALIZED, generate_replicate, run_ci_study, run_test_study
from ssanova.solver import fit, fit_at_lambda, smoother_matrix
from ssanova.spectral import eigensystem_from_gram

pytestmark = pytest.mark.slow

SEED = 20240601
MAIN = [(1,), (2,), (3,)]
INTERACTIONS = [(1, 2), (1, 3), (2, 3)]
CI_REPLICATES = 300
SIZE_REPLICATES = 300
POWER_REPLICATES = 200
POWER_RHOS = (0.3, 0.4, 0.5)


def label(S):
    return ",".join(map(str, S)) or "0"


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {k:>2} {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return emit


def random_problem(rng):
    n = int(rng.integers(5, 31))
    d = int(rng.integers(1, 4))
    m = int(rng.choice([2, 3]))
    X = rng.random((n, d))
    y = np.cos(3 * X.sum(axis=1)) + 0.5 * rng.standard_normal(n)
    return ModelSpec.full(d, max_order=d, m=m), Dataset.unit(X, y)


# --------------------------------------------------------------- criterion 1


def objective(y, K, lam, f0, c):
    r = y - f0 - K @ c
    return r @ r / len(y) + lam * c @ K @ c


def test_1_optimality_oracle(report):
    rng = np.random.default_rng(SEED)
    start = time.perf_counter()
    worst = np.inf
    for _ in range(20):
        spec, data = random_problem(rng)
        lam = float(10.0 ** rng.uniform(-6, 0))
        f = fit_at_lambda(spec, data, lam)
        base = objective(data.y, f.penalty, lam, f.intercept, f.coef)
        scale = np.abs(f.coef).max() + abs(f.intercept) + 1e-3
        for s in 10.0 ** rng.uniform(-5, 0, 1000):
            f0 = f.intercept + s * scale * rng.standard_normal()
            c = f.coef + s * scale * rng.standard_normal(data.n)
            worst = min(worst, objective(data.y, f.penalty, lam, f0, c) - base)
    elapsed = time.perf_counter() - start
    ok = worst >= 0 and elapsed < 30
    report(1, ok, f"min objective margin {worst:.3e}, {elapsed:.1f}s")
    assert ok


# --------------------------------------------------------------- criterion 2


def test_2_smoother_identity(report):
    rng = np.random.default_rng(SEED + 2)
    errs = [0.0, 0.0, 0.0]
    for _ in range(20):
        spec, data = random_problem(rng)
        f = fit(spec, data)
        A = smoother_matrix(spec, data, f.lam)
        errs[0] = max(errs[0], np.abs(A @ data.y - f.fitted).max())
        errs[1] = max(errs[1], np.abs(A - A.T).max())
        errs[2] = max(errs[2], np.abs(A.sum(axis=1) - 1).max())
    ok = errs[0] <= 1e-8 and errs[1] <= 1e-10 and errs[2] <= 1e-10
    report(2, ok, f"fitted {errs[0]:.1e}, symmetry {errs[1]:.1e}, A1=1 {errs[2]:.1e}")
    assert ok


# --------------------------------------------------------------- criterion 3


def test_3_spectral_identities(report):
    rng = np.random.default_rng(SEED + 3)
    errs = [0.0, 0.0, 0.0]
    for n in (5, 20, 100):
        X = rng.random((n, 3))
        for S in [*MAIN, *INTERACTIONS, (1, 2, 3)]:
            for m in (2, 3):
                K = gram_matrix(EffectKernel(S, m), X)
                eig = eigensystem_from_gram(S, m, X[:, [j - 1 for j in S]], K)
                P = eig.vectors[:, : eig.rank]
                errs[0] = max(errs[0], np.abs(P.T @ P / n - np.eye(eig.rank)).max())
                errs[1] = max(errs[1], abs(eig.values.sum() - np.trace(K) / n))
                recon = (eig.vectors * eig.values) @ eig.vectors.T / n
                errs[2] = max(errs[2], np.abs(K / n - recon).max())
    ok = errs[0] <= 1e-8 and errs[1] <= 1e-10 and errs[2] <= 1e-8
    report(3, ok, f"orthonormality {errs[0]:.1e}, trace {errs[1]:.1e}, Mercer {errs[2]:.1e}")
    assert ok


# --------------------------------------------------------------- criterion 4


def test_4_orthogonality(report):
    rng = np.random.default_rng(SEED + 4)
    nodes, w = tensor_rule(3)
    effects = [*MAIN, *INTERACTIONS, (1, 2, 3)]
    worst = 0.0
    for _ in range(50):
        i, j = rng.choice(len(effects), size=2, replace=False)
        S, T = effects[i], effects[j]
        a, b = rng.random(3), rng.random(3)
        m = int(rng.choice([2, 3]))
        cs, ct = [k - 1 for k in S], [k - 1 for k in T]
        f = cross_gram(m, nodes[:, cs], a[None, cs])[:, 0]
        g = cross_gram(m, nodes[:, ct], b[None, ct])[:, 0]
        worst = max(worst, abs(w @ (f * g)))
    ok = worst <= 1e-6
    report(4, ok, f"max |inner product| {worst:.1e} over 50 pairs")
    assert ok


# ------------------------------------------------------- interval studies


@pytest.fixture(scope="module")
def ci_studies():
    out = {}
    for n in (250, 500, 1000):
        start = time.perf_counter()
        (res,) = run_ci_study([n], CI_REPLICATES, 0.05, 40, seed=SEED)
        res.scenario["seconds"] = time.perf_counter() - start
        out[n] = res
    return out


def test_5_coverage(ci_studies, report):
    res = ci_studies[1000]
    cov = {label(S): res.aggregates["effects"][label(S)]["cover_ssaec"]["mean"] for S in MAIN}
    ok = all(0.88 <= v <= 0.99 for v in cov.values())
    secs = res.scenario["seconds"]
    detail = ", ".join(f"S={k}: {v:.3f}" for k, v in cov.items())
    report(5, ok, f"ssaec main-effect coverage at n=1000 {detail} ({secs / 60:.1f} min)")
    assert ok


def test_6_interval_ordering(ci_studies, report):
    eff = ci_studies[500].aggregates["effects"]
    pairs = {label(S): (eff[label(S)]["len_ssaec"]["mean"], eff[label(S)]["len_ssaebc"]["mean"])
             for S in INTERACTIONS}
    ok = all(a < b for a, b in pairs.values())
    detail = ", ".join(f"S={k}: {a:.4f} < {b:.4f}" for k, (a, b) in pairs.items())
    report(6, ok, f"ssaec vs ssaebc mean half-width at n=500 {detail}")
    assert ok


def test_9_rmise_monotone(ci_studies, report):
    med = {n: {lab: e["rmise_median"] for lab, e in ci_studies[n].aggregates["effects"].items()}
           for n in (250, 1000)}
    decreasing = all(med[1000][k] < med[250][k] for k in med[250])
    big = med[1000]
    intercept = big["0"]
    main = float(np.mean([big[label(S)] for S in MAIN]))
    inter = float(np.mean([big[label(S)] for S in INTERACTIONS]))
    ordered = intercept < main < inter
    ok = decreasing and ordered
    report(
        9, ok,
        f"decreasing 250->1000: {decreasing}; at n=1000 intercept {intercept:.4f} < "
        f"main {main:.4f} < interaction {inter:.4f}: {ordered}",
    )
    assert ok


def test_10_sigma2(ci_studies, report):
    frac = ci_studies[1000].aggregates["sigma2_in_band"]
    ok = frac >= 0.95
    report(10, ok, f"{frac:.3f} of {CI_REPLICATES} replicates have sigma2 in [0.8, 1.2]")
    assert ok


# ---------------------------------------------------------- test studies


@pytest.fixture(scope="module")
def size_study():
    return {S: run_test_study([500], [0.0], S, SIZE_REPLICATES, seed=SEED)[0] for S in PENALIZED}


def test_7_size(size_study, report):
    rates = {label(S): r.aggregates["rejection_rate"] for S, r in size_study.items()}
    ok = all(0.02 <= v <= 0.10 for v in rates.values())
    detail = ", ".join(f"S={k}: {v:.3f}" for k, v in rates.items())
    report(7, ok, f"size at n=500 {detail}")
    assert ok


@pytest.fixture(scope="module")
def power_study():
    return {S: run_test_study([750], POWER_RHOS, S, POWER_REPLICATES, seed=SEED + 1)
            for S in PENALIZED}


def test_8_power_monotone(power_study, report):
    ok = True
    parts = []
    for S, results in power_study.items():
        rates = [r.aggregates["rejection_rate"] for r in results]
        ses = [r.aggregates["mc_se"] for r in results]
        for k in range(len(rates) - 1):
            slack = 2 * math.hypot(ses[k], ses[k + 1])
            ok &= rates[k + 1] >= rates[k] - slack
        parts.append(f"S={label(S)}: " + "/".join(f"{v:.2f}" for v in rates))
    report(8, ok, "power at rho=0.3/0.4/0.5, n=750: " + ", ".join(parts))
    assert ok


# -------------------------------------------------------------- criterion 11


def test_11_cli_end_to_end(tmp_path, report):
    data = generate_replicate(150, seed=np.random.SeedSequence(SEED))
    path = tmp_path / "synthetic.csv"
    lines = ["y,x1,x2,x3"]
    lines += [",".join(repr(float(v)) for v in (yi, *row)) for yi, row in zip(data.y, data.X)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    outputs = {}
    for cmd in ("fit", "test", "ci"):
        out = tmp_path / f"{cmd}.json"
        blobs = []
        for _ in range(2):
            proc = subprocess.run(
                [sys.executable, "-m", "ssanova", cmd, "--input", str(path), "--response", "y",
                 "--seed", str(SEED), "--out", str(out)],
                capture_output=True, text=True, check=False,
            )
            assert proc.returncode == 0, proc.stderr
            blobs.append(out.read_bytes())
        outputs[cmd] = blobs
    identical = all(a == b for a, b in outputs.values())
    doc = json.loads(outputs["test"][0])
    has_group = len(doc["tests"]["groups"]) == 1
    ok = identical and has_group
    report(11, ok, f"fit/test/ci via the CLI, bit-identical re-runs: {identical}")
    assert ok
