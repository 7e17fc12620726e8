"""Effect-wise confidence intervals and Wald-type tests."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import ArgumentError, DegenerateFitError, NumericalError, SpecError
from .kernels import Effect, columns, cross_gram, kernel_diag
from .quadrature import integrate
from .solver import FittedModel, eval_effect
from .spectral import EffectEigensystem, eigen_sums, pointwise_variance_sum

_STD_NORMAL = statistics.NormalDist()
NODE_CHUNK = 4096


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_quantile(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ArgumentError(f"probability must lie in (0, 1), got {p}")
    return _STD_NORMAL.inv_cdf(p)


def two_sided_p(t: float) -> float:
    """``2 (1 - Phi(|t|))`` computed without cancellation."""
    return math.erfc(abs(t) / math.sqrt(2.0))


def _z(alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise ArgumentError(f"alpha must lie in (0, 1), got {alpha}")
    return normal_quantile(1.0 - alpha / 2.0)


def _check_effect(fit: FittedModel, S: Effect) -> Effect:
    S = tuple(S)
    if S not in fit.spec.effects:
        raise SpecError(f"effect {S} is not in the model")
    return S


@dataclass(frozen=True)
class NormParts:
    integral: float
    penalty: float
    error: float = 0.0

    @property
    def total(self) -> float:
        return self.integral + self.penalty


def effect_norm_parts(fit: FittedModel, S: Effect, lam: float | None = None) -> NormParts:
    """``int f_S^2`` by quadrature and ``lam c' K_S c`` for a penalized effect."""
    S = _check_effect(fit, S)
    if not S:
        raise SpecError("the intercept has no lambda-weighted effect norm")
    lam = fit.lam if lam is None else lam
    c = fit.coef
    if not np.any(c):
        return NormParts(0.0, 0.0)
    design = fit.data.X[:, columns(S)]
    m = fit.spec.m

    def f_sq(nodes: np.ndarray) -> np.ndarray:
        out = np.empty(len(nodes))
        for lo in range(0, len(nodes), NODE_CHUNK):
            block = nodes[lo : lo + NODE_CHUNK]
            out[lo : lo + NODE_CHUNK] = (cross_gram(m, block, design) @ c) ** 2
        return out

    integral, err = integrate(f_sq, len(S))
    pen = float(lam * (c @ fit.grams[S] @ c))
    if integral < 0:
        integral = 0.0
    return NormParts(integral, max(pen, 0.0), err)


def effect_sq_norm(fit: FittedModel, S: Effect, lam: float | None = None) -> float:
    """``||f_S||^2_{S,lam} = int f_S^2 + lam c' K_S c``."""
    return effect_norm_parts(fit, S, lam).total


@dataclass(frozen=True)
class IntervalBand:
    effect: Effect
    points: np.ndarray
    estimate: np.ndarray
    half_width: np.ndarray
    method: str
    alpha: float
    n_clamped: int = 0

    @property
    def lower(self) -> np.ndarray:
        return self.estimate - self.half_width

    @property
    def upper(self) -> np.ndarray:
        return self.estimate + self.half_width

    def covers(self, truth) -> np.ndarray:
        truth = np.asarray(truth, dtype=float)
        return (self.lower <= truth) & (truth <= self.upper)


def _as_points(S: Effect, points) -> np.ndarray:
    if points is None:
        if S:
            raise ArgumentError("evaluation points are required for a penalized effect")
        return np.zeros((1, 0))
    points = np.asarray(points, dtype=float)
    if points.ndim < 2:
        points = points.reshape(-1, max(len(S), 1))[:, : len(S)]
    if points.shape[1] != len(S):
        raise ArgumentError(f"effect {S} needs {len(S)} coordinates per point")
    return points


def pointwise_ci(
    fit: FittedModel,
    eig: EffectEigensystem | None,
    S: Effect,
    points=None,
    alpha: float = 0.05,
    sigma2: float | None = None,
) -> IntervalBand:
    """Frequentist band ``f_S(x) +- z sqrt(sigma2/n * sum_v psi_v(x)^2/(1+lam/mu_v)^2)``.

    The intercept gets ``f0 +- z sigma/sqrt(n)``.
    """
    z = _z(alpha)
    S = _check_effect(fit, S)
    points = _as_points(S, points)
    sigma2 = fit.sigma2 if sigma2 is None else sigma2
    n = fit.n
    if not S:
        q = points.shape[0]
        hw = np.full(q, z * math.sqrt(sigma2 / n))
        return IntervalBand(S, points, np.full(q, fit.intercept), hw, "frequentist", alpha)
    if eig is None or eig.effect != S:
        raise ArgumentError(f"an eigensystem for effect {S} is required")
    est = eval_effect(fit, S, points)
    var = sigma2 / n * pointwise_variance_sum(eig, fit.lam, points)
    return IntervalBand(S, points, est, z * np.sqrt(var), "frequentist", alpha)


def bayesian_ci(
    fit: FittedModel,
    S: Effect,
    points=None,
    alpha: float = 0.05,
    sigma2: float | None = None,
) -> IntervalBand:
    """Gaussian-process posterior band for an effect.

    Posterior variance ``sigma2/(n lam) * (K_S(x,x) - k' (M^{-1} - M^{-1}11'M^{-1}/1'M^{-1}1) k)``
    with ``M = K_J + n lam I`` and ``k = K_S(X_S, x)``; the intercept uses
    ``sigma2 / (n lam 1'M^{-1}1)``.
    """
    z = _z(alpha)
    S = _check_effect(fit, S)
    points = _as_points(S, points)
    sigma2 = fit.sigma2 if sigma2 is None else sigma2
    n, nl = fit.n, fit.n * fit.lam
    a = fit.solve(np.ones(n))
    if not S:
        q = points.shape[0]
        hw = np.full(q, z * math.sqrt(sigma2 / (nl * a.sum())))
        return IntervalBand(S, points, np.full(q, fit.intercept), hw, "bayesian", alpha)
    k = cross_gram(fit.spec.m, fit.data.X[:, columns(S)], points)
    Mk = fit.solve(k)
    explained = np.einsum("ij,ij->j", k, Mk) - (a @ k) ** 2 / a.sum()
    prior = kernel_diag(fit.spec.m, points)
    bracket = prior - explained
    scale = np.maximum(prior, 1e-300)
    if np.any(bracket < -1e-10 * scale):
        raise NumericalError("posterior variance is materially negative")
    negative = bracket < 0
    bracket = np.where(negative, 0.0, bracket)
    var = sigma2 / nl * bracket
    est = eval_effect(fit, S, points)
    return IntervalBand(S, points, est, z * np.sqrt(var), "bayesian", alpha, int(negative.sum()))


@dataclass(frozen=True)
class TestReport:
    """Wald-type statistic for one effect or a group of effects."""

    __test__ = False  # not a pytest class

    effects: tuple[Effect, ...]
    statistic: float
    p_value: float
    reject: bool
    alpha: float
    norm: float
    centering: float
    s1: float
    s2: float
    sigma2: float
    lam: float
    n: int
    components: dict = field(default_factory=dict)

    @property
    def numerator(self) -> float:
        return self.n**2 * (self.norm - self.centering)

    def to_dict(self) -> dict:
        return {
            "effects": [list(S) for S in self.effects],
            "statistic": self.statistic,
            "p_value": self.p_value,
            "reject": self.reject,
            "alpha": self.alpha,
            "norm": self.norm,
            "centering": self.centering,
            "s1": self.s1,
            "s2": self.s2,
            "sigma2": self.sigma2,
            "lambda": self.lam,
            "n": self.n,
        }


def _wald(fit, effects, norm, s1, s2, alpha, sigma2) -> TestReport:
    z = _z(alpha)
    n = fit.n
    if s2 <= 0:
        raise DegenerateFitError("eigen-sum s2 is zero: degenerate spectrum")
    centering = sigma2 * s1 / n
    scale = math.sqrt(2.0 * sigma2**2 * n * (n - 1) * s2)
    if scale == 0:
        raise DegenerateFitError("zero error variance: the statistic is undefined")
    t = n**2 * (norm - centering) / scale
    return TestReport(
        effects=tuple(effects),
        statistic=float(t),
        p_value=two_sided_p(t),
        reject=bool(abs(t) >= z),
        alpha=alpha,
        norm=float(norm),
        centering=float(centering),
        s1=float(s1),
        s2=float(s2),
        sigma2=float(sigma2),
        lam=fit.lam,
        n=n,
    )


def wald_test(
    fit: FittedModel,
    eig: EffectEigensystem,
    S: Effect,
    alpha: float = 0.05,
    sigma2: float | None = None,
) -> TestReport:
    """Test ``H0: f_S = 0``; reject when ``|T| >= z_{1-alpha/2}``."""
    return wald_test_group(fit, {tuple(S): eig}, [S], alpha, sigma2)


def wald_test_group(
    fit: FittedModel,
    eigs: Mapping[Effect, EffectEigensystem],
    group: Iterable[Effect],
    alpha: float = 0.05,
    sigma2: float | None = None,
) -> TestReport:
    """Joint test that every effect in ``group`` is zero.

    Norms and both eigen-sums are added across the group before forming the
    statistic.
    """
    group = [_check_effect(fit, S) for S in group]
    if not group:
        raise ArgumentError("the group of effects is empty")
    if any(not S for S in group):
        raise SpecError("the intercept cannot be tested")
    if len(set(group)) != len(group):
        raise ArgumentError("repeated effect in group")
    sigma2 = fit.sigma2 if sigma2 is None else sigma2
    norm = s1 = s2 = 0.0
    parts = {}
    for S in group:
        eig = eigs.get(S)
        if eig is None or eig.effect != S:
            raise ArgumentError(f"an eigensystem for effect {S} is required")
        nrm = effect_norm_parts(fit, S)
        a, b = eigen_sums(eig, fit.lam)
        norm += nrm.total
        s1 += a
        s2 += b
        parts[S] = {"norm": nrm.total, "integral": nrm.integral, "penalty": nrm.penalty,
                    "quad_error": nrm.error, "s1": a, "s2": b,
                    "rank": eig.rank, "rank_tol": eig.rank_tol, "clamped": eig.n_clamped}
    report = _wald(fit, group, norm, s1, s2, alpha, sigma2)
    report.components.update(parts)
    return report
