"""Penalized least-squares fit of an SS-ANOVA model.

With ``M = K_J + n*lam*I`` the minimizer of

    ||y - 1 f0 - K_J c||^2 / n + lam * c' K_J c

is ``f0 = 1'M^{-1}y / 1'M^{-1}1`` and ``c = M^{-1}(y - 1 f0)``. The smoother
matrix ``A(lam)`` maps ``y`` to fitted values; GCV with an inflation factor
``gamma`` picks ``lam`` from a grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .design import Dataset, ModelSpec, validate_spec
from .errors import ArgumentError, DegenerateFitError, NumericalError, SpecError
from .kernels import Effect, EffectKernel, columns, cross_gram, sum_grams

GRID_SIZE = 40
GRID_DECADES = (-8.0, 2.0)


def effect_grams(spec: ModelSpec, data: Dataset) -> dict[Effect, np.ndarray]:
    """Gram matrix of every penalized effect on the design."""
    return {S: EffectKernel(S, spec.m).gram(data.X) for S in spec.penalized}


def penalty_gram(grams: dict[Effect, np.ndarray], n: int) -> np.ndarray:
    return sum_grams(grams.values(), n)


def default_grid(n: int, m: int, size: int = GRID_SIZE) -> np.ndarray:
    """Log-spaced grid over ``[1e-8, 1e2] * n^(-2m/(2m+1))``."""
    anchor = float(n) ** (-2.0 * m / (2.0 * m + 1.0))
    return np.logspace(*GRID_DECADES, size) * anchor


class _SymmetricSolver:
    """Solves with ``M``: Cholesky, or symmetric-indefinite LDL' if that fails."""

    def __init__(self, M: np.ndarray):
        self.M = M
        try:
            self.L = sla.cholesky(M, lower=True, check_finite=False)
            self.method = "cholesky"
        except sla.LinAlgError:
            # Bunch-Kaufman via LAPACK sytrf inside solve(assume_a="sym")
            self.L = None
            self.method = "ldl"

    def __call__(self, B: np.ndarray) -> np.ndarray:
        if self.L is not None:
            return sla.cho_solve((self.L, True), B, check_finite=False)
        try:
            return sla.solve(self.M, B, assume_a="sym")
        except (sla.LinAlgError, ValueError) as exc:
            raise NumericalError(f"symmetric solve failed: {exc}") from exc

    def inverse_trace(self) -> float:
        if self.L is not None:
            Linv = sla.solve_triangular(self.L, np.eye(len(self.M)), lower=True, check_finite=False)
            return float(np.einsum("ij,ij->", Linv, Linv))
        return float(np.trace(self(np.eye(len(self.M)))))


@dataclass(frozen=True)
class GcvTrace:
    grid: np.ndarray
    scores: np.ndarray
    argmin: int
    gamma: float
    skipped: tuple[int, ...] = ()

    @property
    def lam(self) -> float:
        return float(self.grid[self.argmin])

    def to_dict(self) -> dict:
        return {
            "grid": [float(g) for g in self.grid],
            "scores": [float(s) if np.isfinite(s) else None for s in self.scores],
            "argmin": int(self.argmin),
            "gamma": float(self.gamma),
            "skipped": list(self.skipped),
        }


@dataclass(frozen=True)
class FittedModel:
    """Result of the closed-form fit at one tuning parameter.

    ``grams`` keeps the per-effect design Gram matrices; ``penalty`` is
    their sum ``K_J``. ``trace`` is ``tr A(lam)``.
    """

    spec: ModelSpec
    data: Dataset
    lam: float
    intercept: float
    coef: np.ndarray
    grams: dict[Effect, np.ndarray] = field(repr=False)
    penalty: np.ndarray = field(repr=False)
    trace: float = 0.0
    gcv: GcvTrace | None = None
    solver: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def fitted(self) -> np.ndarray:
        return self.intercept + self.penalty @ self.coef

    @property
    def residuals(self) -> np.ndarray:
        return self.data.y - self.fitted

    @property
    def sigma2(self) -> float:
        return sigma2_hat(self)

    def solve(self, B: np.ndarray) -> np.ndarray:
        """Apply ``(K_J + n*lam*I)^{-1}`` using the stored factorization."""
        return self.solver(B)


def _prepare(spec: ModelSpec, data: Dataset, grams):
    spec = validate_spec(spec, data)
    if grams is None:
        grams = effect_grams(spec, data)
    elif set(grams) != set(spec.penalized):
        raise SpecError("precomputed Gram matrices do not match the model effects")
    return spec, grams


def fit_at_lambda(
    spec: ModelSpec,
    data: Dataset,
    lam: float,
    *,
    grams: dict[Effect, np.ndarray] | None = None,
    penalty: np.ndarray | None = None,
) -> FittedModel:
    """Closed-form fit at a fixed ``lam``; no explicit inverse is formed."""
    if not np.isfinite(lam) or lam <= 0:
        raise NumericalError(f"lambda must be positive for a positive-definite system, got {lam}")
    spec, grams = _prepare(spec, data, grams)
    n = data.n
    K = penalty_gram(grams, n) if penalty is None else penalty
    nl = n * lam
    M = K + nl * np.eye(n)
    solver = _SymmetricSolver(M)
    y = data.y
    rhs = solver(np.column_stack([np.ones(n), y]))
    a, b = rhs[:, 0], rhs[:, 1]
    # n - 1'K M^{-1} 1 = n*lam * 1'M^{-1}1 because K M^{-1} = I - n*lam*M^{-1}
    denom = nl * a.sum()
    if not denom > 1e-10 * n:
        raise DegenerateFitError(f"intercept denominator {denom:.3e} is degenerate")
    if np.ptp(y) == 0:
        # exact minimizer; the generic formula leaves ulp-sized coefficients
        f0, c = float(y[0]), np.zeros(n)
    else:
        f0 = float(b.sum() / a.sum())
        c = b - f0 * a
    trace = n - nl * solver.inverse_trace() + nl * float(a @ a) / a.sum()
    return FittedModel(
        spec=spec,
        data=data,
        lam=float(lam),
        intercept=f0,
        coef=c,
        grams=grams,
        penalty=K,
        trace=float(trace),
        solver=solver,
    )


def smoother_matrix(
    spec: ModelSpec, data: Dataset, lam: float, *, grams: dict[Effect, np.ndarray] | None = None
) -> np.ndarray:
    """``A(lam)``: ridge part ``K_J M^{-1}`` plus the rank-one intercept part."""
    fit = fit_at_lambda(spec, data, lam, grams=grams)
    return smoother_from_fit(fit)


def smoother_from_fit(fit: FittedModel) -> np.ndarray:
    n, nl = fit.n, fit.n * fit.lam
    Minv = fit.solve(np.eye(n))
    Minv = 0.5 * (Minv + Minv.T)
    u = nl * Minv.sum(axis=1)
    A = np.eye(n) - nl * Minv + np.outer(u, u) / (nl * Minv.sum())
    return 0.5 * (A + A.T)


@dataclass(frozen=True)
class PenaltyEigen:
    """Eigendecomposition of ``K_J`` shared by every grid point of a GCV search."""

    values: np.ndarray
    vectors: np.ndarray

    @classmethod
    def of(cls, K: np.ndarray) -> "PenaltyEigen":
        try:
            e, U = sla.eigh(K, check_finite=False)
        except sla.LinAlgError as exc:
            raise NumericalError(f"eigendecomposition of K_J failed: {exc}") from exc
        return cls(np.clip(e, 0.0, None), U)


def gcv_scores(
    eig: PenaltyEigen, y: np.ndarray, grid, gamma: float
) -> tuple[np.ndarray, np.ndarray]:
    """GCV score and ``tr A`` at each grid point from one eigendecomposition.

    In the eigenbasis ``A = U (diag(h) + v v'/D) U'`` with
    ``g = n lam / (e + n lam)``, ``h = 1 - g``, ``v = g * U'1`` and
    ``D = sum(g * (U'1)^2)``.
    """
    n = len(y)
    w = eig.vectors.T @ np.ones(n)
    z = eig.vectors.T @ y
    scores = np.empty(len(grid))
    traces = np.empty(len(grid))
    for k, lam in enumerate(grid):
        nl = n * lam
        g = nl / (eig.values + nl)
        gw = g * w
        D = float(gw @ w)
        resid = g * z - gw * (float(gw @ z) / D)
        tr = float(np.sum(1.0 - g) + gw @ gw / D)
        traces[k] = tr
        free = n - gamma * tr
        if free <= 0:
            scores[k] = np.inf
        else:
            scores[k] = (float(resid @ resid) / n) / (free / n) ** 2
    return scores, traces


def gcv_select(
    spec: ModelSpec,
    data: Dataset,
    grid=None,
    *,
    grams: dict[Effect, np.ndarray] | None = None,
    eig: PenaltyEigen | None = None,
) -> tuple[float, GcvTrace]:
    """Grid search for the GCV minimizer; ties go to the larger ``lam``."""
    spec, grams = _prepare(spec, data, grams)
    if grid is None:
        grid = spec.lambda_grid if spec.lambda_grid is not None else default_grid(data.n, spec.m)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ArgumentError("lambda grid must be nonempty, positive and strictly increasing")
    if eig is None:
        eig = PenaltyEigen.of(penalty_gram(grams, data.n))
    scores, _ = gcv_scores(eig, data.y, grid, spec.gcv_gamma)
    skipped = tuple(int(k) for k in np.flatnonzero(~np.isfinite(scores)))
    if len(skipped) == len(grid):
        raise DegenerateFitError("GCV denominator is nonpositive at every grid point")
    best = np.min(scores)
    # round-off floor so exactly-fitting responses (all scores ~0) tie
    tol = 1e-10 * best + 1e-14 * float(data.y @ data.y) / data.n
    argmin = int(np.flatnonzero(scores <= best + tol)[-1])
    trace = GcvTrace(grid=grid, scores=scores, argmin=argmin, gamma=spec.gcv_gamma, skipped=skipped)
    return trace.lam, trace


def fit(
    spec: ModelSpec,
    data: Dataset,
    *,
    grams: dict[Effect, np.ndarray] | None = None,
    eig: PenaltyEigen | None = None,
) -> FittedModel:
    """Fit at ``spec.lam`` or, when it is unset, at the GCV choice."""
    spec, grams = _prepare(spec, data, grams)
    K = penalty_gram(grams, data.n)
    if spec.lam is not None:
        return fit_at_lambda(spec, data, spec.lam, grams=grams, penalty=K)
    if eig is None:
        eig = PenaltyEigen.of(K)
    lam, trace = gcv_select(spec, data, grams=grams, eig=eig)
    return replace(fit_at_lambda(spec, data, lam, grams=grams, penalty=K), gcv=trace)


def sigma2_hat(fit: FittedModel) -> float:
    """``y'(I - A)^2 y / tr(I - A)``; ``A`` is symmetric so the numerator is ``||r||^2``."""
    free = fit.n - fit.trace
    if free <= 1e-10:
        raise DegenerateFitError(f"tr(I - A) = {free:.3e}: no residual degrees of freedom")
    r = fit.residuals
    return max(float(r @ r) / free, 0.0)


def eval_effect(fit: FittedModel, S: Effect, points) -> np.ndarray:
    """``f_S(x) = sum_i c_i K_S(X_iS, x)`` at the rows of ``points`` (q x |S|).

    For the intercept the constant estimate is repeated once per row.
    """
    S = tuple(S)
    if S not in fit.spec.effects:
        raise SpecError(f"effect {S} is not in the model")
    points = np.asarray(points, dtype=float)
    if not S:
        q = 1 if points.ndim < 2 else points.shape[0]
        return np.full(q, fit.intercept)
    points = points.reshape(-1, len(S)) if points.ndim < 2 else points
    if points.shape[1] != len(S):
        raise ArgumentError(f"effect {S} needs {len(S)} coordinates per point")
    design = fit.data.X[:, columns(S)]
    return cross_gram(fit.spec.m, points, design) @ fit.coef
