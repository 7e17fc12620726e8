"""Empirical eigensystems of effect kernels.

``(1/n) K_S = sum_v mu_v (psi_v / sqrt(n)) (psi_v / sqrt(n))'`` with the
eigenvector table scaled so that ``(1/n) Psi' Psi = I``. Off the design,
eigenfunction values come from the Nystrom relation
``psi_v(x) = sum_i psi_v(X_i) K_S(X_i, x) / (n mu_v)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import ArgumentError, NumericalError, SpecError
from .kernels import Effect, columns, cross_gram

RANK_TOL = 1e-12


@dataclass(frozen=True)
class EffectEigensystem:
    """Eigenpairs of ``(1/n) K_S``, eigenvalues nonincreasing.

    Negative round-off eigenvalues are clamped to zero. ``rank`` counts the
    eigenvalues above ``rank_tol * values[0]``; only those enter eigen-sums.
    """

    effect: Effect
    m: int
    values: np.ndarray
    vectors: np.ndarray = field(repr=False)
    design: np.ndarray = field(repr=False)
    rank: int
    rank_tol: float = RANK_TOL
    n_clamped: int = 0

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def active(self) -> np.ndarray:
        return self.values[: self.rank]

    def projections(self, points: np.ndarray) -> np.ndarray:
        """``Psi_r' k_S(x) / n`` for each point; shape (q, r).

        Dividing column ``v`` by ``mu_v`` gives the Nystrom eigenfunction value.
        """
        points = np.asarray(points, dtype=float).reshape(-1, len(self.effect))
        k = cross_gram(self.m, self.design, points)
        return (self.vectors[:, : self.rank].T @ k).T / self.n


def eigensystem_from_gram(
    S: Effect, m: int, design: np.ndarray, K: np.ndarray, rank_tol: float = RANK_TOL
) -> EffectEigensystem:
    n = K.shape[0]
    try:
        mu, V = sla.eigh(K / n, check_finite=False)
    except sla.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed for effect {S}: {exc}") from exc
    mu, V = mu[::-1], V[:, ::-1]
    n_clamped = int(np.sum(mu < 0))
    mu = np.clip(mu, 0.0, None)
    rank = int(np.sum(mu > rank_tol * mu[0])) if mu[0] > 0 else 0
    vectors = np.ascontiguousarray(V * np.sqrt(n))
    for arr in (mu, vectors):
        arr.setflags(write=False)
    return EffectEigensystem(
        effect=tuple(S),
        m=m,
        values=mu,
        vectors=vectors,
        design=np.asarray(design, dtype=float),
        rank=rank,
        rank_tol=rank_tol,
        n_clamped=n_clamped,
    )


def effect_eigensystem(fit, S: Effect, rank_tol: float = RANK_TOL) -> EffectEigensystem:
    """Eigensystem of ``(1/n) K_S`` for a penalized effect of a fitted model."""
    S = tuple(S)
    if not S:
        raise SpecError("the intercept has no kernel eigensystem")
    if S not in fit.grams:
        raise SpecError(f"effect {S} is not in the model")
    design = fit.data.X[:, columns(S)]
    return eigensystem_from_gram(S, fit.spec.m, design, fit.grams[S], rank_tol)


def eigen_sums(eig: EffectEigensystem, lam: float) -> tuple[float, float]:
    """``(sum_v 1/(1 + lam/mu_v), sum_v 1/(1 + lam/mu_v)^2)`` over the active rank."""
    if not lam > 0:
        raise ArgumentError(f"lambda must be positive, got {lam}")
    mu = eig.active
    w = mu / (mu + lam)
    return float(np.sum(w)), float(np.sum(w * w))


def nystrom(eig: EffectEigensystem, points) -> np.ndarray:
    """Out-of-sample eigenfunction values ``psi_v(x)`` for ``v <= rank``; shape (q, r)."""
    return eig.projections(points) / eig.active


def pointwise_variance_sum(eig: EffectEigensystem, lam: float, points) -> np.ndarray:
    """``sum_v psi_v(x)^2 / (1 + lam/mu_v)^2`` at each point.

    Evaluated as ``sum_v (Psi' k(x) / n)_v^2 / (mu_v + lam)^2``, which avoids
    dividing by tiny eigenvalues.
    """
    if not lam > 0:
        raise ArgumentError(f"lambda must be positive, got {lam}")
    proj = eig.projections(points)
    return np.sum((proj / (eig.active + lam)) ** 2, axis=1)
