"""Reproducing kernels for tensor-product Sobolev spaces on the unit cube.

The univariate building block is the centered Sobolev kernel of order ``m``

    K1(x, x') = sum_{l=1}^{m} k_l(x) k_l(x') + (-1)^(m-1) k_{2m}(|x - x'|),

where ``k_l = B_l / l!`` is the scaled Bernoulli polynomial. An effect
``S`` (a tuple of 1-based covariate indices) carries the product kernel
``K_S = prod_{j in S} K1(x_j, x'_j)`` and the penalty kernel ``K_J`` is the
sum of ``K_S`` over all non-intercept effects.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial

import numpy as np

from .errors import ArgumentError, DataError

MIN_ORDER = 2
MAX_ORDER = 6
DEFAULT_ORDER = 3

Effect = tuple[int, ...]


@lru_cache(maxsize=None)
def bernoulli_numbers(n: int) -> tuple[Fraction, ...]:
    """Bernoulli numbers ``B_0..B_n`` with the ``B_1 = -1/2`` convention."""
    b = [Fraction(1)]
    for k in range(1, n + 1):
        b.append(-sum(comb(k + 1, j) * b[j] for j in range(k)) / (k + 1))
    return tuple(b)


@dataclass(frozen=True)
class BernoulliBasis:
    """Exact coefficient table of the scaled Bernoulli polynomials of order <= 2m.

    ``exact[l]`` holds the ascending-power coefficients of ``B_l(x) / l!`` as
    fractions; ``coef[l]`` is the same row converted to floats once.
    """

    m: int
    exact: tuple[tuple[Fraction, ...], ...] = field(init=False, repr=False)
    coef: tuple[np.ndarray, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        _check_order(self.m)
        top = 2 * self.m
        bn = bernoulli_numbers(top)
        exact = [(Fraction(1),)]
        for l in range(1, top + 1):
            # B_l(x) = sum_k C(l, k) B_k x^(l-k); stored by ascending power of x
            row = [Fraction(0)] * (l + 1)
            for k in range(l + 1):
                row[l - k] = comb(l, k) * bn[k] / factorial(l)
            exact.append(tuple(row))
        object.__setattr__(self, "exact", tuple(exact))
        floats = []
        for row in exact:
            arr = np.array([float(c) for c in row])
            arr.setflags(write=False)
            floats.append(arr)
        object.__setattr__(self, "coef", tuple(floats))

    def __call__(self, l: int, x):
        """Evaluate ``k_l`` by Horner's scheme; ``x`` may be an array."""
        if not 1 <= l <= 2 * self.m:
            raise ArgumentError(f"order l={l} outside 1..{2 * self.m}")
        return _horner(self.coef[l], np.asarray(x, dtype=float))


@lru_cache(maxsize=None)
def basis(m: int) -> BernoulliBasis:
    return BernoulliBasis(m)


def _horner(coef: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.full_like(x, coef[-1])
    for c in coef[-2::-1]:
        out *= x
        out += c
    return out


def _check_order(m: int) -> None:
    if not isinstance(m, (int, np.integer)) or not MIN_ORDER <= m <= MAX_ORDER:
        raise ArgumentError(f"order m must be an integer in {MIN_ORDER}..{MAX_ORDER}, got {m!r}")


def _check_unit(x: np.ndarray, what: str = "x") -> None:
    if not np.all(np.isfinite(x)):
        raise DataError(f"{what} contains non-finite values")
    if np.any((x < 0.0) | (x > 1.0)):
        raise ArgumentError(f"{what} must lie in [0, 1]")


def kappa(l: int, x: float, m: int = MAX_ORDER) -> float:
    """Scaled Bernoulli polynomial ``B_l(x) / l!`` at a point of [0, 1]."""
    x = float(x)
    _check_unit(np.asarray(x))
    return float(basis(m)(l, x))


def _univariate_block(m: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kernel matrix ``K1(a_i, b_j)`` for 1-D arrays, no domain checks."""
    bas = basis(m)
    pa = np.stack([_horner(bas.coef[l], a) for l in range(1, m + 1)], axis=1)
    pb = np.stack([_horner(bas.coef[l], b) for l in range(1, m + 1)], axis=1)
    out = pa @ pb.T
    tail = _horner(bas.coef[2 * m], np.abs(a[:, None] - b[None, :]))
    if m % 2 == 0:
        out -= tail
    else:
        out += tail
    return out


def univariate_kernel(m: int, x: float, xp: float) -> float:
    """Centered Sobolev kernel ``K1(x, x')`` of order ``m``."""
    _check_order(m)
    a = np.array([float(x)])
    b = np.array([float(xp)])
    _check_unit(a)
    _check_unit(b)
    return float(_univariate_block(m, a, b)[0, 0])


def effect_kernel_eval(S: Effect, m: int, a, b) -> float:
    """Product kernel ``K_S(a, b)`` with ``a, b`` already restricted to ``S``."""
    _check_order(m)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if len(S) == 0:
        raise ArgumentError("effect must be nonempty")
    if a.shape != (len(S),) or b.shape != (len(S),):
        raise ArgumentError(f"points must have {len(S)} coordinates, got {a.shape} and {b.shape}")
    _check_unit(a, "a")
    _check_unit(b, "b")
    return float(cross_gram(m, a[None, :], b[None, :])[0, 0])


def cross_gram(m: int, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``K_S(A_i, B_j)`` for point sets already restricted to the effect's axes.

    ``A`` is (p, s) and ``B`` is (q, s); the product runs over the ``s`` columns.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ArgumentError(f"incompatible point arrays {A.shape} and {B.shape}")
    if A.shape[1] == 0:
        raise ArgumentError("effect must be nonempty")
    out = _univariate_block(m, A[:, 0], B[:, 0])
    for j in range(1, A.shape[1]):
        out *= _univariate_block(m, A[:, j], B[:, j])
    return out


def kernel_diag(m: int, Z: np.ndarray) -> np.ndarray:
    """``K_S(z, z)`` for each row of a restricted point set ``Z`` (q, s)."""
    bas = basis(m)
    Z = np.asarray(Z, dtype=float)
    tail = bas.coef[2 * m][0] * (1.0 if m % 2 else -1.0)
    out = np.ones(Z.shape[0])
    for j in range(Z.shape[1]):
        poly = sum(_horner(bas.coef[l], Z[:, j]) ** 2 for l in range(1, m + 1))
        out *= poly + tail
    return out


def columns(S: Effect) -> list[int]:
    """0-based design columns for a 1-based effect."""
    return [j - 1 for j in S]


@dataclass(frozen=True)
class EffectKernel:
    """Kernel ``K_S`` of a single nonempty effect."""

    effect: Effect
    m: int = DEFAULT_ORDER

    def __post_init__(self) -> None:
        _check_order(self.m)
        if len(self.effect) == 0:
            raise ArgumentError("effect kernel needs a nonempty index set")

    def __call__(self, a, b) -> float:
        return effect_kernel_eval(self.effect, self.m, a, b)

    def restrict(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or max(self.effect) > points.shape[1]:
            raise ArgumentError(f"effect {self.effect} needs at least {max(self.effect)} columns")
        return points[:, columns(self.effect)]

    def gram(self, points: np.ndarray) -> np.ndarray:
        Z = self.restrict(points)
        return _symmetrize(cross_gram(self.m, Z, Z))


@dataclass(frozen=True)
class PenaltyKernel:
    """``K_J``: the sum of effect kernels over the penalized effects."""

    effects: tuple[Effect, ...]
    m: int = DEFAULT_ORDER

    def __post_init__(self) -> None:
        _check_order(self.m)
        if any(len(S) == 0 for S in self.effects):
            raise ArgumentError("the penalty kernel excludes the intercept")

    def components(self) -> list[EffectKernel]:
        return [EffectKernel(S, self.m) for S in self.effects]

    def __call__(self, a, b) -> float:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return sum(k(a[columns(k.effect)], b[columns(k.effect)]) for k in self.components())

    def gram(self, points: np.ndarray) -> np.ndarray:
        return sum_grams([k.gram(points) for k in self.components()], len(points))


def sum_grams(grams, n: int) -> np.ndarray:
    total = np.zeros((n, n))
    for G in grams:
        total += G
    return total


def _symmetrize(G: np.ndarray) -> np.ndarray:
    # mirror the upper triangle so (i, j) and (j, i) share one computed value
    upper = np.triu(G)
    return upper + np.triu(G, 1).T


def gram_matrix(kernel: EffectKernel | PenaltyKernel, points) -> np.ndarray:
    """Dense symmetric Gram matrix of ``kernel`` on the rows of ``points``."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ArgumentError("points must be a 2-D array")
    if not np.all(np.isfinite(points)):
        raise DataError("points contain non-finite coordinates")
    return kernel.gram(points)
