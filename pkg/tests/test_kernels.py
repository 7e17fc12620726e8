from fractions import Fraction
from itertools import product

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from ssanova.errors import ArgumentError, DataError
from ssanova.kernels import (
    BernoulliBasis,
    EffectKernel,
    PenaltyKernel,
    cross_gram,
    effect_kernel_eval,
    gram_matrix,
    kappa,
    kernel_diag,
    univariate_kernel,
)
from ssanova.quadrature import tensor_rule

_x = sympy.Symbol("x")


def exact_kappa(l, x):
    """Independent oracle: sympy's Bernoulli polynomial over l!, exact rational."""
    return sympy.Rational(sympy.bernoulli(l, _x).subs(_x, x)) / sympy.factorial(l)


def exact_kernel(m, x, xp):
    x, xp = sympy.Rational(x), sympy.Rational(xp)
    poly = sum(exact_kappa(l, x) * exact_kappa(l, xp) for l in range(1, m + 1))
    return poly + (-1) ** (m - 1) * exact_kappa(2 * m, abs(x - xp))


def test_kappa_values():
    assert kappa(1, 0.5) == 0.0
    assert kappa(2, 0.0) == pytest.approx(1 / 12, abs=1e-15)
    assert kappa(4, 0.0) == pytest.approx(-1 / 720, abs=1e-15)


def test_basis_low_orders_exact():
    b = BernoulliBasis(2)
    # B_1 = x - 1/2 and B_2/2 = (x^2 - x + 1/6)/2
    assert b.exact[1] == (Fraction(-1, 2), Fraction(1))
    assert b.exact[2] == (Fraction(1, 12), Fraction(-1, 2), Fraction(1, 2))


@pytest.mark.parametrize("m", [2, 3, 4, 5, 6])
def test_basis_matches_sympy(m):
    b = BernoulliBasis(m)
    for l in range(1, 2 * m + 1):
        poly = sympy.Poly(sympy.bernoulli(l, _x) / sympy.factorial(l), _x)
        expected = [sympy.Rational(c) for c in reversed(poly.all_coeffs())]
        assert [sympy.Rational(c.numerator, c.denominator) for c in b.exact[l]] == expected


@pytest.mark.parametrize("m", [2, 3, 6])
def test_kappa_centered(m):
    b = BernoulliBasis(m)
    for l in range(1, 2 * m + 1):
        value, _ = quad(lambda t: float(b(l, t)), 0, 1, epsabs=1e-14)
        assert abs(value) < 1e-10


@pytest.mark.parametrize("l, x", [(0, 0.5), (13, 0.5), (1, -0.1), (1, 1.5)])
def test_kappa_domain_errors(l, x):
    with pytest.raises(ArgumentError):
        kappa(l, x)


def test_univariate_diagonal_exact():
    assert exact_kernel(2, 0, 0) == sympy.Rational(31, 120)
    assert univariate_kernel(2, 0.0, 0.0) == pytest.approx(31 / 120, rel=1e-14)


@pytest.mark.parametrize("m", [2, 3, 4, 6])
@pytest.mark.parametrize("x, xp", [("3/10", "7/10"), ("0", "1"), ("1/8", "1/8"), ("9/10", "1/3")])
def test_univariate_matches_rational_oracle(m, x, xp):
    expected = float(exact_kernel(m, Fraction(x), Fraction(xp)))
    got = univariate_kernel(m, float(Fraction(x)), float(Fraction(xp)))
    assert got == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_univariate_symmetric():
    assert univariate_kernel(2, 0.3, 0.7) == univariate_kernel(2, 0.7, 0.3)


@pytest.mark.parametrize("xp", [0.0, 0.21, 0.5, 0.93])
def test_univariate_centered_in_each_argument(xp):
    value, _ = quad(lambda t: univariate_kernel(3, t, xp), 0, 1, points=[xp], epsabs=1e-14, limit=200)
    assert abs(value) < 1e-10


def test_univariate_domain_errors():
    with pytest.raises(ArgumentError):
        univariate_kernel(2, 1.2, 0.0)
    with pytest.raises(ArgumentError):
        univariate_kernel(1, 0.2, 0.0)
    with pytest.raises(ArgumentError):
        univariate_kernel(7, 0.2, 0.0)


def test_effect_kernel_eval():
    expected = float(exact_kernel(2, 0, 0)) ** 2
    assert effect_kernel_eval((1, 2), 2, (0, 0), (0, 0)) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.0667361, abs=1e-7)
    a, b = (0.2, 0.9, 0.4), (0.6, 0.1, 0.75)
    assert effect_kernel_eval((1, 2, 3), 3, a, b) == effect_kernel_eval((1, 2, 3), 3, b, a)
    assert effect_kernel_eval((2,), 3, [0.4], [0.8]) == univariate_kernel(3, 0.4, 0.8)


def test_effect_kernel_dimension_mismatch():
    with pytest.raises(ArgumentError):
        effect_kernel_eval((1, 2), 2, (0.1,), (0.1, 0.2))
    with pytest.raises(ArgumentError):
        effect_kernel_eval((), 2, (), ())


def test_gram_single_point():
    X = np.array([[0.25, 0.5]])
    G = gram_matrix(EffectKernel((1, 2), 2), X)
    assert G.shape == (1, 1)
    assert G[0, 0] == pytest.approx(effect_kernel_eval((1, 2), 2, X[0], X[0]))


def test_gram_identical_rows():
    X = np.array([[0.1, 0.3], [0.7, 0.2], [0.1, 0.3]])
    G = gram_matrix(PenaltyKernel(((1,), (2,), (1, 2)), 3), X)
    np.testing.assert_array_equal(G[0], G[2])
    np.testing.assert_array_equal(G[:, 0], G[:, 2])


def test_gram_matches_scalar_oracle():
    rng = np.random.default_rng(3)
    X = rng.random((6, 2))
    G = gram_matrix(EffectKernel((1,), 2), X)
    for i, j in product(range(6), repeat=2):
        expected = float(exact_kernel(2, sympy.Rational(X[i, 0]), sympy.Rational(X[j, 0])))
        assert abs(G[i, j] - expected) <= 1e-12


def test_gram_rejects_non_finite():
    X = np.array([[0.1, np.nan], [0.2, 0.3]])
    with pytest.raises(DataError):
        gram_matrix(EffectKernel((1,), 2), X)


def test_penalty_gram_is_exact_sum():
    rng = np.random.default_rng(11)
    X = rng.random((15, 3))
    effects = ((1,), (2,), (3,), (1, 2), (2, 3))
    total = np.zeros((15, 15))
    for S in effects:
        total += gram_matrix(EffectKernel(S, 3), X)
    np.testing.assert_array_equal(gram_matrix(PenaltyKernel(effects, 3), X), total)


def test_kernel_diag():
    rng = np.random.default_rng(5)
    Z = rng.random((9, 2))
    np.testing.assert_allclose(kernel_diag(3, Z), np.diag(cross_gram(3, Z, Z)), rtol=1e-13)


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    n=st.integers(1, 40),
    m=st.integers(2, 6),
    effect=st.sampled_from([(1,), (2,), (1, 2), (1, 3), (1, 2, 3)]),
)
def test_gram_symmetric_psd(seed, n, m, effect):
    X = np.random.default_rng(seed).random((n, 3))
    G = gram_matrix(EffectKernel(effect, m), X)
    np.testing.assert_array_equal(G, G.T)
    ev = np.linalg.eigvalsh(G)
    assert ev.min() >= -1e-8 * max(ev.max(), 1e-300)


@pytest.mark.parametrize("m", [2, 3])
def test_effect_orthogonality(m):
    """Sections of kernels from distinct effects are L2-orthogonal on [0,1]^3."""
    rng = np.random.default_rng(100 + m)
    nodes, weights = tensor_rule(3)
    effects = [(1,), (2,), (3,), (1, 2), (1, 3), (2, 3), (1, 2, 3)]
    for _ in range(10):
        i, j = rng.choice(len(effects), size=2, replace=False)
        S, T = effects[i], effects[j]
        a, b = rng.random(3), rng.random(3)
        f = cross_gram(m, nodes[:, [k - 1 for k in S]], a[None, [k - 1 for k in S]])[:, 0]
        g = cross_gram(m, nodes[:, [k - 1 for k in T]], b[None, [k - 1 for k in T]])[:, 0]
        assert abs(weights @ (f * g)) <= 1e-6
