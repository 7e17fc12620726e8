"""Integration rules on the unit cube."""

from __future__ import annotations

from functools import lru_cache
from itertools import product

import numpy as np
from scipy.stats import qmc

GL_NODES = 24
QMC_LOG2 = 14
QMC_BATCHES = 8


@lru_cache(maxsize=None)
def gauss_legendre(k: int = GL_NODES) -> tuple[np.ndarray, np.ndarray]:
    """``k``-point Gauss-Legendre nodes and weights mapped to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(k)
    nodes, weights = 0.5 * (x + 1.0), 0.5 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def tensor_rule(dim: int, k: int = GL_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product Gauss-Legendre rule on ``[0, 1]^dim``; nodes are (k^dim, dim)."""
    x, w = gauss_legendre(k)
    nodes = np.array(list(product(x, repeat=dim)))
    weights = np.prod(np.array(list(product(w, repeat=dim))), axis=1)
    return nodes, weights


def uniform_grid(dim: int, k: int) -> np.ndarray:
    """``{(l - 1)/(k - 1)}^dim`` with the first axis varying slowest."""
    axis = np.linspace(0.0, 1.0, k)
    return np.array(list(product(axis, repeat=dim)))


def integrate(f, dim: int, k: int = GL_NODES, seed: int = 0) -> tuple[float, float]:
    """Integral of a vectorized ``f`` over ``[0, 1]^dim`` and an error estimate.

    Up to three dimensions a tensor Gauss-Legendre rule is used and the error
    estimate is 0. Beyond that, ``2^QMC_LOG2`` scrambled Sobol points are
    split into independent batches whose spread gives the standard error.
    """
    if dim <= 3:
        nodes, weights = tensor_rule(dim, k)
        return float(weights @ f(nodes)), 0.0
    per_batch = 2 ** (QMC_LOG2 - int(np.log2(QMC_BATCHES)))
    seeds = np.random.SeedSequence(seed).spawn(QMC_BATCHES)
    means = []
    for s in seeds:
        pts = qmc.Sobol(dim, scramble=True, seed=np.random.default_rng(s)).random(per_batch)
        means.append(float(np.mean(f(pts))))
    means = np.array(means)
    return float(means.mean()), float(means.std(ddof=1) / np.sqrt(len(means)))
