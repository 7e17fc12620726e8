"""Smoothing spline ANOVA with effect-wise intervals and Wald-type tests."""

from .design import Dataset, ModelSpec, load_csv, parse_effects, validate_spec
from .errors import InputError, NumericalError, SsanovaError
from .inference import bayesian_ci, effect_sq_norm, pointwise_ci, wald_test, wald_test_group
from .solver import FittedModel, eval_effect, fit, fit_at_lambda, sigma2_hat
from .spectral import effect_eigensystem, eigen_sums

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "FittedModel",
    "InputError",
    "ModelSpec",
    "NumericalError",
    "SsanovaError",
    "bayesian_ci",
    "effect_eigensystem",
    "effect_sq_norm",
    "eigen_sums",
    "eval_effect",
    "fit",
    "fit_at_lambda",
    "load_csv",
    "parse_effects",
    "pointwise_ci",
    "sigma2_hat",
    "validate_spec",
    "wald_test",
    "wald_test_group",
]
