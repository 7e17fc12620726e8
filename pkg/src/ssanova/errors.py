"""Exception hierarchy.

User-facing problems (bad arguments, bad files, bad model structure) derive
from :class:`InputError`; failures of the linear algebra derive from
:class:`NumericalError`. The CLI maps the two families to exit codes 2 and 3.
"""


class SsanovaError(Exception):
    """Base class for all package errors."""


class InputError(SsanovaError, ValueError):
    """Invalid user input of any kind."""


class ArgumentError(InputError):
    """A function argument is outside its allowed domain."""


class DataError(InputError):
    """Data values are unusable (non-finite, out of range)."""


class SchemaError(InputError):
    """A required column is missing from a table."""


class ParseError(InputError):
    """A table cell could not be parsed as a number."""


class DegenerateDataError(InputError):
    """Too few rows or a constant covariate column."""


class SpecError(InputError):
    """Model structure is inconsistent with the data or itself."""


class NumericalError(SsanovaError, ArithmeticError):
    """Factorization or eigendecomposition failure."""


class DegenerateFitError(NumericalError):
    """The fit is well defined numerically but statistically degenerate."""
