"""Model structure and data ingestion."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .errors import DataError, DegenerateDataError, ParseError, SchemaError, SpecError
from .kernels import DEFAULT_ORDER, MAX_ORDER, MIN_ORDER, Effect

DEFAULT_GAMMA = 1.4
DEFAULT_ALPHA = 0.05
UNIFORMITY_KS_LIMIT = 0.2


def effect_key(S: Effect) -> tuple[int, Effect]:
    return (len(S), tuple(S))


def effect_label(S: Effect) -> str:
    """``()`` -> ``"0"``, ``(1, 2)`` -> ``"1,2"``."""
    return ",".join(map(str, S)) if S else "0"


def parse_effects(text: str) -> tuple[Effect, ...]:
    """Parse ``"1;2;1,2"`` into effects; the intercept is always added.

    Groups are separated by ``;`` and indices within a group by ``,``. The
    token ``0`` (or an empty group) names the intercept explicitly.
    """
    out: list[Effect] = [()]
    for group in text.split(";"):
        group = group.strip()
        if group in ("", "0"):
            continue
        try:
            idx = tuple(sorted(int(tok) for tok in group.split(",")))
        except ValueError as exc:
            raise SpecError(f"cannot parse effect {group!r}") from exc
        if len(set(idx)) != len(idx):
            raise SpecError(f"repeated covariate in effect {group!r}")
        if any(j < 1 for j in idx):
            raise SpecError(f"covariate indices are 1-based, got {group!r}")
        if idx not in out:
            out.append(idx)
    return tuple(sorted(out, key=effect_key))


def all_effects(d: int, max_order: int = 2) -> tuple[Effect, ...]:
    """Intercept plus every subset of ``{1..d}`` with at most ``max_order`` members."""
    out: list[Effect] = [()]
    for k in range(1, min(max_order, d) + 1):
        out.extend(combinations(range(1, d + 1), k))
    return tuple(out)


@dataclass(frozen=True)
class ModelSpec:
    """Structure of an SS-ANOVA model.

    ``lam`` fixes the tuning parameter; when it is ``None`` the fit selects
    it by GCV over ``lambda_grid`` (or a default grid scaled to ``n``).
    """

    d: int
    effects: tuple[Effect, ...]
    m: int = DEFAULT_ORDER
    lam: float | None = None
    lambda_grid: tuple[float, ...] | None = None
    gcv_gamma: float = DEFAULT_GAMMA
    alpha: float = DEFAULT_ALPHA

    @classmethod
    def full(cls, d: int, max_order: int = 2, **kw) -> "ModelSpec":
        return cls(d=d, effects=all_effects(d, max_order), **kw)

    @property
    def penalized(self) -> tuple[Effect, ...]:
        return tuple(S for S in self.effects if S)


@dataclass(frozen=True)
class Dataset:
    """Covariates scaled to the unit cube plus the response.

    ``scaling`` holds the raw ``(min, max)`` of every covariate column so
    that reports can be mapped back to original units.
    """

    X: np.ndarray
    y: np.ndarray
    scaling: tuple[tuple[float, float], ...]
    covariate_names: tuple[str, ...] = ()
    response_name: str = "y"

    def __post_init__(self) -> None:
        X = np.array(self.X, dtype=float, copy=True)
        y = np.array(self.y, dtype=float, copy=True).reshape(-1)
        if X.ndim != 2:
            raise DataError("X must be a 2-D array")
        if X.shape[0] != y.shape[0]:
            raise DataError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if X.shape[0] < 2:
            raise DegenerateDataError(f"need at least 2 observations, got {X.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("data contain non-finite values")
        if np.any((X < 0.0) | (X > 1.0)):
            raise DataError("scaled covariates must lie in [0, 1]")
        if len(self.scaling) != X.shape[1]:
            raise DataError("one scaling record per covariate column is required")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if not self.covariate_names:
            names = tuple(f"x{j + 1}" for j in range(X.shape[1]))
            object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @classmethod
    def from_raw(cls, raw: np.ndarray, y, **kw) -> "Dataset":
        raw = np.asarray(raw, dtype=float)
        scaling = column_ranges(raw)
        return cls(X=scale(raw, scaling), y=y, scaling=scaling, **kw)

    @classmethod
    def unit(cls, X, y, **kw) -> "Dataset":
        """Wrap covariates that already live on [0, 1] without rescaling."""
        X = np.asarray(X, dtype=float)
        return cls(X=X, y=y, scaling=tuple((0.0, 1.0) for _ in range(X.shape[1])), **kw)

    def unscale(self, Z: np.ndarray, cols: Sequence[int] | None = None) -> np.ndarray:
        cols = range(self.d) if cols is None else cols
        return unscale(Z, [self.scaling[j] for j in cols])


def column_ranges(raw: np.ndarray) -> tuple[tuple[float, float], ...]:
    out = []
    for j in range(raw.shape[1]):
        lo, hi = float(np.min(raw[:, j])), float(np.max(raw[:, j]))
        if not hi > lo:
            raise DegenerateDataError(f"covariate column {j + 1} is constant")
        out.append((lo, hi))
    return tuple(out)


def scale(raw: np.ndarray, scaling) -> np.ndarray:
    raw = np.asarray(raw, dtype=float)
    lo = np.array([s[0] for s in scaling])
    hi = np.array([s[1] for s in scaling])
    return np.clip((raw - lo) / (hi - lo), 0.0, 1.0)


def unscale(Z: np.ndarray, scaling) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    lo = np.array([s[0] for s in scaling])
    hi = np.array([s[1] for s in scaling])
    return lo + Z * (hi - lo)


def _parse_cell(text: str, row: int, column: str) -> float:
    text = text.strip()
    if text == "":
        raise ParseError(f"row {row}: missing value in column {column!r}")
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"row {row}: non-numeric value {text!r} in column {column!r}") from None
    if not math.isfinite(value):
        raise ParseError(f"row {row}: non-finite value {text!r} in column {column!r}")
    return value


def load_csv(path, response_column: str, covariate_columns: Iterable[str]) -> Dataset:
    """Read a header-row CSV and min-max scale the named covariates.

    Row numbers in error messages count data rows from 1.
    """
    covariate_columns = list(covariate_columns)
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        for name in [response_column, *covariate_columns]:
            if name not in header:
                raise SchemaError(f"column {name!r} not found in {path}")
        iy = header.index(response_column)
        ix = [header.index(c) for c in covariate_columns]
        raw, y = [], []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"row {row_no}: expected {len(header)} fields, got {len(row)}")
            y.append(_parse_cell(row[iy], row_no, response_column))
            raw.append([_parse_cell(row[i], row_no, c) for i, c in zip(ix, covariate_columns)])
    if len(y) < 2:
        raise DegenerateDataError(f"{path}: need at least 2 data rows, got {len(y)}")
    raw_arr = np.array(raw, dtype=float).reshape(len(y), len(ix))
    data = Dataset.from_raw(
        raw_arr, np.array(y), covariate_names=tuple(covariate_columns), response_name=response_column
    )
    check_uniformity(data)
    return data


def check_uniformity(data: Dataset, limit: float = UNIFORMITY_KS_LIMIT) -> list[int]:
    """Warn about scaled columns whose empirical CDF is far from uniform.

    Returns the 0-based indices of the offending columns.
    """
    flagged = []
    for j in range(data.d):
        D = stats.kstest(data.X[:, j], "uniform").statistic
        if D > limit:
            flagged.append(j)
            warnings.warn(
                f"covariate {data.covariate_names[j]!r} is far from uniform after scaling "
                f"(KS distance {D:.3f})",
                stacklevel=2,
            )
    return flagged


def validate_spec(spec: ModelSpec, data: Dataset | None = None) -> ModelSpec:
    """Check a spec against itself and the data and return it normalized.

    Effects come back sorted by ``(|S|, S)`` with indices sorted within
    each effect. Applying the function twice gives the same spec.
    """
    d = spec.d if data is None else data.d
    if data is not None and spec.d != data.d:
        raise SpecError(f"spec has d={spec.d} but data have {data.d} covariates")
    if not MIN_ORDER <= spec.m <= MAX_ORDER:
        raise SpecError(f"order m={spec.m} outside supported range {MIN_ORDER}..{MAX_ORDER}")
    effects = [tuple(sorted(S)) for S in spec.effects]
    if () not in effects:
        raise SpecError("the intercept (empty effect) must be in the model")
    if len(set(effects)) != len(effects):
        raise SpecError("duplicate effects in the model")
    for S in effects:
        if len(set(S)) != len(S):
            raise SpecError(f"repeated covariate in effect {S}")
        if any(j < 1 or j > d for j in S):
            raise SpecError(f"effect {S} references a covariate outside 1..{d}")
    if not spec.gcv_gamma > 1.0:
        raise SpecError(f"gcv_gamma must exceed 1, got {spec.gcv_gamma}")
    if not 0.0 < spec.alpha < 1.0:
        raise SpecError(f"alpha must lie in (0, 1), got {spec.alpha}")
    if spec.lam is not None and not spec.lam > 0:
        raise SpecError(f"lambda must be positive, got {spec.lam}")
    grid = spec.lambda_grid
    if grid is not None:
        grid = tuple(float(g) for g in grid)
        if not grid or any(not g > 0 for g in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise SpecError("lambda grid must be nonempty, positive and strictly increasing")
    return replace(spec, d=d, effects=tuple(sorted(effects, key=effect_key)), lambda_grid=grid)
