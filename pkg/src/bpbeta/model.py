"""Regression data containers, design builders and scedastic functions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    ConstantColumn,
    MissingIntercept,
    NonFiniteValue,
    NonPositiveVariance,
    RankDeficient,
    ShapeMismatch,
    SingularMatrix,
    TooFewObservations,
)
from .numerics import cholesky_factor

_CONST_TOL = 1e-12


def _is_constant(col: np.ndarray) -> bool:
    return float(np.std(col, ddof=1)) < _CONST_TOL * (1.0 + abs(float(np.mean(col))))


def _full_rank(M: np.ndarray) -> bool:
    norms = np.sqrt(np.sum(M * M, axis=0))
    if np.any(norms == 0.0):
        return False
    Ms = M / norms
    try:
        cholesky_factor(Ms.T @ Ms)
    except SingularMatrix:
        return False
    return True


def with_intercept(Z: np.ndarray) -> np.ndarray:
    """``[1 | Z]``."""
    Z = np.asarray(Z, dtype=float)
    return np.column_stack([np.ones(Z.shape[0]), Z])


@dataclass(frozen=True)
class RegressionData:
    """Response ``y``, regression design ``X`` (intercept first) and
    heteroscedasticity design ``Z`` (no intercept).

    All invariants are checked on construction; arrays are stored as
    read-only copies.
    """

    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        X = np.array(self.X, dtype=float)
        Z = np.array(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if y.ndim != 1 or X.ndim != 2 or Z.ndim != 2:
            raise ShapeMismatch("y must be 1-D, X and Z 2-D")
        n = y.shape[0]
        if X.shape[0] != n or Z.shape[0] != n:
            raise ShapeMismatch(f"row counts differ: y={n}, X={X.shape[0]}, Z={Z.shape[0]}")
        if Z.shape[1] < 1:
            raise ShapeMismatch("Z needs at least one column")
        for name, arr in (("y", y), ("X", X), ("Z", Z)):
            if not np.all(np.isfinite(arr)):
                raise NonFiniteValue(f"{name} contains non-finite values")
        if not np.all(X[:, 0] == 1.0):
            raise MissingIntercept("first column of X must be all ones")
        p1, r = X.shape[1], Z.shape[1]
        if (r + 1) + p1 >= n:
            raise TooFewObservations(f"need (r+1)+(p+1) < n, got {(r + 1) + p1} >= {n}")
        for j in range(r):
            if _is_constant(Z[:, j]):
                raise ConstantColumn(f"column {j} of Z is constant")
        if not _full_rank(X):
            raise RankDeficient("X does not have full column rank")
        if not _full_rank(with_intercept(Z)):
            raise RankDeficient("[1 | Z] does not have full column rank")
        for arr in (y, X, Z):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        """Number of non-intercept regressors."""
        return self.X.shape[1] - 1

    @property
    def r(self) -> int:
        return self.Z.shape[1]

    @property
    def Zb(self) -> np.ndarray:
        return with_intercept(self.Z)

    def with_y(self, y) -> "RegressionData":
        return RegressionData(y, self.X, self.Z)

    def with_z(self, Z) -> "RegressionData":
        return RegressionData(self.y, self.X, Z)

    def drop_rows(self, rows_1based) -> "RegressionData":
        idx = sorted({int(i) for i in rows_1based})
        if idx and (idx[0] < 1 or idx[-1] > self.n):
            raise ShapeMismatch(f"drop rows must lie in 1..{self.n}")
        keep = np.setdiff1d(np.arange(self.n), np.array(idx, dtype=int) - 1)
        return RegressionData(self.y[keep], self.X[keep], self.Z[keep])

    @classmethod
    def from_regressors(cls, y, regressors, z=None, white: bool = False) -> "RegressionData":
        """Build from the non-intercept regressors; ``Z`` defaults to them."""
        R = np.asarray(regressors, dtype=float)
        if R.ndim == 1:
            R = R[:, None]
        X = with_intercept(R)
        if white:
            Z = build_white_design(X)
        elif z is None:
            Z = R
        else:
            Z = z
        return cls(y, X, Z)


def build_white_design(X) -> np.ndarray:
    """Linear terms followed by the half-vectorized products of the regressors.

    Column order for p regressors: x1..xp, then x1^2, x1 x2, ..., x1 xp,
    x2^2, ..., xp^2 (lower triangle, column-major).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 2:
        raise ShapeMismatch("X must have an intercept column plus at least one regressor")
    R = X[:, 1:]
    p = R.shape[1]
    cols = [R[:, j] for j in range(p)]
    cols += [R[:, j] * R[:, k] for j in range(p) for k in range(j, p)]
    Z = np.column_stack(cols)
    if not _full_rank(with_intercept(Z)):
        raise RankDeficient("White design is rank deficient (binary regressor or duplicated product)")
    return Z


def white_dimension(p: int) -> int:
    return p + p * (p + 1) // 2


class Scedastic(str, Enum):
    ADDITIVE = "additive"
    MULTIPLICATIVE = "multiplicative"


@dataclass(frozen=True)
class ScedasticKind:
    """``sigma_i^2 = sigma2 * h(z_i' alpha)`` with ``h(0) = 1``."""

    tag: Scedastic
    alpha: tuple[float, ...]
    sigma2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "tag", Scedastic(self.tag))
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        if not self.sigma2 > 0:
            raise ValueError("baseline variance must be positive")

    def h(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.tag is Scedastic.ADDITIVE:
            return 1.0 + eta
        return np.exp(eta)

    @property
    def hprime0(self) -> float:
        return 1.0


def scedastic_variance(kind: ScedasticKind, z) -> float | np.ndarray:
    """Evaluate ``sigma2 * h(z' alpha)`` for one row or for every row of a matrix."""
    z = np.asarray(z, dtype=float)
    a = np.asarray(kind.alpha, dtype=float)
    if z.shape[-1] != a.shape[0]:
        raise ShapeMismatch(f"z has {z.shape[-1]} entries, alpha has {a.shape[0]}")
    h = kind.h(z @ a)
    if np.any(h <= 0):
        raise NonPositiveVariance("additive scedastic function is non-positive (1 + z'alpha <= 0)")
    out = kind.sigma2 * h
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class DesignDiagnostics:
    lambda_min_X: float
    lambda_min_Zb: float
    leverage_ratio_X: float
    leverage_ratio_Zb: float
    extra: dict = field(default_factory=dict, compare=False)


def _leverage_ratio(M: np.ndarray) -> tuple[float, float]:
    n = M.shape[0]
    lam = float(np.linalg.eigvalsh(M.T @ M / n)[0])
    lam = max(lam, 0.0)
    rowmax = float(np.max(np.sqrt(np.sum(M * M, axis=1))))
    ratio = math.inf if lam == 0.0 else rowmax / (math.sqrt(n) * math.sqrt(lam))
    return lam, ratio


def check_design_conditions(data) -> DesignDiagnostics:
    """Finite-sample versions of the eigenvalue/leverage conditions.

    Accepts a ``RegressionData`` or anything with ``X`` and ``Z`` attributes.
    Nothing is raised; callers decide what counts as a warning.
    """
    lx, rx = _leverage_ratio(np.asarray(data.X, dtype=float))
    lz, rz = _leverage_ratio(with_intercept(data.Z))
    return DesignDiagnostics(lx, lz, rx, rz)
