"""Breusch-Pagan and Koenker beta-score statistics and beta-grid scans."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import BpBetaError, ConfigError, NotConverged, ShapeMismatch, ZeroVariance
from .estimation import DpdFit, FitOptions, fit_null_dpd
from .model import RegressionData, build_white_design
from .numerics import chi_square_isf, chi_square_sf, projection_quadratic_form

DEFAULT_GRID = tuple(round(0.05 * k, 2) for k in range(16))
DEFAULT_ALPHA = 0.05


class TestKind(str, Enum):
    BP = "bp"
    KOENKER = "koenker"

    __test__ = False  # not a pytest class


@dataclass(frozen=True)
class TestResult:
    kind: TestKind
    beta_tuning: float
    statistic: float
    df: int
    p_value: float
    ess: float
    tss: float
    denominator: float | None = None

    __test__ = False

    def as_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "beta": self.beta_tuning,
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            "ess": self.ess,
            "tss": self.tss,
            "denominator": self.denominator,
        }


def bp_denominator(beta_tuning: float) -> float:
    """``d(beta) = 2(2b^2+1)/(2b+1)^(5/2) - b^2/(b+1)^3``, equal to 2 at ``b = 0``."""
    b = float(beta_tuning)
    if b < 0:
        raise ValueError("beta_tuning must be nonnegative")
    return 2.0 * (2.0 * b * b + 1.0) / (2.0 * b + 1.0) ** 2.5 - b * b / (b + 1.0) ** 3


def projection_design(Z) -> np.ndarray:
    """``[1 | Z]`` with the columns of ``Z`` centred and scaled.

    Same column span as the raw design, far better conditioned when columns
    are on wildly different scales (lot sizes squared, say).
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    mu = Z.mean(axis=0)
    sd = Z.std(axis=0)
    sd[sd == 0.0] = 1.0
    return np.column_stack([np.ones(Z.shape[0]), (Z - mu) / sd])


def _check_fit(fit: DpdFit, Z) -> tuple[np.ndarray, int]:
    if not fit.converged:
        raise NotConverged(f"fit at beta={fit.beta_tuning:g} did not converge")
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.shape[0] != fit.n:
        raise ShapeMismatch(f"Z has {Z.shape[0]} rows, fit has {fit.n}")
    # sum(v) = 0 makes the uncentred projection equal the centred ESS
    if abs(float(np.sum(fit.v))) > 1e-8 * max(1.0, fit.n / 1000.0):
        raise NotConverged("sum of the v-vector is not zero")
    return Z, Z.shape[1]


def _ess_tss(fit: DpdFit, Z: np.ndarray) -> tuple[float, float]:
    q = projection_quadratic_form(projection_design(Z), fit.v)
    return q["ess"], q["tss"]


def bp_beta_test(fit: DpdFit, Z) -> TestResult:
    """ESS of the regression of ``v`` on ``[1 | Z]`` divided by ``d(beta)``."""
    Z, r = _check_fit(fit, Z)
    ess, tss = _ess_tss(fit, Z)
    d = bp_denominator(fit.beta_tuning)
    stat = ess / d
    return TestResult(TestKind.BP, fit.beta_tuning, stat, r, chi_square_sf(stat, r), ess, tss, d)


def koenker_beta_test(fit: DpdFit, Z) -> TestResult:
    """``n R^2`` of the regression of ``v`` on ``[1 | Z]``."""
    Z, r = _check_fit(fit, Z)
    ess, tss = _ess_tss(fit, Z)
    if tss / fit.n < 1e-300:
        raise ZeroVariance("v-vector has zero variance")
    stat = fit.n * ess / tss
    return TestResult(TestKind.KOENKER, fit.beta_tuning, stat, r, chi_square_sf(stat, r), ess, tss)


@dataclass(frozen=True)
class ScanPoint:
    beta: float
    bp: TestResult | None
    koenker: TestResult | None
    fit: DpdFit | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class BetaScan:
    grid: tuple[float, ...]
    points: tuple[ScanPoint, ...]
    alpha: float
    df: int
    threshold: float

    @property
    def failed(self) -> list[float]:
        return [p.beta for p in self.points if not p.ok]


def _validate_grid(grid) -> tuple[float, ...]:
    g = tuple(float(b) for b in grid)
    if not g:
        raise ConfigError("beta grid is empty")
    if any(not (0.0 <= b <= 2.0) for b in g):
        raise ConfigError("beta values must lie in [0, 2]")
    if any(b2 <= b1 for b1, b2 in zip(g, g[1:])):
        raise ConfigError("beta grid must be strictly increasing")
    return g


def scan_beta(
    data: RegressionData,
    grid=None,
    alpha: float = DEFAULT_ALPHA,
    white: bool = False,
    warm_start: bool = False,
    opts: FitOptions = FitOptions(),
) -> BetaScan:
    """Both statistics at every grid value of beta.

    With ``white=True`` the heteroscedasticity design is replaced by the White
    expansion of ``data.X``. A failing grid point is recorded with its error
    message and the scan carries on. ``warm_start`` starts each fit from the
    previous grid point's coefficients instead of OLS; the default keeps every
    point identical to a standalone fit.
    """
    grid = _validate_grid(DEFAULT_GRID if grid is None else grid)
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    if white:
        data = data.with_z(build_white_design(data.X))
    r = data.r
    points = []
    prev = None
    for b in grid:
        try:
            fit = fit_null_dpd(data, b, opts, start=prev) if warm_start else fit_null_dpd(data, b, opts)
            points.append(ScanPoint(b, bp_beta_test(fit, data.Z), koenker_beta_test(fit, data.Z), fit))
            prev = fit
        except BpBetaError as exc:
            points.append(ScanPoint(b, None, None, None, f"{type(exc).__name__}: {exc}"))
    return BetaScan(grid, tuple(points), alpha, r, chi_square_isf(alpha, r))

