"""Efficiency and robustness diagnostics for the beta-score tests.

Parameters are ordered ``(alpha, sigma2, coefficients)`` throughout, so the
heteroscedasticity block comes first in every sandwich matrix.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .estimation import DpdFit
from .model import RegressionData
from .numerics import chi_square_isf, cholesky_solve, noncentral_chi_square_sf

UNBOUNDED = sys.float_info.max
_TWO_PI = 2.0 * math.pi


def a1_numerator(beta_tuning: float) -> float:
    b = float(beta_tuning)
    return (2 * b * b + 1) / (2 * (2 * b + 1) ** 2.5) - b * b / (4 * (b + 1) ** 3)


def are(beta_tuning: float) -> float:
    """Pitman efficiency of the beta-test relative to the classical one."""
    b = float(beta_tuning)
    if b < 0:
        raise ValueError("beta_tuning must be nonnegative")
    return 8 * (b + 1) ** 5 / (b * b + 2) ** 2 * a1_numerator(b)


@dataclass(frozen=True)
class Theta0:
    coefficients: np.ndarray
    sigma2: float


@dataclass(frozen=True)
class NullSandwich:
    beta_tuning: float
    sigma2: float
    coefficients: np.ndarray
    hprime0: float
    W: np.ndarray
    a1: float
    a2: float
    b1: float
    b2: float
    Kbar: np.ndarray
    Jbar: np.ndarray
    r: int

    def variance(self) -> np.ndarray:
        """``J^-1 K J^-1``."""
        JinvK = cholesky_solve(self.Jbar, self.Kbar)
        return cholesky_solve(self.Jbar, JinvK.T).T

    def alpha_precision(self) -> np.ndarray:
        """``[M' V M]^-1`` with ``M`` selecting the scedastic block."""
        V = self.variance()
        Vr = 0.5 * (V[: self.r, : self.r] + V[: self.r, : self.r].T)
        return cholesky_solve(Vr, np.eye(self.r))


def _constants(beta: float, s: float) -> tuple[float, float, float, float]:
    b = beta
    a1 = a1_numerator(b) / (_TWO_PI**b * s ** (b + 2))
    a2 = 1.0 / (_TWO_PI**b * s ** (b + 1) * (2 * b + 1) ** 1.5)
    b1 = (b * b + 2) / (4 * (b + 1) ** 2.5) / (_TWO_PI ** (b / 2) * s ** (b / 2 + 2))
    b2 = 1.0 / (_TWO_PI ** (b / 2) * s ** (b / 2 + 1) * (b + 1) ** 1.5)
    return a1, a2, b1, b2


def _blockdiag(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    k, m = A.shape[0], B.shape[0]
    out = np.zeros((k + m, k + m))
    out[:k, :k] = A
    out[k:, k:] = B
    return out


def null_sandwich(
    fit: DpdFit | Theta0,
    data: RegressionData,
    hprime0: float = 1.0,
    beta_tuning: float | None = None,
) -> NullSandwich:
    """Sandwich matrices ``K`` and ``J`` evaluated at the null fit.

    ``beta_tuning`` defaults to the fit's own; it is required for a bare ``Theta0``.
    """
    b = float(fit.beta_tuning if beta_tuning is None else beta_tuning)
    s = float(fit.sigma2)
    Z, X, n = data.Z, data.X, data.n
    zbar = Z.mean(axis=0)
    r = Z.shape[1]
    W = np.empty((r + 1, r + 1))
    W[:r, :r] = s * s * hprime0**2 * (Z.T @ Z) / n
    W[:r, r] = W[r, :r] = s * hprime0 * zbar
    W[r, r] = 1.0
    XtX = X.T @ X / n
    a1, a2, b1, b2 = _constants(b, s)
    K = _blockdiag(a1 * W, a2 * XtX)
    J = _blockdiag(b1 * W, b2 * XtX)
    return NullSandwich(b, s, np.asarray(fit.coefficients, dtype=float), float(hprime0), W, a1, a2, b1, b2, K, J, r)


# -- second-order influence --------------------------------------------------

def _if2_shape(g, beta: float) -> np.ndarray:
    return np.exp(np.maximum(-beta * g, -700.0)) * (g - 1.0) ** 2


def _leverages(Z: np.ndarray) -> np.ndarray:
    """``z_i' (Z'Z)^-1 z_i`` for every row."""
    sol = cholesky_solve(Z.T @ Z, Z.T)
    return np.einsum("ij,ji->i", Z, sol)


def if2_per_observation(data: RegressionData, theta0, beta_tuning: float, y_probe) -> np.ndarray:
    """Second-order influence of observation ``i`` placed at ``y_probe[i]``.

    ``exp(-b g)(g-1)^2 / (4 a1num) * z_i'(Z'Z)^-1 z_i`` with
    ``g = (y - x'beta0)^2 / sigma0^2``.
    """
    y_probe = np.asarray(y_probe, dtype=float)
    if y_probe.shape != (data.n,):
        raise ShapeMismatch("y_probe needs one value per observation")
    e = y_probe - data.X @ np.asarray(theta0.coefficients, dtype=float)
    g = e * e / theta0.sigma2
    return _if2_shape(g, beta_tuning) * _leverages(data.Z) / (4.0 * a1_numerator(beta_tuning))


def if2_curve(data: RegressionData, theta0, beta_tuning: float, i: int, y_grid) -> np.ndarray:
    """Influence of observation ``i`` (0-based) as ``y_i`` sweeps ``y_grid``."""
    y_grid = np.asarray(y_grid, dtype=float)
    mu = float(data.X[i] @ np.asarray(theta0.coefficients, dtype=float))
    g = (y_grid - mu) ** 2 / theta0.sigma2
    lev = _leverages(data.Z)[i]
    return _if2_shape(g, beta_tuning) * lev / (4.0 * a1_numerator(beta_tuning))


def if2_sup_shape(beta_tuning: float) -> float:
    """``sup_g exp(-b g)(g-1)^2`` over ``g >= 0``; infinite at ``b = 0``."""
    b = float(beta_tuning)
    if b <= 0.0:
        return math.inf
    return max(1.0, 4.0 / (b * b * math.exp(b + 2.0)))


@dataclass(frozen=True)
class InfluenceReport:
    per_observation_if2: np.ndarray
    ges_per_observation: np.ndarray
    ges: float
    unbounded: bool


def _grid_sup(beta: float, sigma2: float, n_points: int = 2001) -> float:
    """Numerical ``sup`` of the influence shape over a log-spaced residual grid
    plus the analytic stationary point."""
    e = np.concatenate(([0.0], np.logspace(-6, 6, n_points) * math.sqrt(sigma2)))
    g = e * e / sigma2
    vals = _if2_shape(g, beta)
    if beta > 0:
        vals = np.append(vals, _if2_shape(np.array([(beta + 2.0) / beta]), beta))
    return float(np.max(vals))


def influence_report(data: RegressionData, theta0, beta_tuning: float, y_probe) -> InfluenceReport:
    per_obs = if2_per_observation(data, theta0, beta_tuning, y_probe)
    if beta_tuning <= 0.0:
        ges_i = np.full(data.n, UNBOUNDED)
        return InfluenceReport(per_obs, ges_i, UNBOUNDED, True)
    scale = _leverages(data.Z) / (4.0 * a1_numerator(beta_tuning))
    ges_i = _grid_sup(beta_tuning, theta0.sigma2) * scale
    return InfluenceReport(per_obs, ges_i, float(np.max(ges_i)), False)


def ges_simple_linear(beta_tuning: float, n: int) -> float:
    """Closed-form GES for the design ``x_i = z_i = i``, ``i = 1..n``.

    Returns ``UNBOUNDED`` for ``beta < 1e-12``.
    """
    b = float(beta_tuning)
    if n < 2:
        raise ValueError("n must be at least 2")
    if b < 1e-12:
        return UNBOUNDED
    return 6.0 / (b * b * math.exp(b + 2.0) * a1_numerator(b)) * n * n / ((2 * n + 1) * (n * n - 1.0))


# -- power -------------------------------------------------------------------

@dataclass(frozen=True)
class PowerReport:
    alpha: float
    df: int
    threshold: float
    ncp: float
    power: float
    contaminated_ncp: float | None = None
    contaminated_power: float | None = None
    pif: float | None = None
    if_lambda: np.ndarray | None = None
    if2: float | None = None

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("alpha", "df", "threshold", "ncp", "power",
                                           "contaminated_ncp", "contaminated_power", "pif", "if2")}
        d["if_lambda"] = None if self.if_lambda is None else [float(x) for x in self.if_lambda]
        return d


def _delta(delta, r: int) -> np.ndarray:
    d = np.atleast_1d(np.asarray(delta, dtype=float))
    if d.shape != (r,):
        raise ShapeMismatch(f"delta must have length {r}")
    return d


def noncentrality(delta, sandwich: NullSandwich) -> float:
    d = _delta(delta, sandwich.r)
    return max(0.0, float(d @ sandwich.alpha_precision() @ d))


def pitman_power(delta, sandwich: NullSandwich, alpha: float = 0.05) -> PowerReport:
    """Asymptotic power against the local alternative ``alpha_n = delta / sqrt(n)``."""
    ncp = noncentrality(delta, sandwich)
    thr = chi_square_isf(alpha, sandwich.r)
    power = alpha if ncp == 0.0 else noncentral_chi_square_sf(thr, sandwich.r, ncp)
    return PowerReport(alpha, sandwich.r, thr, ncp, power)


def score_vectors(data: RegressionData, sandwich: NullSandwich, y_probe) -> np.ndarray:
    """Per-observation DPD score ``u_i`` (rows) at the null, with ``y_i`` replaced by ``y_probe[i]``."""
    b, s, hp = sandwich.beta_tuning, sandwich.sigma2, sandwich.hprime0
    e = np.asarray(y_probe, dtype=float) - data.X @ sandwich.coefficients
    g = e * e / s
    w = np.exp(np.maximum(-0.5 * b * g, -700.0))
    B = w * (g - 1.0) + b / (b + 1.0) ** 1.5
    c = _TWO_PI ** (-b / 2) * s ** (-b / 2)
    return c * np.column_stack([0.5 * hp * B[:, None] * data.Z, B / (2.0 * s), (w * e / s)[:, None] * data.X])


def influence_m(data: RegressionData, sandwich: NullSandwich, y_probe) -> np.ndarray:
    """``M' J^-1 u_i`` for each observation (rows)."""
    U = score_vectors(data, sandwich, y_probe)
    return cholesky_solve(sandwich.Jbar, U.T).T[:, : sandwich.r]


def if2_sandwich(data: RegressionData, sandwich: NullSandwich, y_probe) -> np.ndarray:
    """Per-observation second-order influence from the general sandwich formula."""
    IFm = influence_m(data, sandwich, y_probe)
    E = sandwich.alpha_precision()
    return np.einsum("ij,jk,ik->i", IFm, E, IFm)


def contaminated_power(
    delta,
    epsilon: float,
    y_contam,
    sandwich: NullSandwich,
    data: RegressionData,
    alpha: float = 0.05,
) -> PowerReport:
    """Local power when a fraction ``epsilon / sqrt(n)`` of mass sits at ``y_contam``.

    ``y_contam[i]`` is the contamination point of observation ``i``; ``nan``
    leaves that observation uncontaminated.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    d = _delta(delta, sandwich.r)
    yc = np.asarray(y_contam, dtype=float)
    if yc.shape != (data.n,):
        raise ShapeMismatch("y_contam needs one value per observation")
    hit = ~np.isnan(yc)
    probe = np.where(hit, yc, 0.0)

    base = pitman_power(d, sandwich, alpha)
    E = sandwich.alpha_precision()
    IFm = influence_m(data, sandwich, probe)[hit]
    if_lambda = E @ IFm.sum(axis=0) if IFm.size else np.zeros(sandwich.r)
    theta0 = Theta0(sandwich.coefficients, sandwich.sigma2)
    if2_i = np.where(hit, if2_per_observation(data, theta0, sandwich.beta_tuning, probe), 0.0)
    if2 = float(np.mean(if2_i))

    lin = float(d @ if_lambda)
    ncp_eps = max(0.0, base.ncp + 2.0 * epsilon * lin + epsilon**2 * if2)
    r, thr = sandwich.r, base.threshold
    power_eps = noncentral_chi_square_sf(thr, r, ncp_eps)
    # d/d(ncp) of the noncentral tail is half the difference of the r+2 and r tails
    pif = lin * (noncentral_chi_square_sf(thr, r + 2, base.ncp) - noncentral_chi_square_sf(thr, r, base.ncp))
    return PowerReport(alpha, r, thr, base.ncp, base.power, ncp_eps, power_eps, pif, if_lambda, if2)
