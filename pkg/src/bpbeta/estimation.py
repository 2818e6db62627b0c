"""Restricted minimum density-power-divergence fit under homoscedasticity.

The fit alternates two steps until both estimating equations hold:

* weighted least squares for the coefficients, weights ``exp(-(beta/2) g)``;
* a one-dimensional root solve for ``sigma2`` so that ``sum(v) = 0``.

``beta = 0`` is ordinary least squares with the maximum-likelihood variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFit, NoConvergence, NoRoot
from .model import RegressionData
from .numerics import cholesky_solve

EXP_CLAMP = -700.0
_SIGMA2_FLOOR = 1e-300
_SIGMA2_CEIL = 1e300
_BISECT_MAX = 2000


@dataclass(frozen=True)
class FitOptions:
    tol_eq: float = 1e-8
    max_outer_iterations: int = 100
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    # return an unconverged fit (converged=False) instead of raising
    strict: bool = True

    def __post_init__(self):
        for name in ("tol_eq", "max_outer_iterations", "newton_tol", "newton_max_iter"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    sigma2: float
    sum_v: float
    gradient_norm: float


@dataclass(frozen=True)
class DpdFit:
    """Outcome of :func:`fit_null_dpd`.

    ``final_gradient_norm`` is the scale-free form of the coefficient
    equation: columns of ``X`` rescaled to unit root-mean-square and residuals
    divided by ``sqrt(sigma2)``. It is what the outer loop tests against
    ``tol_eq``. Convergence also needs the raw ``X' diag(w) e`` (see
    :meth:`raw_gradient`) within ``tol_eq``, unless that is below the rounding
    level of the sum, as it is for data on large scales.
    """

    beta_tuning: float
    coefficients: np.ndarray
    sigma2: float
    residuals: np.ndarray
    g: np.ndarray
    v: np.ndarray
    weights: np.ndarray
    iterations: int
    converged: bool
    final_gradient_norm: float
    trace: tuple[TraceEntry, ...] = field(default=(), repr=False)

    @property
    def n(self) -> int:
        return self.residuals.shape[0]

    def raw_gradient(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float).T @ (self.weights * self.residuals)


def _exp_weights(g: np.ndarray, beta: float) -> np.ndarray:
    return np.exp(np.maximum(-0.5 * beta * g, EXP_CLAMP))


def v_vector(g, beta_tuning: float) -> np.ndarray:
    """``exp(-(beta/2) g) * (g - 1) + beta / (beta + 1)^(3/2)``."""
    g = np.asarray(g, dtype=float)
    if np.any(g < 0):
        raise ValueError("g must be nonnegative")
    b = float(beta_tuning)
    return _exp_weights(g, b) * (g - 1.0) + b / (b + 1.0) ** 1.5


def sigma_equation(residuals, beta_tuning: float, sigma2: float) -> float:
    """Mean of the v-vector implied by ``sigma2``; the variance update solves this for zero."""
    r = np.asarray(residuals, dtype=float)
    g = r * r / sigma2
    return float(np.mean(v_vector(g, beta_tuning)))


def sigma_equation_derivative(residuals, beta_tuning: float, sigma2: float) -> float:
    r = np.asarray(residuals, dtype=float)
    b = float(beta_tuning)
    g = r * r / sigma2
    terms = _exp_weights(g, b) * (0.5 * b * g * g - (1.0 + 0.5 * b) * g)
    return float(np.sum(terms)) / (r.shape[0] * sigma2)


def solve_sigma2(residuals, beta_tuning: float, sigma2_init: float, opts: FitOptions = FitOptions()) -> float:
    """Root of :func:`sigma_equation` in ``sigma2``.

    Newton on ``sigma2`` inside a maintained sign bracket; any step leaving the
    bracket or failing to shrink ``|f|`` is replaced by a geometric bisection.
    ``f`` is positive for tiny ``sigma2`` and negative for huge ``sigma2`` when
    ``beta > 0``, so a bracket always exists on ``(1e-300, 1e300)`` unless the
    residuals are degenerate.
    """
    r = np.asarray(residuals, dtype=float)
    b = float(beta_tuning)
    if not np.any(r != 0.0):
        raise NoRoot("all residuals are zero")
    if b == 0.0:
        return float(np.mean(r * r))
    if not sigma2_init > 0:
        raise ValueError("sigma2_init must be positive")

    def f(s):
        return sigma_equation(r, b, s)

    s = float(sigma2_init)
    fs = f(s)
    if abs(fs) <= opts.newton_tol:
        return s

    # bracket: f(lo) > 0 > f(hi)
    lo, hi = (None, s) if fs < 0 else (s, None)
    while lo is None:
        cand = hi / 10.0
        if cand < _SIGMA2_FLOOR:
            raise NoRoot("no sign change towards zero variance")
        fc = f(cand)
        if abs(fc) <= opts.newton_tol:
            return cand
        if fc > 0:
            lo = cand
        else:
            hi, s, fs = cand, cand, fc
    while hi is None:
        cand = lo * 10.0
        if cand > _SIGMA2_CEIL:
            raise NoRoot("no sign change towards infinite variance")
        fc = f(cand)
        if abs(fc) <= opts.newton_tol:
            return cand
        if fc < 0:
            hi = cand
        else:
            lo, s, fs = cand, cand, fc

    for it in range(opts.newton_max_iter + _BISECT_MAX):
        step_ok = False
        if it < opts.newton_max_iter:
            d = sigma_equation_derivative(r, b, s)
            if d != 0.0 and math.isfinite(d):
                cand = s - fs / d
                if lo < cand < hi:
                    fc = f(cand)
                    if abs(fc) < abs(fs):
                        s, fs, step_ok = cand, fc, True
        if not step_ok:
            s = math.sqrt(lo * hi)
            fs = f(s)
        if abs(fs) <= opts.newton_tol:
            return s
        if fs > 0:
            lo = s
        else:
            hi = s
        if hi / lo - 1.0 < 1e-15:
            break
    raise NoRoot(f"variance equation not solved to {opts.newton_tol:g}; |f| = {abs(fs):.3g}")


def _weighted_ls(X: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    Xw = X * w[:, None]
    A = X.T @ Xw
    return cholesky_solve(0.5 * (A + A.T), Xw.T @ y)


def _scaled_gradient(Xs: np.ndarray, w: np.ndarray, r: np.ndarray, sigma2: float) -> float:
    return float(np.max(np.abs(Xs.T @ (w * r)))) / math.sqrt(sigma2)


def _raw_gradient_ok(X: np.ndarray, w: np.ndarray, r: np.ndarray, tol: float) -> bool:
    """``max|X' diag(w) e| <= tol``, or as close as rounding in the sum allows."""
    wr = w * r
    floor = 64.0 * np.finfo(float).eps * float(np.max(np.abs(X).T @ np.abs(wr)))
    return float(np.max(np.abs(X.T @ wr))) <= max(tol, floor)


def fit_null_dpd(
    data: RegressionData,
    beta_tuning: float,
    opts: FitOptions = FitOptions(),
    start: DpdFit | None = None,
) -> DpdFit:
    """Minimum-DPD estimate of ``(coefficients, sigma2)`` with the scedastic parameters fixed at zero.

    Iterations start from OLS unless ``start`` supplies an earlier fit on the
    same data. The DPD objective can have several local minima, so a warm
    start may land on a different root than the OLS start.
    """
    b = float(beta_tuning)
    if not (b >= 0 and math.isfinite(b)):
        raise ValueError("beta_tuning must be a finite nonnegative number")
    X, y = data.X, data.y
    n = data.n

    ones = np.ones(n)
    coef = _weighted_ls(X, y, ones)
    r = y - X @ coef
    s2 = float(np.mean(r * r))
    yscale = float(np.max(np.abs(y)))
    if s2 <= _SIGMA2_FLOOR or math.sqrt(s2) <= 1e-12 * yscale:
        raise DegenerateFit("residual variance collapsed: the design interpolates the response")

    col_rms = np.sqrt(np.mean(X * X, axis=0))
    Xs = X / col_rms
    trace = []

    if b == 0.0:
        g = r * r / s2
        v = g - 1.0
        grad = _scaled_gradient(Xs, ones, r, s2)
        trace.append(TraceEntry(0, s2, float(v.sum()), grad))
        return DpdFit(0.0, coef, s2, r, g, v, ones, 0, True, grad, tuple(trace))

    if start is not None:
        if start.coefficients.shape != coef.shape:
            raise ValueError("start fit does not match the design")
        coef = start.coefficients.copy()
        r = y - X @ coef
        s2 = start.sigma2

    converged = False
    it = 0
    while True:
        s2 = solve_sigma2(r, b, s2, opts)
        if s2 <= _SIGMA2_FLOOR or math.sqrt(s2) <= 1e-12 * yscale:
            raise DegenerateFit("variance estimate collapsed")
        g = r * r / s2
        w = _exp_weights(g, b)
        v = w * (g - 1.0) + b / (b + 1.0) ** 1.5
        sum_v = float(v.sum())
        grad = _scaled_gradient(Xs, w, r, s2)
        trace.append(TraceEntry(it, s2, sum_v, grad))
        if abs(sum_v) <= opts.tol_eq and grad <= opts.tol_eq and _raw_gradient_ok(X, w, r, opts.tol_eq):
            converged = True
            break
        if it >= opts.max_outer_iterations:
            break
        coef = _weighted_ls(X, y, w)
        r = y - X @ coef
        it += 1

    if not converged and opts.strict:
        raise NoConvergence(
            f"beta={b:g}: estimating equations not met after {it} iterations "
            f"(|sum v|={abs(sum_v):.3g}, gradient={grad:.3g})"
        )
    return DpdFit(b, coef, s2, r, g, v, w, it, converged, grad, tuple(trace))
