"""Dense linear algebra and chi-square tail probabilities.

Everything here is a pure function of its arguments. Matrices are small
(a handful of columns), so the Cholesky factorization is written out
directly; the triangular solves go through SciPy.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import brentq

from .errors import SingularMatrix

PIVOT_TOL = 1e-8
_GAMMA_EPS = 1e-16
_GAMMA_MAXITER = 10_000
_FPMIN = 1e-300


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("expected a 2-D array")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def cholesky_factor(A, pivot_tol: float = PIVOT_TOL) -> np.ndarray:
    """Lower-triangular ``L`` with ``A = L @ L.T``.

    Raises ``SingularMatrix`` as soon as a pivot falls to ``pivot_tol`` times
    the largest diagonal entry of ``A`` or below.
    """
    A = _as_matrix(A)
    k = A.shape[0]
    if A.shape != (k, k):
        raise ValueError("matrix must be square")
    if k and np.max(np.abs(A - A.T)) > 1e-10 * np.max(np.abs(A)):
        raise ValueError("matrix must be symmetric")
    dmax = float(np.max(np.diag(A))) if k else 0.0
    if dmax <= 0.0:
        raise SingularMatrix("non-positive diagonal")
    floor = pivot_tol * dmax
    L = np.zeros_like(A)
    for j in range(k):
        pivot = A[j, j] - L[j, :j] @ L[j, :j]
        if pivot <= floor:
            raise SingularMatrix(f"pivot {pivot:.3g} at column {j} is below {floor:.3g}")
        L[j, j] = math.sqrt(pivot)
        L[j + 1:, j] = (A[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def cholesky_solve(A, b, pivot_tol: float = PIVOT_TOL) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    The system is equilibrated first (``D^-1/2 A D^-1/2`` with ``D = diag(A)``)
    so that the pivot test is independent of the units of the columns; then
    one forward and one backward substitution.
    """
    A = _as_matrix(A)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != A.shape[0]:
        raise ValueError("dimension mismatch between A and b")
    d = np.diag(A).copy()
    if np.any(d <= 0.0):
        raise SingularMatrix("non-positive diagonal")
    s = 1.0 / np.sqrt(d)
    As = A * s[:, None] * s[None, :]
    L = cholesky_factor(As, pivot_tol)
    bs = b * (s if b.ndim == 1 else s[:, None])
    w = solve_triangular(L, bs, lower=True)
    x = solve_triangular(L.T, w, lower=False)
    return x * (s if b.ndim == 1 else s[:, None])


def projection_quadratic_form(Zb, v, pivot_tol: float = PIVOT_TOL) -> dict[str, float]:
    """Explained and total sums of squares of ``v`` against the span of ``Zb``.

    ``ess = v' Zb (Zb'Zb)^-1 Zb' v`` is evaluated as ``|L^-1 Zb' v|^2`` with
    ``L`` the Cholesky factor of ``Zb'Zb`` (after column equilibration), so no
    inverse is ever formed. Both sums are uncentered.
    """
    Zb = _as_matrix(Zb)
    v = np.asarray(v, dtype=float)
    if Zb.shape[0] != v.shape[0]:
        raise ValueError("rows of Zb must match length of v")
    norms = np.sqrt(np.sum(Zb * Zb, axis=0))
    if np.any(norms == 0.0):
        raise SingularMatrix("zero column in projection design")
    Zs = Zb / norms
    L = cholesky_factor(Zs.T @ Zs, pivot_tol)
    w = solve_triangular(L, Zs.T @ v, lower=True)
    tss = float(v @ v)
    ess = min(float(w @ w), tss)
    return {"ess": ess, "tss": tss}


# -- incomplete gamma -------------------------------------------------------

def _gamma_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) by its power series."""
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(_GAMMA_MAXITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _GAMMA_EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) by Lentz's continued fraction."""
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_MAXITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma function Q(a, x)."""
    if a <= 0:
        raise ValueError("shape must be positive")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_series(a, x))
    return min(1.0, _gamma_cf(a, x))


def gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma function P(a, x) = 1 - Q(a, x)."""
    if a <= 0:
        raise ValueError("shape must be positive")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _gamma_series(a, x))
    return max(0.0, 1.0 - _gamma_cf(a, x))


def chi_square_sf(x: float, df: float) -> float:
    """Upper tail probability of a central chi-square with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be positive")
    if x < 0:
        raise ValueError("x must be nonnegative")
    return gamma_q(0.5 * df, 0.5 * x)


def chi_square_isf(prob: float, df: float) -> float:
    """Critical value ``x`` with ``chi_square_sf(x, df) == prob``."""
    if not 0.0 < prob < 1.0:
        raise ValueError("prob must lie in (0, 1)")
    hi = max(1.0, 2.0 * df)
    while chi_square_sf(hi, df) > prob:
        hi *= 2.0
    return brentq(lambda t: chi_square_sf(t, df) - prob, 0.0, hi, xtol=1e-14, rtol=1e-15, maxiter=500)


def _poisson_pmf(j: int, lam: float) -> float:
    return math.exp(-lam + j * math.log(lam) - math.lgamma(j + 1.0))


def noncentral_chi_square_sf(x: float, df: float, ncp: float, mass_tol: float = 1e-12) -> float:
    """Upper tail of a noncentral chi-square, ``P(chi2_df(ncp) > x)``.

    Poisson(ncp/2) mixture of central tails. Terms are added outward from the
    Poisson mode until the mass not yet accounted for is below ``mass_tol``.
    When the tail exceeds one half the lower tail is summed instead and
    subtracted from one, which keeps full accuracy near both ends.
    """
    if x < 0 or ncp < 0:
        raise ValueError("x and ncp must be nonnegative")
    if df <= 0:
        raise ValueError("df must be positive")
    if ncp == 0.0:
        return chi_square_sf(x, df)
    if x == 0.0:
        return 1.0
    lam = 0.5 * ncp
    half_x = 0.5 * x
    mode = int(lam)
    lo = hi = mode
    weights = [_poisson_pmf(mode, lam)]
    index = [mode]
    seen = weights[0]
    while 1.0 - seen >= mass_tol:
        wl = _poisson_pmf(lo - 1, lam) if lo > 0 else 0.0
        wr = _poisson_pmf(hi + 1, lam)
        if max(wl, wr) < 1e-300:
            break
        if wl >= wr:
            lo -= 1
            weights.append(wl)
            index.append(lo)
            seen += wl
        else:
            hi += 1
            weights.append(wr)
            index.append(hi)
            seen += wr
    upper = math.fsum(w * gamma_q(0.5 * df + j, half_x) for w, j in zip(weights, index))
    if upper <= 0.5:
        return min(1.0, max(0.0, upper))
    lower = math.fsum(w * gamma_p(0.5 * df + j, half_x) for w, j in zip(weights, index))
    return min(1.0, max(0.0, 1.0 - lower))
