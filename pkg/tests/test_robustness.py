import math

import mpmath
import numpy as np
import pytest

from bpbeta.estimation import fit_null_dpd
from bpbeta.model import RegressionData
from bpbeta.numerics import chi_square_isf, noncentral_chi_square_sf
from bpbeta.robustness import (
    UNBOUNDED,
    Theta0,
    a1_numerator,
    are,
    contaminated_power,
    ges_simple_linear,
    if2_curve,
    if2_per_observation,
    if2_sandwich,
    if2_sup_shape,
    influence_report,
    noncentrality,
    null_sandwich,
    pitman_power,
)


def _data(seed=0, n=60, p=2):
    rng = np.random.default_rng(seed)
    R = rng.standard_normal((n, p))
    X = np.column_stack([np.ones(n), R])
    y = X @ np.ones(p + 1) + rng.standard_normal(n)
    return RegressionData(y, X, R)


def test_are_values():
    assert are(0.0) == 1.0
    assert are(0.2) == pytest.approx(1.09, abs=0.005)
    with mpmath.workdps(40):
        b = mpmath.mpf("0.5")
        a1n = (2 * b**2 + 1) / (2 * (2 * b + 1) ** mpmath.mpf("2.5")) - b**2 / (4 * (b + 1) ** 3)
        ref = 8 * (b + 1) ** 5 / (b**2 + 2) ** 2 * a1n
    assert are(0.5) == pytest.approx(float(ref), rel=1e-14)


def test_are_nondecreasing():
    vals = [are(b) for b in np.arange(0, 0.7501, 0.01)]
    assert all(b2 >= b1 for b1, b2 in zip(vals, vals[1:]))


def test_sandwich_at_beta_zero():
    d = _data()
    th = Theta0(np.ones(3), 1.0)
    sw = null_sandwich(th, d, beta_tuning=0.0)
    assert (sw.a1, sw.b1, sw.a2, sw.b2) == pytest.approx((0.5, 0.5, 1.0, 1.0))
    np.testing.assert_allclose(sw.Kbar, sw.Jbar)
    k = sw.r + 1
    assert np.all(sw.Kbar[:k, k:] == 0) and np.all(sw.Jbar[k:, :k] == 0)
    np.testing.assert_array_equal(sw.W, sw.W.T)


@pytest.mark.parametrize("beta", [0.0, 0.3, 1.0, 2.0])
def test_sandwich_constants_positive(beta):
    d = _data(1)
    sw = null_sandwich(Theta0(np.ones(3), 2.3), d, beta_tuning=beta)
    assert min(sw.a1, sw.a2, sw.b1, sw.b2) > 0
    np.testing.assert_array_equal(sw.Kbar, sw.Kbar.T)


def test_sandwich_constants_against_moments():
    """a1 and b1 are the variance and mean-derivative of the sigma2-score under N(0, 1)."""
    b = 0.4
    xs, ws = np.polynomial.hermite_e.hermegauss(120)
    ws = ws / ws.sum()
    c = (2 * math.pi) ** (-b / 2)
    g = xs**2
    B = np.exp(-b * g / 2) * (g - 1) + b / (b + 1) ** 1.5
    assert np.sum(ws * B) == pytest.approx(0.0, abs=1e-14)
    sw = null_sandwich(Theta0(np.zeros(3), 1.0), _data(), beta_tuning=b)
    # sigma2-score is c * B / 2 at sigma2 = 1
    assert np.sum(ws * (c * B / 2) ** 2) == pytest.approx(sw.a1, rel=1e-12)
    # b1 = -E[d score / d sigma2] for the same score, by finite difference in sigma2
    h = 1e-6

    def score(s2):
        gg = g / s2
        return (2 * math.pi * s2) ** (-b / 2) * (np.exp(-b * gg / 2) * (gg - 1) + b / (b + 1) ** 1.5) / (2 * s2)

    deriv = np.sum(ws * (score(1 + h) - score(1 - h))) / (2 * h)
    assert -deriv == pytest.approx(sw.b1, rel=1e-7)


def test_coefficient_constants_against_moments():
    """a2 and b2 from the coefficient score at sigma2 != 1 (pins the power of sigma2)."""
    b, s2 = 0.35, 1.7
    xs, ws = np.polynomial.hermite_e.hermegauss(120)
    ws = ws / ws.sum()
    sw = null_sandwich(Theta0(np.zeros(3), s2), _data(), beta_tuning=b)

    def score(e, s):
        return (2 * math.pi * s) ** (-b / 2) * np.exp(-b * e * e / (2 * s)) * e / s

    e = math.sqrt(s2) * xs
    assert np.sum(ws * score(e, s2) ** 2) == pytest.approx(sw.a2, rel=1e-12)
    h = 1e-6
    # minus the expected derivative in the location of e
    deriv = np.sum(ws * (score(e - h, s2) - score(e + h, s2))) / (2 * h)
    assert -deriv == pytest.approx(sw.b2, rel=1e-7)


def test_if2_example_points():
    d = _data(2)
    th = Theta0(np.array([0.5, 1.0, -1.0]), 2.0)
    beta = 0.3
    mu = d.X @ th.coefficients
    lev = np.einsum("ij,ji->i", d.Z, np.linalg.solve(d.Z.T @ d.Z, d.Z.T))
    at_fit = if2_per_observation(d, th, beta, mu)
    np.testing.assert_allclose(at_fit, lev / (4 * a1_numerator(beta)), rtol=1e-12)
    at_one = if2_per_observation(d, th, beta, mu + math.sqrt(th.sigma2))
    np.testing.assert_allclose(at_one, 0.0, atol=1e-15)


def test_if2_argmax():
    d = _data(3)
    th = Theta0(np.zeros(3), 1.0)
    i = 5
    mu = float(d.X[i] @ th.coefficients)
    grid = mu + np.linspace(0, 20, 200_001)
    vals = if2_curve(d, th, 0.2, i, grid)
    y_star = grid[int(np.argmax(vals))]
    assert (y_star - mu) ** 2 == pytest.approx(11.0, abs=2 * math.sqrt(11) * 1e-4 + 1e-8)
    assert np.max(vals) == pytest.approx(if2_sup_shape(0.2) * vals[0], rel=1e-8)


def test_if2_sandwich_closed_form_and_hprime_cancellation():
    d = _data(4)
    fit = fit_null_dpd(d, 0.3)
    rng = np.random.default_rng(0)
    probe = d.y + 3 * rng.standard_normal(d.n)
    base = null_sandwich(fit, d)
    vals = if2_sandwich(d, base, probe)
    e = probe - d.X @ fit.coefficients
    g = e**2 / fit.sigma2
    B = np.exp(-0.15 * g) * (g - 1) + 0.3 / 1.3**1.5
    Zc = d.Z - d.Z.mean(axis=0)
    S = Zc.T @ Zc / d.n
    ref = B**2 / (4 * a1_numerator(0.3)) * np.einsum("ij,jk,ik->i", Zc, np.linalg.inv(S), Zc)
    np.testing.assert_allclose(vals, ref, rtol=1e-9)
    for h in (0.5, 2.0):
        np.testing.assert_allclose(if2_sandwich(d, null_sandwich(fit, d, h), probe), vals, rtol=1e-9)


def test_influence_report():
    d = _data(5)
    th = Theta0(np.ones(3), 1.0)
    rep0 = influence_report(d, th, 0.0, d.y)
    assert rep0.unbounded and rep0.ges == UNBOUNDED
    rep = influence_report(d, th, 0.3, d.y)
    assert not rep.unbounded and np.all(rep.per_observation_if2 >= 0)
    lev = np.einsum("ij,ji->i", d.Z, np.linalg.solve(d.Z.T @ d.Z, d.Z.T))
    np.testing.assert_allclose(rep.ges_per_observation, if2_sup_shape(0.3) * lev / (4 * a1_numerator(0.3)),
                               rtol=1e-12)
    assert rep.ges == pytest.approx(rep.ges_per_observation.max())


def test_ges_simple_linear():
    assert ges_simple_linear(1e-13, 50) == UNBOUNDED
    b, n = 0.3, 50
    direct = 6 / (b * b * math.exp(b + 2) * a1_numerator(b)) * n * n / ((2 * n + 1) * (n * n - 1))
    assert ges_simple_linear(b, n) == pytest.approx(direct, rel=1e-15)
    grid = np.linspace(0.01, 0.75, 75)
    vals = [ges_simple_linear(x, n) for x in grid]
    assert all(v2 < v1 for v1, v2 in zip(vals, vals[1:]))


def test_ges_simple_linear_numeric_cross_check():
    """Numeric sup over y and i of the influence curve for x_i = z_i = i.

    The printed closed form exceeds the numeric supremum by exactly n/(n-1);
    the check records that factor instead of hiding it.
    """
    b, n = 0.3, 50
    i = np.arange(1.0, n + 1)
    X = np.column_stack([np.ones(n), i])
    d = RegressionData(np.sin(i) + i, X, i)
    th = Theta0(np.zeros(2), 1.0)
    ys = np.linspace(-10, 10, 400_001)
    sup = max(float(np.max(if2_curve(d, th, b, k, ys + k * 0.0))) for k in (0, n // 2, n - 1))
    assert ges_simple_linear(b, n) / sup == pytest.approx(n / (n - 1), rel=1e-8)


def test_pitman_power_basics():
    d = _data(6)
    fit = fit_null_dpd(d, 0.3)
    sw = null_sandwich(fit, d)
    assert pitman_power(np.zeros(2), sw).power == 0.05
    delta = np.array([0.2, -0.1])
    assert noncentrality(2 * delta, sw) == pytest.approx(4 * noncentrality(delta, sw), rel=1e-12)
    pw = [pitman_power(k * delta, sw).power for k in (1, 10, 100, 1000)]
    assert all(b >= a for a, b in zip(pw, pw[1:])) and pw[-1] > 0.999999


def test_noncentrality_hand_two_by_two():
    rng = np.random.default_rng(7)
    n = 40
    z = rng.standard_normal(n) + 1
    X = np.column_stack([np.ones(n), rng.standard_normal(n)])
    d = RegressionData(rng.standard_normal(n), X, z)
    th = Theta0(np.zeros(2), 1.7)
    sw = null_sandwich(th, d, beta_tuning=0.25)
    s = 1.7
    W11, W12, W22 = s * s * np.mean(z * z), s * np.mean(z), 1.0
    schur = W11 - W12 * W12 / W22
    delta = 0.8
    hand = delta * (sw.b1**2 / sw.a1) * schur * delta
    assert noncentrality([delta], sw) == pytest.approx(hand, rel=1e-10)


def test_noncentrality_scales_with_hprime_squared():
    d = _data(8)
    fit = fit_null_dpd(d, 0.3)
    delta = np.array([0.3, 0.2])
    nu1 = noncentrality(delta, null_sandwich(fit, d, 1.0))
    for h in (0.5, 2.0):
        assert noncentrality(delta, null_sandwich(fit, d, h)) == pytest.approx(h * h * nu1, rel=1e-10)


def test_contaminated_reduces_at_zero():
    d = _data(9)
    fit = fit_null_dpd(d, 0.3)
    sw = null_sandwich(fit, d)
    delta = np.array([1.0, -0.5])
    rep = contaminated_power(delta, 0.0, d.y + 2, sw, d)
    base = pitman_power(delta, sw)
    assert rep.contaminated_ncp == base.ncp and rep.contaminated_power == pytest.approx(base.power, abs=1e-14)
    zero = contaminated_power(np.zeros(2), 0.0, d.y + 2, sw, d)
    assert zero.pif == 0.0 and zero.power == 0.05


def _pif_fd(delta, yc, sw, d, h=1e-6):
    up = contaminated_power(delta, h, yc, sw, d).contaminated_power
    # the contaminated power is smooth in epsilon, so extend it to -h by symmetry of the formula
    nu = noncentrality(delta, sw)
    rep = contaminated_power(delta, h, yc, sw, d)
    lin = float(np.asarray(delta) @ rep.if_lambda)
    down = noncentral_chi_square_sf(rep.threshold, sw.r, nu - 2 * h * lin + h * h * rep.if2)
    return (up - down) / (2 * h)


@pytest.mark.parametrize("seed", range(10))
def test_pif_matches_finite_difference(seed):
    rng = np.random.default_rng(300 + seed)
    d = _data(seed + 20)
    beta = float(rng.choice([0.0, 0.2, 0.5]))
    fit = fit_null_dpd(d, beta)
    sw = null_sandwich(fit, d)
    delta = rng.standard_normal(2) * 2
    yc = np.full(d.n, np.nan)
    rows = rng.choice(d.n, size=5, replace=False)
    yc[rows] = d.y[rows] + rng.normal(0, 4, size=5)
    rep = contaminated_power(delta, 0.0, yc, sw, d)
    assert rep.pif == pytest.approx(_pif_fd(delta, yc, sw, d), abs=1e-4)
    assert np.sign(rep.pif) == np.sign(float(delta @ rep.if_lambda)) * np.sign(
        noncentral_chi_square_sf(rep.threshold, 4, rep.ncp) - noncentral_chi_square_sf(rep.threshold, 2, rep.ncp))


def test_contamination_at_infinity_vanishes():
    d = _data(10)
    fit = fit_null_dpd(d, 0.4)
    sw = null_sandwich(fit, d)
    delta = np.array([0.7, 0.2])
    rep = contaminated_power(delta, 0.5, np.full(d.n, 1e12), sw, d)
    assert rep.contaminated_ncp == pytest.approx(rep.ncp, rel=1e-10)
    assert rep.threshold == pytest.approx(chi_square_isf(0.05, 2))
