import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from rolem.errors import InvalidParameterError
from rolem.matvar import (
    InvWishartParams,
    MatNormalParams,
    MatTParams,
    cholesky,
    invwishart_logpdf,
    invwishart_sample,
    mn_logpdf,
    mn_sample,
    mt_logpdf,
    mt_sample,
)

from conftest import random_spd


def vec_normal_logpdf(y, m, row, col):
    """vec(Y) ~ N(vec(M), col kron row), evaluated densely."""
    return stats.multivariate_normal(m.ravel(order="F"), np.kron(col, row)).logpdf(y.ravel(order="F"))


def mt_by_quadrature(y, m, row, col, nu):
    """Integrate the normal density over the Gamma(nu/2, rate nu/2) mixing law."""
    a, b = y.shape
    base = vec_normal_logpdf(y, m, row, col)
    # log N(y; m, row/tau, col) = base + (ab/2) log tau - (tau - 1) * q / 2
    d = (y - m).ravel(order="F")
    q = float(d @ np.linalg.solve(np.kron(col, row), d))
    gam = stats.gamma(0.5 * nu, scale=2.0 / nu)

    def f(t):
        return np.exp(0.5 * a * b * np.log(t) - 0.5 * (t - 1.0) * q) * gam.pdf(t)

    val, _ = integrate.quad(f, 0.0, np.inf, epsabs=0.0, epsrel=1e-12, limit=500)
    return base + np.log(val)


dims = st.tuples(st.integers(1, 4), st.integers(1, 4))


@settings(max_examples=60, deadline=None)
@given(dims, st.integers(0, 2**31 - 1))
def test_mn_logpdf_matches_kronecker_oracle(ab, seed):
    a, b = ab
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((a, b))
    row, col = random_spd(rng, a), random_spd(rng, b)
    y = m + rng.standard_normal((a, b))
    got = mn_logpdf(y, MatNormalParams(m, row, col))
    assert got == pytest.approx(vec_normal_logpdf(y, m, row, col), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(dims, st.floats(2.5, 30.0), st.integers(0, 2**31 - 1))
def test_mt_logpdf_matches_mixture_quadrature(ab, nu, seed):
    a, b = ab
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((a, b))
    row, col = random_spd(rng, a), random_spd(rng, b)
    y = m + rng.standard_normal((a, b))
    got = mt_logpdf(y, MatTParams(nu, m, row, col))
    assert got == pytest.approx(mt_by_quadrature(y, m, row, col, nu), abs=1e-6)


def test_mt_one_by_one_is_scaled_student_t():
    y, m, s2, nu = 1.3, -0.2, 2.5, 4.0
    got = mt_logpdf(np.array([[y]]), MatTParams(nu, np.array([[m]]), np.array([[s2]]), np.eye(1)))
    assert got == pytest.approx(stats.t(nu, loc=m, scale=np.sqrt(s2)).logpdf(y), abs=1e-12)


def test_mn_sample_moments(rng):
    a, b = 2, 3
    m = rng.standard_normal((a, b))
    row, col = random_spd(rng, a), random_spd(rng, b)
    draws = np.array([mn_sample(MatNormalParams(m, row, col), rng).ravel(order="F") for _ in range(40000)])
    assert np.allclose(draws.mean(axis=0), m.ravel(order="F"), atol=0.03)
    assert np.allclose(np.cov(draws.T), np.kron(col, row), atol=0.06)


def test_mt_sample_covariance_inflated_by_nu_ratio(rng):
    a, b, nu = 2, 2, 6.0
    row, col = random_spd(rng, a), random_spd(rng, b)
    p = MatTParams(nu, np.zeros((a, b)), row, col)
    draws = np.array([mt_sample(p, rng).ravel(order="F") for _ in range(60000)])
    assert np.allclose(np.cov(draws.T), nu / (nu - 2) * np.kron(col, row), rtol=0.08, atol=0.03)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_invwishart_logpdf_matches_scipy(d, seed):
    rng = np.random.default_rng(seed)
    k = d + 1.5 + 3 * rng.uniform()
    psi = random_spd(rng, d)
    w = random_spd(rng, d)
    ref = stats.invwishart(df=k, scale=psi).logpdf(w)
    assert invwishart_logpdf(w, InvWishartParams(k, psi)) == pytest.approx(float(ref), abs=1e-9)


def test_invwishart_sample_mean(rng):
    d, k = 3, 9.0
    psi = random_spd(rng, d)
    draws = np.array([invwishart_sample(InvWishartParams(k, psi), rng) for _ in range(30000)])
    assert np.allclose(draws.mean(axis=0), psi / (k - d - 1), rtol=0.05, atol=0.01)


def test_invwishart_scalar_is_inverse_gamma(rng):
    k, psi = 5.0, 2.0
    draws = np.array([invwishart_sample(InvWishartParams(k, np.array([[psi]])), rng)[0, 0] for _ in range(5000)])
    res = stats.kstest(draws, stats.invgamma(k / 2, scale=psi / 2).cdf)
    assert res.pvalue > 0.001


def test_invwishart_draws_are_spd(rng):
    for _ in range(200):
        w = invwishart_sample(InvWishartParams(3.2, random_spd(rng, 3)), rng)
        assert np.allclose(w, w.T)
        assert np.linalg.eigvalsh(w).min() > 0


def test_cholesky_rejects_bad_input():
    with pytest.raises(InvalidParameterError):
        cholesky(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(InvalidParameterError):
        cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(InvalidParameterError):
        cholesky(np.ones((2, 3)))


def test_parameter_validation():
    with pytest.raises(InvalidParameterError):
        MatNormalParams(np.zeros((2, 2)), np.eye(3), np.eye(2))
    with pytest.raises(InvalidParameterError):
        MatTParams(0.0, np.zeros((1, 1)), np.eye(1), np.eye(1))
    with pytest.raises(InvalidParameterError):
        InvWishartParams(0.5, np.eye(2))
