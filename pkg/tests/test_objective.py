import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from gerve.errors import InvalidInputError
from gerve.mixture import Domain, MixtureState, mixture_density
from gerve.objective import (
    EntropyConfig,
    data_gradients,
    empirical_objective,
    entropy_gradients,
    entropy_mc,
)

HALF_LOG_2PIE = 0.5 * math.log(2 * math.pi * math.e)


def _one_d(mu=0.0, var=1.0):
    return MixtureState.from_arrays([[mu]], covariances=[[[var]]])


def _entropy_se(state, domain, M, seed=0):
    """Standard error of the stratified estimator, from an independent pilot run."""
    means = state.means
    cov = state.covariances
    rng = np.random.default_rng(seed + 999)
    var = 0.0
    for k in range(state.n_components):
        Z = rng.multivariate_normal(means[k], cov[k], size=M)
        inside = np.all((Z >= domain.lower) & (Z <= domain.upper), axis=1)
        v = np.log(mixture_density(state, Z)) * inside
        var += state.weights[k] ** 2 * v.var() / M
    return math.sqrt(var)


# -- objective ----------------------------------------------------------------------


def test_objective_single_point_at_mean():
    dom = Domain([-10.0], [10.0])
    assert empirical_objective(_one_d(), [[0.0]], 0.0, dom) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)


def test_objective_without_entropy_is_mean_density(rng):
    st = MixtureState.from_arrays([[0.0, 0.0], [1.0, 1.0]], [np.eye(2), 2 * np.eye(2)], weights=[0.3, 0.7])
    X = rng.standard_normal((25, 2))
    loop = sum(mixture_density(st, x) for x in X) / len(X)
    assert empirical_objective(st, X, 0.0, Domain.cube(5.0, 2)) == pytest.approx(loop, rel=1e-13)


def test_objective_with_entropy_closed_form(rng):
    sigma2 = 0.7
    st = _one_d(0.0, sigma2)
    dom = Domain([-10 * math.sqrt(sigma2)], [10 * math.sqrt(sigma2)])
    X = rng.normal(0, 1, (30, 1))
    M = 200_000
    omega = 0.5
    val = empirical_objective(st, X, omega, dom, EntropyConfig(M, seed=4))
    expected = norm.pdf(X[:, 0], 0, math.sqrt(sigma2)).mean() + omega * 0.5 * math.log(2 * math.pi * math.e * sigma2)
    assert abs(val - expected) < 3 * omega * _entropy_se(st, dom, M)


def test_objective_rejects_empty_and_negative():
    dom = Domain([-1.0], [1.0])
    with pytest.raises(InvalidInputError):
        empirical_objective(_one_d(), np.empty((0, 1)), 0.0, dom)
    with pytest.raises(InvalidInputError):
        empirical_objective(_one_d(), [[0.0]], -1.0, dom)


# -- entropy ---------------------------------------------------------------------------


def test_entropy_standard_normal():
    dom = Domain([-10.0], [10.0])
    M = 100_000
    est = entropy_mc(_one_d(), dom, EntropyConfig(M, seed=1))
    assert abs(est - HALF_LOG_2PIE) < 3 * _entropy_se(_one_d(), dom, M)


def test_entropy_half_line_against_brute_force():
    dom = Domain([0.0], [10.0])
    M = 100_000
    est = entropy_mc(_one_d(), dom, EntropyConfig(M, seed=2))
    rng = np.random.default_rng(77)
    Z = rng.standard_normal(1_000_000)
    v = -norm.logpdf(Z) * (Z >= 0)
    brute, brute_se = v.mean(), v.std() / 1000
    se = math.hypot(_entropy_se(_one_d(), dom, M), brute_se)
    assert abs(est - brute) < 4 * se
    # both agree with the exact half-line integral
    exact = 0.5 * HALF_LOG_2PIE
    assert abs(brute - exact) < 4 * brute_se


def test_entropy_tails_negligible():
    ecfg = EntropyConfig(5000, seed=3)
    a = entropy_mc(_one_d(), Domain([-12.0], [12.0]), ecfg)
    b = entropy_mc(_one_d(), Domain([-1e3], [1e3]), ecfg)
    assert abs(a - b) < 1e-4


def test_entropy_seed_determinism():
    st = MixtureState.from_arrays([[0.0, 0.0], [1.0, -1.0]], [np.eye(2), 0.5 * np.eye(2)])
    dom = Domain.cube(2.0, 2)
    a = entropy_gradients(st, dom, EntropyConfig(64, seed=9))
    b = entropy_gradients(st, dom, EntropyConfig(64, seed=9))
    for name in ("eta", "gamma", "phi"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert a.entropy == b.entropy == entropy_mc(st, dom, EntropyConfig(64, seed=9))


# -- data gradients -------------------------------------------------------------------


def test_data_gradient_centred_batch():
    st = MixtureState.from_arrays([[0.3, -0.2], [1.0, 1.0]], [np.eye(2), np.eye(2)])
    g = data_gradients(st, np.tile(st.means[0], (7, 1))).g
    assert np.all(g[0] == 0.0)


def test_data_gradient_unit_residuals():
    st = _one_d(0.4)
    H = data_gradients(st, [[1.4], [-0.6]]).H
    assert abs(H[0, 0, 0]) < 1e-16


def _batch_data_term(means, covs, weights, X):
    st = MixtureState.from_arrays(means, covariances=covs, weights=weights)
    return float(mixture_density(st, X).mean())


def test_data_gradients_match_finite_differences(rng):
    means = rng.standard_normal((2, 2))
    covs = np.array([[[0.8, 0.2], [0.2, 0.6]], [[1.2, -0.3], [-0.3, 0.9]]])
    w = np.array([0.4, 0.6])
    X = rng.standard_normal((40, 2))
    gb = data_gradients(MixtureState.from_arrays(means, covariances=covs, weights=w), X)
    h = 1e-6
    for k in range(2):
        for a in range(2):
            e = np.zeros_like(means)
            e[k, a] = h
            fd = (_batch_data_term(means + e, covs, w, X) - _batch_data_term(means - e, covs, w, X)) / (2 * h)
            assert gb.g[k, a] == pytest.approx(fd, rel=1e-5)
        D = np.array([[0.3, 0.1], [0.1, -0.2]])
        E = np.zeros_like(covs)
        E[k] = D
        fd = (_batch_data_term(means, covs + h * E, w, X) - _batch_data_term(means, covs - h * E, w, X)) / (2 * h)
        assert np.sum(gb.H[k] * D) == pytest.approx(fd, rel=1e-5)
    dw = np.array([h, -h])
    fd = (_batch_data_term(means, covs, w + dw, X) - _batch_data_term(means, covs, w - dw, X)) / (2 * h)
    assert gb.f[0] == pytest.approx(fd, rel=1e-5)
    assert np.allclose(gb.H, np.swapaxes(gb.H, 1, 2), atol=1e-12)


def test_data_gradients_unbiased_over_minibatches():
    rng = np.random.default_rng(5)
    st = MixtureState.from_arrays([[0.0, 0.0], [1.5, 0.5]], [np.eye(2), 0.5 * np.eye(2)], weights=[0.5, 0.5])
    X = rng.standard_normal((3000, 2))
    full = data_gradients(st, X).g
    errs = []
    Bs = (4, 16, 64, 256)
    for B in Bs:
        reps = []
        for trial in range(20):
            avg = np.mean([data_gradients(st, X[rng.integers(0, len(X), B)]).g for _ in range(200)], axis=0)
            reps.append(np.linalg.norm(avg - full))
        errs.append(np.sqrt(np.mean(np.square(reps))))
    slope = np.polyfit(np.log(Bs), np.log(errs), 1)[0]
    assert -1.0 < slope < -0.25  # 1/sqrt(200 B) gives -0.5; factor-2 band


# -- entropy gradients ------------------------------------------------------------------


def test_entropy_mean_gradient_location_free():
    dom = Domain([-10.0], [10.0])
    M = 100_000
    gb = entropy_gradients(_one_d(), dom, EntropyConfig(M, seed=5))
    # gamma = -S E[r log q]; log q = c - r^2/2 so Var(r log q) = Var(r^3/2) = 15/4
    se = math.sqrt(15 / 4 / M)
    assert abs(gb.gamma[0, 0]) < 3 * se


def test_entropy_covariance_gradient_closed_form():
    sigma2 = 2.0
    st = _one_d(0.0, sigma2)
    dom = Domain([-10 * math.sqrt(sigma2)], [10 * math.sqrt(sigma2)])
    M = 100_000
    gb = entropy_gradients(st, dom, EntropyConfig(M, seed=6))
    expected = 0.5 / sigma2
    # eta = -(1/2)(S^2 E[r^2 log q] - S E[log q]) with z = r/sigma:
    # per-draw value (z^2 - 1) * (-log q) / (2 sigma2); estimate its SE by simulation
    z = np.random.default_rng(0).standard_normal(M)
    per = (z**2 - 1) * (0.5 * math.log(2 * math.pi * sigma2) + z**2 / 2) / (2 * sigma2)
    assert abs(gb.eta[0, 0, 0] - expected) < 3 * per.std() / math.sqrt(M)


def test_entropy_weight_gradient_symmetric_components():
    st = MixtureState.from_arrays([[0.0], [0.0]], covariances=[[[1.0]], [[1.0]]])
    dom = Domain([-10.0], [10.0])
    M = 50_000
    gb = entropy_gradients(st, dom, EntropyConfig(M, seed=7))
    se = math.sqrt(2 * 0.5 / M)  # Var(log q) = 1/2 for a standard normal, difference of two means
    assert abs(gb.phi[0]) < 3 * se


def _entropy_quad_1d(means, vars_, w, lo, hi):
    st = MixtureState.from_arrays(np.array(means)[:, None], covariances=np.array(vars_)[:, None, None], weights=w)

    def f(x):
        q = float(mixture_density(st, [x]))
        return -q * math.log(q) if q > 0 else 0.0

    return integrate.quad(f, lo, hi, limit=200, epsabs=1e-13, epsrel=1e-12)[0]


def test_entropy_gradients_against_quadrature_1d():
    means, vars_, w = [-0.4, 0.7], [0.3, 0.5], [0.35, 0.65]
    lo, hi = -1.0, 1.5  # truncation matters here
    st = MixtureState.from_arrays(np.array(means)[:, None], covariances=np.array(vars_)[:, None, None], weights=w)
    gb = entropy_gradients(st, Domain([lo], [hi]), EntropyConfig(400_000, seed=8))
    h = 1e-5
    for k in range(2):
        dm = np.zeros(2)
        dm[k] = h
        fd = (_entropy_quad_1d(means + dm, vars_, w, lo, hi) - _entropy_quad_1d(means - dm, vars_, w, lo, hi)) / (2 * h)
        assert gb.gamma[k, 0] == pytest.approx(fd, abs=2e-2 * max(abs(fd), 0.1))
        fd = (_entropy_quad_1d(means, vars_ + dm, w, lo, hi) - _entropy_quad_1d(means, vars_ - dm, w, lo, hi)) / (2 * h)
        assert gb.eta[k, 0, 0] == pytest.approx(fd, abs=2e-2 * max(abs(fd), 0.1))
    dw = np.array([h, -h])
    fd = (_entropy_quad_1d(means, vars_, w + dw, lo, hi) - _entropy_quad_1d(means, vars_, w - dw, lo, hi)) / (2 * h)
    assert gb.phi[0] == pytest.approx(fd, abs=2e-2 * max(abs(fd), 0.1))


@pytest.mark.parametrize("d", [1, 2])
def test_entropy_gradient_directional_derivative_crn(d):
    """Common-random-number directional derivative of the MC entropy.

    A pathwise derivative through a hard box indicator misses mass crossing
    the box edge, so the box here holds essentially all of the mass; the
    truncated case is covered by the quadrature test above.
    """
    rng = np.random.default_rng(10 + d)
    K = 2
    means = rng.standard_normal((K, d)) * 0.6
    covs = np.stack([np.eye(d) * 0.5 + 0.1 * np.diag(rng.uniform(size=d)) for _ in range(K)])
    w = np.array([0.45, 0.55])
    dom = Domain.cube(8.0, d)
    ecfg = EntropyConfig(200_000, seed=21)
    dmu = rng.standard_normal((K, d))
    dS = np.stack([np.diag(rng.standard_normal(d)) * 0.3 for _ in range(K)])
    dw = np.array([0.2, -0.2])

    def H(t):
        return entropy_mc(MixtureState.from_arrays(means + t * dmu, covariances=covs + t * dS, weights=w + t * dw), dom, ecfg)

    h = 1e-4
    fd = (H(h) - H(-h)) / (2 * h)
    gb = entropy_gradients(MixtureState.from_arrays(means, covariances=covs, weights=w), dom, ecfg)
    proj = np.sum(gb.gamma * dmu) + np.sum(gb.eta * dS) + gb.phi[0] * dw[0]
    assert proj == pytest.approx(fd, rel=1e-2, abs=1e-2)
    assert np.allclose(gb.eta, np.swapaxes(gb.eta, 1, 2), atol=1e-12)
