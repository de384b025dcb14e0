import numpy as np
import pytest

from gerve import _kernels, _kernels_py
from gerve.mixture import MixtureState
from gerve.objective import LOG_FLOOR

from conftest import random_spd

core = pytest.importorskip("gerve._core")


def _problem(rng, K=4, d=3, n=50):
    means = rng.standard_normal((K, d))
    precs = np.stack([np.linalg.inv(random_spd(rng, d)) for _ in range(K)])
    precs = 0.5 * (precs + np.swapaxes(precs, 1, 2))
    state = MixtureState.from_arrays(means, precs, weights=rng.dirichlet(np.ones(K)))
    X = rng.standard_normal((n, d)) * 2
    return X, state.kernel_args()


@pytest.mark.parametrize("d", [1, 2, 5])
def test_compiled_matches_numpy(rng, d):
    X, (means, precs, log_norm, log_w) = _problem(rng, d=d)
    np.testing.assert_allclose(
        core.component_logpdf(X, means, precs, log_norm),
        _kernels_py.component_logpdf(X, means, precs, log_norm),
        rtol=1e-13,
        atol=1e-13,
    )
    np.testing.assert_allclose(
        core.mixture_logpdf(X, means, precs, log_norm, log_w),
        _kernels_py.mixture_logpdf(X, means, precs, log_norm, log_w),
        rtol=1e-13,
    )
    for a, b in zip(core.data_moments(X, means, precs, log_norm), _kernels_py.data_moments(X, means, precs, log_norm)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)
    Z = np.ascontiguousarray(rng.standard_normal((means.shape[0], 40, d)) * 2)
    lo, hi = -2.5 * np.ones(d), 2.5 * np.ones(d)
    for a, b in zip(
        core.entropy_moments(Z, means, precs, log_norm, log_w, lo, hi, LOG_FLOOR, 1.0),
        _kernels_py.entropy_moments(Z, means, precs, log_norm, log_w, lo, hi, LOG_FLOOR, 1.0),
    ):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_underflow_handled_identically():
    means = np.zeros((1, 1))
    precs = np.ones((1, 1, 1))
    log_norm = np.array([-0.5 * np.log(2 * np.pi)])
    log_w = np.zeros(1)
    X = np.array([[1e200]])
    assert core.mixture_logpdf(X, means, precs, log_norm, log_w)[0] == -np.inf
    assert _kernels_py.mixture_logpdf(X, means, precs, log_norm, log_w)[0] == -np.inf
    Z = np.array([[[40.0]]])
    lo, hi = np.array([-100.0]), np.array([100.0])
    e_core = core.entropy_moments(Z, means, precs, log_norm, log_w, lo, hi, LOG_FLOOR)[0]
    e_py = _kernels_py.entropy_moments(Z, means, precs, log_norm, log_w, lo, hi, LOG_FLOOR)[0]
    assert e_core[0] == e_py[0] == LOG_FLOOR


def test_backend_selected_at_import():
    assert _kernels.BACKEND in ("compiled", "python")
    if _kernels.BACKEND == "compiled":
        assert _kernels.data_moments is core.data_moments
