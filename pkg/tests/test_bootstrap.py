import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chi2

from gerve.bootstrap import (
    BootstrapConfig,
    adaptive_gates,
    bootstrap_uq,
    confidence_ellipse,
    hungarian,
    match_modes,
    stability_scores,
    zscore_frame,
)
from gerve.errors import DegenerateEllipseError, InsufficientMatchesError, InvalidInputError
from gerve.mixture import ParameterBounds
from gerve.modes import PruneMergeConfig
from gerve.objective import EntropyConfig
from gerve.optimizer import EarlyStop, FitConfig, InitSpec, Schedule


def brute_force(C):
    """Minimum cost and the lexicographically smallest optimal injection."""
    m, n = C.shape
    if m <= n:
        best = None
        for cols in itertools.permutations(range(n), m):
            c = sum(C[i, j] for i, j in enumerate(cols))
            if best is None or c < best[0] - 1e-12 or (abs(c - best[0]) <= 1e-12 and cols < best[1]):
                best = (c, cols)
        return best
    c, rows = brute_force(C.T)
    return c, rows


# -- hungarian -----------------------------------------------------------------------


def test_hungarian_examples():
    C = 1.0 - np.eye(4)
    r, c = hungarian(C)
    np.testing.assert_array_equal(c, np.arange(4))
    assert C[r, c].sum() == 0
    r, c = hungarian([[3.5]])
    assert list(r) == [0] and list(c) == [0]
    r, c = hungarian(np.empty((0, 3)))
    assert r.size == c.size == 0


def test_hungarian_ties_are_lexicographic():
    r, c = hungarian(np.ones((3, 3)))
    np.testing.assert_array_equal(c, [0, 1, 2])
    r, c = hungarian(np.ones((2, 4)))
    np.testing.assert_array_equal(c, [0, 1])


def test_hungarian_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        hungarian([[1.0, np.inf]])


@pytest.mark.parametrize("trial", range(100))
def test_hungarian_6x6_integer_brute_force(trial):
    rng = np.random.default_rng(trial)
    C = rng.integers(0, 10, (6, 6)).astype(float)
    r, c = hungarian(C)
    best, cols = brute_force(C)
    assert C[r, c].sum() == best
    assert tuple(c) == cols


@given(st.integers(0, 2**31), st.integers(1, 7), st.integers(1, 7), st.booleans())
def test_hungarian_rectangular_brute_force(seed, m, n, integer):
    rng = np.random.default_rng(seed)
    C = rng.integers(0, 4, (m, n)).astype(float) if integer else rng.uniform(0, 5, (m, n))
    r, c = hungarian(C)
    best, idx = brute_force(C)
    assert len(r) == min(m, n)
    assert len(set(r.tolist())) == len(r) and len(set(c.tolist())) == len(c)
    assert C[r, c].sum() == pytest.approx(best, abs=1e-9)
    if m <= n:
        assert tuple(c) == idx


# -- gates and matching -------------------------------------------------------------------


def test_gate_examples():
    assert adaptive_gates([[0.0, 0.0]]).tolist() == [0.22]
    np.testing.assert_allclose(adaptive_gates([[0.0, 0.0], [1.0, 0.0]]), [0.22, 0.22])
    np.testing.assert_allclose(adaptive_gates([[0.0, 0.0], [0.1, 0.0]]), [0.08, 0.08])
    np.testing.assert_allclose(adaptive_gates([[0.0, 0.0], [0.5, 0.0]]), [0.175, 0.175])


@given(st.integers(0, 2**31), st.floats(0.05, 0.45), st.floats(0.01, 0.2))
def test_gates_monotone_in_eta(seed, eta, bump):
    P = np.random.default_rng(seed).standard_normal((5, 2))
    lo = adaptive_gates(P, eta, 0.0 + 1e-9, 1e9)
    hi = adaptive_gates(P, min(eta + bump, 0.499), 1e-9, 1e9)
    assert np.all(hi >= lo)
    # gates stay inside midpoints since eta < 0.5
    D = np.linalg.norm(P[:, None] - P[None], axis=2) + np.diag(np.full(5, np.inf))
    assert np.all(hi < D.min(axis=1) / 2)


def test_match_examples():
    B = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    g = adaptive_gates(B)
    assert match_modes(B, B, g) == [0, 1, 2]
    assert match_modes(B, B[[0, 2]], g) == [0, None, 1]
    R = np.array([[0.05, 0.0], [5.0, 5.0], [0.98, 0.02], [0.0, 1.1]])
    got = match_modes(B, R, g)
    assert got == [0, 2, 3]
    D = np.linalg.norm(B[:, None] - R[None], axis=2)
    best, _ = brute_force(D)
    assert sum(D[k, j] for k, j in enumerate(got)) == pytest.approx(best)
    # a replicate centre beyond the gate is rejected
    assert match_modes(B, np.array([[0.5, 0.5]]), g) == [None, None, None]


def test_stability_scores():
    np.testing.assert_array_equal(stability_scores([[1, 2, 3], [], [4]], 4), [0.75, 0.0, 0.25])
    with pytest.raises(InvalidInputError):
        stability_scores([], 0)


def test_zscore_single_mode():
    loc, scale = zscore_frame(np.array([[2.0, 3.0]]))
    np.testing.assert_array_equal(scale, [1.0, 1.0])


# -- ellipses -------------------------------------------------------------------------------


def test_ellipse_isotropic_cloud():
    rng = np.random.default_rng(0)
    sigma = 0.3
    e = confidence_ellipse(rng.normal(0, sigma, (200_000, 2)))
    q = math.sqrt(chi2.ppf(0.95, 2))
    assert q == pytest.approx(math.sqrt(5.991464547107979), rel=1e-12)
    assert e.semi_axes[0] == pytest.approx(sigma * q, rel=1e-2)
    assert e.semi_axes[1] == pytest.approx(sigma * q, rel=1e-2)


def test_ellipse_planted_aspect_ratio():
    rng = np.random.default_rng(1)
    P = rng.multivariate_normal([1.0, 2.0], np.diag([4.0, 1.0]), 500)
    e = confidence_ellipse(P)
    assert e.semi_axes[0] / e.semi_axes[1] == pytest.approx(2.0, rel=0.1)
    assert e.semi_axes[0] >= e.semi_axes[1] > 0


def test_ellipse_angle_convention():
    # major axis along y: atan2(e_x, e_y) = 0
    P = np.array([[0.0, -2.0], [0.0, 2.0], [0.1, 0.0], [-0.1, 0.0]])
    assert confidence_ellipse(P).angle_deg == pytest.approx(0.0, abs=1e-9)
    # major axis along x: 90
    assert confidence_ellipse(P[:, ::-1]).angle_deg == pytest.approx(90.0, abs=1e-9)
    # along the diagonal y = x: 45
    R = np.array([[1, 1], [-1, -1], [0.1, -0.1], [-0.1, 0.1]], dtype=float)
    assert confidence_ellipse(R).angle_deg == pytest.approx(45.0, abs=1e-9)


def test_ellipse_errors():
    with pytest.raises(InsufficientMatchesError):
        confidence_ellipse([[0.0, 0.0], [1.0, 1.0]])
    with pytest.raises(DegenerateEllipseError):
        confidence_ellipse([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    with pytest.raises(InvalidInputError):
        confidence_ellipse(np.zeros((5, 3)))


# -- full procedure ---------------------------------------------------------------------------


def _two_blob_setup():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal([-1, -1], 0.1, (2000, 2)), rng.normal([1, 1], 0.1, (2000, 2))])
    cfg = FitConfig(
        T=200,
        B=500,
        bounds=ParameterBounds(2.0, 0.002, 0.5, 6.0),
        schedule=Schedule.constant(0.01, 0.05),
        ecfg=EntropyConfig(30),
        early_stop=EarlyStop(10, 1e-3, 1e-2, 3),
        seed=1,
        init=InitSpec("kmeans++", 0.1),
    )
    return X, cfg, PruneMergeConfig(1e-4, None, 0.2)


def test_bootstrap_without_resampling_is_fully_stable():
    X, cfg, pm = _two_blob_setup()
    rep = bootstrap_uq(X[::4], cfg, pm, BootstrapConfig(L=1, omega0=0.01, resample=False), K=4)
    assert len(rep.baseline) == 2
    np.testing.assert_array_equal(rep.stability, [1.0, 1.0])


def test_bootstrap_two_separated_blobs():
    X, cfg, pm = _two_blob_setup()
    rep = bootstrap_uq(X, cfg, pm, BootstrapConfig(L=100, omega0=0.01, seed=3, count_radius=0.3), K=4)
    assert len(rep.baseline) == 2
    assert np.all(rep.stability >= 0.9)
    for k, m in enumerate(rep.matches):
        assert len(m) == round(rep.stability[k] * rep.L)
    for e in rep.ellipses:
        assert e is not None and e.semi_axes[0] >= e.semi_axes[1] > 0
    assert all(c > 1500 for c in rep.local_counts)
    d = json.loads(rep.to_json())
    assert d["schema"] == "gerve/bootstrap-report/1" and len(d["modes"]) == 2
    head = rep.to_csv().splitlines()[0]
    assert head == "mode_id,s,center_0,center_1,a_m,b_m,angle_deg,count"


def test_bootstrap_independent_of_workers():
    X, cfg, pm = _two_blob_setup()
    X = X[::8]
    bc = BootstrapConfig(L=6, omega0=0.01, seed=5)
    a = bootstrap_uq(X, cfg, pm, bc, K=4)
    b = bootstrap_uq(X, cfg, pm, bc, K=4, workers=2)
    assert a.to_json() == b.to_json()


def test_bootstrap_config_validation():
    with pytest.raises(InvalidInputError):
        BootstrapConfig(L=0, omega0=1.0)
    with pytest.raises(InvalidInputError):
        BootstrapConfig(L=1, omega0=1.0, eta=0.5)
    with pytest.raises(InvalidInputError):
        BootstrapConfig(L=1, omega0=1.0, tau_min=0.3, tau_max=0.2)
    assert BootstrapConfig.from_dict(BootstrapConfig(L=3, omega0=1.0).to_dict()) == BootstrapConfig(L=3, omega0=1.0)
