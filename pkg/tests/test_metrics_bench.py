import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gerve.bench import BenchConfig, BenchResult, run_benchmark
from gerve.errors import InvalidInputError
from gerve.metrics import (
    MixtureSpec,
    gen_mixture_sample,
    hungarian_sum,
    median_bootstrap_interval,
    mode_recovery,
    nearest_neighbor_sum,
    t_interval,
)

from conftest import TRIANGLE

points = st.integers(0, 2**31).map(lambda s: np.random.default_rng(s))


# -- generator ------------------------------------------------------------------------


def test_sample_mean_lln():
    spec = MixtureSpec([1.0], [[0.5, -0.3]], [np.diag([2.0, 0.5])])
    N = 200_000
    X = gen_mixture_sample(spec, N, 1)
    sd = np.sqrt([2.0, 0.5])
    assert np.all(np.abs(X.mean(axis=0) - [0.5, -0.3]) < 4 * sd / math.sqrt(N))


def test_triangle_component_counts():
    spec = MixtureSpec.triangle(0.25)
    N = 6000
    X = gen_mixture_sample(spec, N, 2)
    # a 0.25-variance triangle overlaps, so recover labels from the same stream
    rng = np.random.default_rng(2)
    labels = rng.choice(3, size=N, p=spec.weights)
    counts = np.bincount(labels, minlength=3)
    se = math.sqrt(N * (1 / 3) * (2 / 3))
    assert np.all(np.abs(counts - N / 3) < 4 * se)
    # the drawn points are consistent with those labels
    resid = X - spec.means[labels]
    assert abs(resid.var() - 0.25) < 0.02


def test_generator_deterministic():
    spec = MixtureSpec.triangle(0.1)
    assert np.array_equal(gen_mixture_sample(spec, 100, 7), gen_mixture_sample(spec, 100, 7))
    assert not np.array_equal(gen_mixture_sample(spec, 100, 7), gen_mixture_sample(spec, 100, 8))


def test_spec_validation_and_roundtrip():
    with pytest.raises(InvalidInputError):
        MixtureSpec([0.5, 0.6], [[0.0], [1.0]], [[[1.0]], [[1.0]]])
    with pytest.raises(InvalidInputError):
        MixtureSpec([1.0], [[0.0]], [[[-1.0]]])
    s = MixtureSpec.triangle(0.1)
    t = MixtureSpec.from_dict(s.to_dict())
    assert np.array_equal(t.means, s.means) and np.array_equal(t.covariances, s.covariances)
    np.testing.assert_allclose(s.means, TRIANGLE)


# -- metrics ----------------------------------------------------------------------------


def test_mode_recovery_examples():
    assert mode_recovery(TRIANGLE, TRIANGLE, 1e-9) == 3
    assert mode_recovery([[0.3, 0.0]], [[0.0, 0.0]], 0.3) == 0
    assert mode_recovery([[0.3, 0.0]], [[0.0, 0.0]], 0.30001) == 1
    assert mode_recovery(TRIANGLE + 0.005, TRIANGLE, 0.01) == 3
    assert mode_recovery(np.empty((0, 2)), TRIANGLE, 0.1) == 0


def test_hungarian_sum_examples():
    assert hungarian_sum(np.vstack([TRIANGLE, [[5.0, 5.0]]]), TRIANGLE) == 0.0
    assert hungarian_sum([[0.3, 0.0]], [[0.0, 0.0]]) == pytest.approx(0.3)
    value, flagged = hungarian_sum([[0.0, 1.0]], TRIANGLE, with_flag=True)
    assert flagged and value == 0.0


@given(points)
def test_hungarian_sum_4_vs_6_brute_force(rng):
    truth = rng.standard_normal((4, 2))
    est = rng.standard_normal((6, 2))
    D = np.linalg.norm(truth[:, None] - est[None], axis=2)
    best = min(sum(D[i, j] for i, j in enumerate(p)) for p in itertools.permutations(range(6), 4))
    assert hungarian_sum(est, truth) == pytest.approx(best, rel=1e-12)


def test_nearest_neighbor_examples():
    assert nearest_neighbor_sum(TRIANGLE, TRIANGLE) == 0.0
    assert nearest_neighbor_sum([[0.0, 0.0]], [[-1.0, 0.0], [1.0, 0.0]]) == 1.0


@given(points)
def test_nearest_neighbor_double_loop(rng):
    est = rng.standard_normal((5, 2))
    truth = rng.standard_normal((3, 2))
    want = sum(min(np.linalg.norm(e - t) for t in truth) for e in est)
    assert nearest_neighbor_sum(est, truth) == pytest.approx(want, rel=1e-12)


@given(points)
def test_metric_invariances(rng):
    est = rng.standard_normal((5, 2))
    truth = rng.standard_normal((3, 2))
    pe, pt = rng.permutation(5), rng.permutation(3)
    shift = rng.standard_normal(2) * 10
    for f in (hungarian_sum, nearest_neighbor_sum):
        v = f(est, truth)
        assert f(est[pe], truth[pt]) == pytest.approx(v, rel=1e-12)
        assert f(est + shift, truth + shift) == pytest.approx(v, rel=1e-9)
    assert mode_recovery(est[pe], truth[pt], 0.7) == mode_recovery(est, truth, 0.7)
    eps = np.sort(rng.uniform(0, 3, 10))
    mr = [mode_recovery(est, truth, e) for e in eps]
    assert all(a <= b for a, b in zip(mr, mr[1:]))
    D = np.linalg.norm(truth[:, None] - est[None], axis=2)
    relax = D.min(axis=1).sum()
    assert hungarian_sum(est, truth) >= relax - 1e-12
    if len(set(D.argmin(axis=1))) == 3:
        assert hungarian_sum(est, truth) == pytest.approx(relax, rel=1e-12)


def test_intervals():
    m, lo, hi = t_interval([1.0, 2.0, 3.0, 4.0])
    assert m == 2.5 and lo < 2.5 < hi
    assert hi - m == pytest.approx(3.182446305284263 * np.std([1, 2, 3, 4], ddof=1) / 2, rel=1e-9)
    med, lo, hi = median_bootstrap_interval(np.arange(21.0), seed=1)
    assert med == 10.0 and lo <= 10.0 <= hi
    assert median_bootstrap_interval(np.arange(21.0), seed=1) == (med, lo, hi)


# -- benchmark runner ------------------------------------------------------------------------


def test_mean_shift_unimodal_single_run():
    spec = MixtureSpec([1.0], [[0.0, 0.0]], [0.1 * np.eye(2)])
    cfg = BenchConfig(spec, (2000,), (3,), 1, {"mean-shift": [{"h": 0.05}]}, eps=0.05, T=200, B=2000)
    res = run_benchmark(cfg)
    assert res.values("mean-shift", 2000, 3, "MR").tolist() == [1.0]


def test_benchmark_deterministic_and_serialises():
    cfg = BenchConfig(
        MixtureSpec.triangle(0.1),
        (256,),
        (3,),
        2,
        {"gerve": [{"rho1": 0.03}], "mean-shift": [{"h": 0.05}, {"h": 0.1}]},
        eps=0.05,
        T=200,
        B=128,
        seed=4,
    )
    a, b = run_benchmark(cfg), run_benchmark(cfg)
    assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()
    assert a.to_csv().splitlines()[0] == "method,N,K,hp,metric,rep,value"
    # one best-hp summary row per (method, N, K, metric)
    assert len(a.summary) == 2 * 3
    hm = [s for s in a.summary if s["metric"] == "HM"]
    assert all(s["stat"] == "median" and s["ci_low"] <= s["value"] <= s["ci_high"] for s in hm)
    assert BenchConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


def test_benchmark_rejects_unknown_method():
    with pytest.raises(InvalidInputError):
        BenchConfig(MixtureSpec.triangle(0.1), (10,), (3,), 1, {"feature-significance": [{}]})
