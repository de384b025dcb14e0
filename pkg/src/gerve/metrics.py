"""Mode-estimation metrics, synthetic mixtures and confidence intervals."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .bootstrap import hungarian
from .errors import InvalidInputError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MixtureSpec:
    """Ground-truth Gaussian mixture used to simulate benchmark data."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        cov = np.asarray(self.covariances, dtype=np.float64)
        if cov.ndim == 2:
            cov = cov[None]
        K, d = mu.shape
        if w.shape[0] != K or cov.shape != (K, d, d):
            raise InvalidInputError("weights, means and covariances disagree on K or d")
        if np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=0, abs_tol=1e-12):
            raise InvalidInputError("weights must lie on the simplex")
        for C in cov:
            if not np.allclose(C, C.T) or np.linalg.eigvalsh(C).min() <= 0:
                raise InvalidInputError("covariances must be symmetric positive definite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)

    @classmethod
    def triangle(cls, sigma2: float) -> "MixtureSpec":
        """Three equal isotropic components on an equilateral triangle."""
        c = math.cos(math.pi / 6)
        means = np.array([[0.0, 1.0], [c, -0.5], [-c, -0.5]])
        return cls(np.full(3, 1 / 3), means, np.repeat(sigma2 * np.eye(2)[None], 3, axis=0))

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "means": self.means.tolist(), "covariances": self.covariances.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureSpec":
        return cls(d["weights"], d["means"], d["covariances"])


def gen_mixture_sample(spec: MixtureSpec, N: int, seed: int) -> np.ndarray:
    if int(N) < 1:
        raise InvalidInputError("N must be >= 1")
    rng = np.random.default_rng(seed)
    labels = rng.choice(spec.weights.shape[0], size=int(N), p=spec.weights)
    L = np.linalg.cholesky(spec.covariances)
    eps = rng.standard_normal((int(N), spec.dim))
    return spec.means[labels] + np.einsum("nab,nb->na", L[labels], eps)


def _as_points(a, d=None) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, d if d is not None else 0)
    return np.atleast_2d(arr)


def _distances(est, truth) -> np.ndarray:
    return np.linalg.norm(est[:, None, :] - truth[None, :, :], axis=2)


def mode_recovery(estimates, truth, eps: float) -> int:
    """Number of true modes with an estimate strictly closer than ``eps``."""
    T = _as_points(truth)
    E = _as_points(estimates, T.shape[1])
    if E.shape[0] == 0 or T.shape[0] == 0:
        return 0
    return int(np.count_nonzero(_distances(E, T).min(axis=0) < eps))


def hungarian_sum(estimates, truth, with_flag: bool = False):
    """Minimum total distance over injective truth-to-estimate assignments.

    With fewer estimates than true modes the assignment runs over the smaller
    side and the result is flagged (``with_flag=True`` returns
    ``(value, flagged)``).
    """
    T = _as_points(truth)
    E = _as_points(estimates, T.shape[1])
    flagged = E.shape[0] < T.shape[0]
    if flagged:
        log.info("hungarian_sum: %d estimates for %d true modes", E.shape[0], T.shape[0])
    if E.shape[0] == 0 or T.shape[0] == 0:
        value = 0.0
    else:
        D = _distances(E, T).T
        r, c = hungarian(D)
        value = float(D[r, c].sum())
    return (value, flagged) if with_flag else value


def nearest_neighbor_sum(estimates, truth) -> float:
    T = _as_points(truth)
    E = _as_points(estimates, T.shape[1])
    if E.shape[0] == 0:
        return 0.0
    return float(_distances(E, T).min(axis=1).sum())


def t_interval(values, level: float = 0.95) -> tuple[float, float, float]:
    """Mean and Student-t confidence interval."""
    v = np.asarray(values, dtype=np.float64)
    m = float(v.mean())
    if v.size < 2:
        return m, math.nan, math.nan
    half = stats.t.ppf(0.5 + level / 2, v.size - 1) * v.std(ddof=1) / math.sqrt(v.size)
    return m, m - half, m + half


def median_bootstrap_interval(values, level: float = 0.95, n_boot: int = 5000, seed: int = 0):
    """Median and percentile-bootstrap confidence interval."""
    v = np.asarray(values, dtype=np.float64)
    med = float(np.median(v))
    rng = np.random.default_rng(seed)
    boots = np.median(v[rng.integers(0, v.size, size=(n_boot, v.size))], axis=1)
    lo, hi = np.quantile(boots, [0.5 - level / 2, 0.5 + level / 2])
    return med, float(lo), float(hi)
