"""Gaussian mixture representation, densities and parameter maps.

Components are stored by mean and *precision* ``S = Sigma^-1``; the
natural-gradient updates act on the precision directly and the covariance is
derived on demand. Mixture weights are carried as ``K-1`` free logits
``v_k = log(pi_k / pi_K)`` with ``v_K`` pinned to zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr

from . import _kernels
from .errors import DegeneratePointError, DimensionMismatchError, InvalidInputError

LOG_2PI = math.log(2.0 * math.pi)

# relative slack used when deciding whether a state already lies in the box
FEASIBILITY_RTOL = 1e-9


def _frozen(a, dtype=np.float64) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    mean: np.ndarray
    precision: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        prec = np.atleast_2d(np.asarray(self.precision, dtype=np.float64))
        if mean.ndim != 1:
            raise InvalidInputError("mean must be a vector")
        d = mean.shape[0]
        if prec.shape != (d, d):
            raise DimensionMismatchError(f"precision shape {prec.shape} does not match mean length {d}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(prec))):
            raise InvalidInputError("component parameters must be finite")
        scale = max(np.abs(prec).max(), np.finfo(float).tiny)
        if np.abs(prec - prec.T).max() > 1e-12 * scale:
            raise InvalidInputError("precision must be symmetric")
        if np.linalg.eigvalsh(prec).min() <= 0:
            raise InvalidInputError("precision must be positive definite")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "precision", _frozen(prec))

    @classmethod
    def from_covariance(cls, mean, covariance) -> "GaussianComponent":
        cov = np.atleast_2d(np.asarray(covariance, dtype=np.float64))
        prec = np.linalg.inv(cov)
        return cls(mean, 0.5 * (prec + prec.T))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        cov = np.linalg.inv(self.precision)
        return 0.5 * (cov + cov.T)

    @property
    def log_norm(self) -> float:
        _, logdet = np.linalg.slogdet(self.precision)
        return -0.5 * self.dim * LOG_2PI + 0.5 * logdet


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box ``[lower, upper]`` on which entropy is integrated."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=np.float64))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionMismatchError("lower and upper must be vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvalidInputError("domain bounds must be finite")
        if np.any(lo >= hi):
            raise InvalidInputError("domain requires lower < upper componentwise")
        object.__setattr__(self, "lower", _frozen(lo))
        object.__setattr__(self, "upper", _frozen(hi))

    @classmethod
    def cube(cls, half_width: float, dim: int) -> "Domain":
        return cls(-half_width * np.ones(dim), half_width * np.ones(dim))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def contains(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)

    def __eq__(self, other):
        return (
            isinstance(other, Domain)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Domain":
        return cls(d["lower"], d["upper"])


@dataclass(frozen=True)
class ParameterBounds:
    """Compact parameter box: mean half-width, covariance spectrum, logit range."""

    mu_max: float
    sigma2_min: float
    sigma2_max: float
    v_max: float = 6.0

    def __post_init__(self):
        for name in ("mu_max", "sigma2_min", "sigma2_max", "v_max"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise InvalidInputError(f"{name} must be a positive finite number, got {val}")
        if not self.sigma2_min < self.sigma2_max:
            raise InvalidInputError("need sigma2_min < sigma2_max")

    def check_weight_floor(self, K: int, eps: float) -> bool:
        """Whether ``v_max`` lets ``K-1`` components drop to weight ``eps`` at once."""
        if K <= 1:
            return True
        arg = 1.0 / eps - (K - 1)
        return arg <= 0 or self.v_max >= 0.5 * math.log(arg)

    def to_dict(self) -> dict:
        return {
            "mu_max": self.mu_max,
            "sigma2_min": self.sigma2_min,
            "sigma2_max": self.sigma2_max,
            "v_max": self.v_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterBounds":
        return cls(float(d["mu_max"]), float(d["sigma2_min"]), float(d["sigma2_max"]), float(d.get("v_max", 6.0)))


def weights_from_logits(logits) -> np.ndarray:
    v = np.asarray(logits, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("logits must be finite")
    full = np.append(v, 0.0)
    full -= full.max()
    e = np.exp(full)
    return e / e.sum()


def logits_from_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.size == 0 or np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise InvalidInputError("weights must be positive and finite")
    lw = np.log(w)
    return lw[:-1] - lw[-1]


def log_weights_from_logits(logits: np.ndarray) -> np.ndarray:
    full = np.append(np.asarray(logits, dtype=np.float64), 0.0)
    m = full.max()
    return full - (m + math.log(np.exp(full - m).sum()))


@dataclass(frozen=True, eq=False)
class MixtureState:
    """Full variational parameter: ``K-1`` logits and ``K`` Gaussian components."""

    logits: np.ndarray
    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) < 1:
            raise InvalidInputError("a mixture needs at least one component")
        if not all(isinstance(c, GaussianComponent) for c in comps):
            raise InvalidInputError("components must be GaussianComponent instances")
        d = comps[0].dim
        if any(c.dim != d for c in comps):
            raise DimensionMismatchError("all components must share one dimension")
        v = np.asarray(self.logits, dtype=np.float64).reshape(-1)
        if v.shape[0] != len(comps) - 1:
            raise DimensionMismatchError(f"expected {len(comps) - 1} logits, got {v.shape[0]}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("logits must be finite")
        object.__setattr__(self, "logits", _frozen(v))
        object.__setattr__(self, "components", comps)

    # -- construction -----------------------------------------------------
    @classmethod
    def from_arrays(
        cls,
        means,
        precisions=None,
        *,
        covariances=None,
        weights=None,
        logits=None,
    ) -> "MixtureState":
        means = np.atleast_2d(np.asarray(means, dtype=np.float64))
        K, d = means.shape
        if (precisions is None) == (covariances is None):
            raise InvalidInputError("give exactly one of precisions or covariances")
        if precisions is not None:
            comps = [GaussianComponent(means[k], np.asarray(precisions, dtype=float)[k]) for k in range(K)]
        else:
            covs = np.asarray(covariances, dtype=np.float64)
            comps = [GaussianComponent.from_covariance(means[k], covs[k]) for k in range(K)]
        if logits is not None and weights is not None:
            raise InvalidInputError("give at most one of weights or logits")
        if logits is None:
            logits = np.zeros(K - 1) if weights is None else logits_from_weights(weights)
        return cls(np.asarray(logits, dtype=np.float64), tuple(comps))

    @classmethod
    def _from_raw(cls, means, precs, logits) -> "MixtureState":
        """Trusted constructor for already-validated optimiser arrays."""
        comps = []
        for k in range(means.shape[0]):
            c = object.__new__(GaussianComponent)
            object.__setattr__(c, "mean", _frozen(means[k]))
            object.__setattr__(c, "precision", _frozen(precs[k]))
            comps.append(c)
        state = object.__new__(cls)
        object.__setattr__(state, "logits", _frozen(logits))
        object.__setattr__(state, "components", tuple(comps))
        return state

    # -- views --------------------------------------------------------------
    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def weights(self) -> np.ndarray:
        return weights_from_logits(self.logits)

    @property
    def log_weights(self) -> np.ndarray:
        return log_weights_from_logits(self.logits)

    @property
    def means(self) -> np.ndarray:
        return np.stack([c.mean for c in self.components])

    @property
    def precisions(self) -> np.ndarray:
        return np.stack([c.precision for c in self.components])

    @property
    def covariances(self) -> np.ndarray:
        return np.stack([c.covariance for c in self.components])

    @property
    def log_norms(self) -> np.ndarray:
        return np.array([c.log_norm for c in self.components])

    def kernel_args(self):
        return (
            np.ascontiguousarray(self.means),
            np.ascontiguousarray(self.precisions),
            self.log_norms,
            self.log_weights,
        )

    # -- serialisation ------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "logits": self.logits.tolist(),
            "components": [
                {"mean": c.mean.tolist(), "precision": c.precision.tolist()} for c in self.components
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureState":
        comps = tuple(GaussianComponent(c["mean"], c["precision"]) for c in d["components"])
        return cls(np.asarray(d["logits"], dtype=np.float64), comps)

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "MixtureState":
        return cls.from_dict(json.loads(text))

    def allclose(self, other: "MixtureState", rtol=1e-12, atol=0.0) -> bool:
        return (
            self.n_components == other.n_components
            and np.allclose(self.logits, other.logits, rtol=rtol, atol=atol)
            and np.allclose(self.means, other.means, rtol=rtol, atol=atol)
            and np.allclose(self.precisions, other.precisions, rtol=rtol, atol=atol)
        )

    def __eq__(self, other):
        if not isinstance(other, MixtureState):
            return NotImplemented
        return (
            self.n_components == other.n_components
            and np.array_equal(self.logits, other.logits)
            and all(
                np.array_equal(a.mean, b.mean) and np.array_equal(a.precision, b.precision)
                for a, b in zip(self.components, other.components)
            )
        )

    __hash__ = None


def _points(x, d: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != d:
        raise DimensionMismatchError(f"points have dimension {arr.shape[1]}, expected {d}")
    return np.ascontiguousarray(arr), single


def component_density(comp: GaussianComponent, x):
    """Gaussian density of one component at ``x`` (a point or an (n, d) array)."""
    X, single = _points(x, comp.dim)
    lp = _kernels.component_logpdf(
        X, comp.mean[None, :].copy(), comp.precision[None, :, :].copy(), np.array([comp.log_norm])
    )[:, 0]
    out = np.exp(lp)
    return float(out[0]) if single else out


def mixture_logpdf(state: MixtureState, x):
    X, single = _points(x, state.dim)
    out = _kernels.mixture_logpdf(X, *state.kernel_args())
    return float(out[0]) if single else out


def mixture_density(state: MixtureState, x):
    X, single = _points(x, state.dim)
    means, precs, log_norm, log_w = state.kernel_args()
    q = np.exp(_kernels.component_logpdf(X, means, precs, log_norm)) @ np.exp(log_w)
    return float(q[0]) if single else q


def log_responsibilities(state: MixtureState, X: np.ndarray) -> np.ndarray:
    means, precs, log_norm, log_w = state.kernel_args()
    lp = _kernels.component_logpdf(X, means, precs, log_norm) + log_w[None, :]
    m = lp.max(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        return lp - (m + np.log(np.exp(lp - m).sum(axis=1, keepdims=True)))


def responsibilities(state: MixtureState, x):
    """Posterior component probabilities, computed in log space."""
    X, single = _points(x, state.dim)
    lr = log_responsibilities(state, X)
    if not np.all(np.isfinite(lr)):
        raise DegeneratePointError("mixture density is zero (or non-finite) at a query point")
    r = np.exp(lr)
    r /= r.sum(axis=1, keepdims=True)
    return r[0] if single else r


# -- projection onto the compact set ----------------------------------------


def project_arrays(means, precs, logits, bounds: ParameterBounds, covariance: str = "full"):
    """Clip means, precision spectra and logits into ``bounds``.

    Works on raw arrays (modified copies are returned). The precision spectrum
    is clipped to ``[1/sigma2_max, 1/sigma2_min]``, which is the covariance
    spectrum clip ``[sigma2_min, sigma2_max]`` expressed on ``S``; non-positive
    eigenvalues left by an overshooting step land on ``1/sigma2_max``.
    Returns ``(means, precs, logits, n_clamped)`` where ``n_clamped`` counts
    components whose spectrum had to be modified.
    """
    means = np.clip(means, -bounds.mu_max, bounds.mu_max)
    logits = np.clip(logits, -bounds.v_max, bounds.v_max)
    lo = 1.0 / bounds.sigma2_max
    hi = 1.0 / bounds.sigma2_min
    slack_lo = lo * (1.0 - FEASIBILITY_RTOL)
    slack_hi = hi * (1.0 + FEASIBILITY_RTOL)
    precs = np.array(precs, dtype=np.float64, copy=True)
    n_clamped = 0
    if covariance in ("diagonal", "isotropic", "fixed") or precs.shape[1] == 1:
        diag = np.einsum("kaa->ka", precs)
        bad = np.any((diag < slack_lo) | (diag > slack_hi), axis=1)
        if np.any(bad):
            n_clamped = int(bad.sum())
            for k in np.flatnonzero(bad):
                np.fill_diagonal(precs[k], np.clip(diag[k], lo, hi))
        return means, precs, logits, n_clamped
    evals, evecs = np.linalg.eigh(precs)
    bad = np.any((evals < slack_lo) | (evals > slack_hi), axis=1)
    for k in np.flatnonzero(bad):
        n_clamped += 1
        ev = np.clip(evals[k], lo, hi)
        S = (evecs[k] * ev) @ evecs[k].T
        precs[k] = 0.5 * (S + S.T)
    return means, precs, logits, n_clamped


def project_to_bounds(state: MixtureState, bounds: ParameterBounds) -> MixtureState:
    """Projection onto the compact parameter set; identity on feasible states."""
    means, precs, logits, _ = project_arrays(state.means, state.precisions, state.logits, bounds)
    return MixtureState._from_raw(means, precs, logits)


def is_feasible(state: MixtureState, bounds: ParameterBounds) -> bool:
    if np.any(np.abs(state.means) > bounds.mu_max) or np.any(np.abs(state.logits) > bounds.v_max):
        return False
    ev = 1.0 / np.linalg.eigvalsh(state.precisions)
    return bool(
        np.all(ev >= bounds.sigma2_min * (1 - 10 * FEASIBILITY_RTOL))
        and np.all(ev <= bounds.sigma2_max * (1 + 10 * FEASIBILITY_RTOL))
    )


# -- canonical labelling ----------------------------------------------------


def canonical_permutation(state: MixtureState) -> list[int]:
    keys = [tuple(np.concatenate([c.mean, c.precision.ravel()]).tolist()) for c in state.components]
    return sorted(range(state.n_components), key=lambda k: keys[k])


def permute(state: MixtureState, order: Sequence[int]) -> MixtureState:
    order = list(order)
    full = np.append(state.logits, 0.0)[order]
    logits = full[:-1] - full[-1]
    return MixtureState(logits, tuple(state.components[k] for k in order))


def canonical_order(state: MixtureState) -> MixtureState:
    """Sort components lexicographically by (mean, vectorised precision)."""
    order = canonical_permutation(state)
    if order == list(range(state.n_components)):
        return state
    return permute(state, order)


# -- truncation diagnostic --------------------------------------------------


def outside_mass(
    comp: GaussianComponent,
    domain: Domain,
    n_mc: int = 100_000,
    rng: Optional[np.random.Generator | int] = None,
) -> float:
    """Probability mass a component places outside ``domain``.

    Exact (product of normal-CDF differences) for diagonal precisions,
    Monte-Carlo otherwise.
    """
    if comp.dim != domain.dim:
        raise DimensionMismatchError("component and domain dimensions differ")
    S = comp.precision
    if np.count_nonzero(S - np.diag(np.diag(S))) == 0:
        sd = 1.0 / np.sqrt(np.diag(S))
        hi = ndtr((domain.upper - comp.mean) / sd)
        lo = ndtr((domain.lower - comp.mean) / sd)
        inside = float(np.prod(hi - lo))
        return min(1.0, max(0.0, 1.0 - inside))
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    L = np.linalg.cholesky(comp.covariance)
    Z = comp.mean + gen.standard_normal((int(n_mc), comp.dim)) @ L.T
    return float(1.0 - domain.contains(Z).mean())
