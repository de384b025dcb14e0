"""Empirical objective, box-restricted entropy and its stochastic gradients.

The objective is ``mean_i q(X_i) + omega * H_S(q)`` with
``H_S(q) = -int_S q log q``. Gradients are reported with respect to
``(mu_k, Sigma_k, pi_k)`` (``pi_K = 1 - sum_{k<K} pi_k``); the matrix blocks are
symmetric, so a symmetric perturbation ``dSigma`` changes the objective by
``trace(G dSigma)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .errors import DimensionMismatchError, InvalidInputError
from .mixture import Domain, MixtureState

# log(DBL_MIN): floor for log q at points where the mixture density underflows
LOG_FLOOR = float(np.log(np.finfo(np.float64).tiny))


@dataclass(frozen=True)
class EntropyConfig:
    n_entropy_samples: int = 100
    seed: int = 0

    def __post_init__(self):
        if int(self.n_entropy_samples) < 2:
            raise InvalidInputError("n_entropy_samples must be >= 2")

    def to_dict(self) -> dict:
        return {"n_entropy_samples": int(self.n_entropy_samples), "seed": int(self.seed)}

    @classmethod
    def from_dict(cls, d: dict) -> "EntropyConfig":
        return cls(int(d.get("n_entropy_samples", 100)), int(d.get("seed", 0)))


@dataclass
class GradientBundle:
    """Per-component gradient blocks; any block may be absent (``None``).

    ``g`` (K, d) and ``H`` (K, d, d) are the data-term gradients with respect
    to the mean and covariance, ``f`` (K-1,) with respect to the weights;
    ``gamma``, ``eta`` and ``phi`` are the matching entropy gradients.
    """

    g: Optional[np.ndarray] = None
    H: Optional[np.ndarray] = None
    f: Optional[np.ndarray] = None
    eta: Optional[np.ndarray] = None
    gamma: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None
    entropy: Optional[float] = field(default=None, compare=False)

    def merge(self, other: "GradientBundle") -> "GradientBundle":
        kw = {}
        for name in ("g", "H", "f", "eta", "gamma", "phi", "entropy"):
            a, b = getattr(self, name), getattr(other, name)
            if a is not None and b is not None:
                raise ValueError(f"both bundles define {name}")
            kw[name] = a if a is not None else b
        return GradientBundle(**kw)

    def objective_gradient(self, omega: float):
        """Assemble ``(d/dmu, d/dSigma, d/dpi)`` of data term + omega * entropy."""
        return (self.g + omega * self.gamma, self.H + omega * self.eta, self.f + omega * self.phi)


def _sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def component_normals(seed: int, K: int, M: int, d: int) -> np.ndarray:
    """Standard-normal draws, one independent stream per component.

    Component ``k`` uses ``SeedSequence([seed, k])`` so each block is fixed by
    ``(seed, k)`` alone.
    """
    out = np.empty((K, M, d))
    for k in range(K):
        out[k] = np.random.default_rng(np.random.SeedSequence([int(seed), k])).standard_normal((M, d))
    return out


def covariance_factors(precs: np.ndarray) -> np.ndarray:
    """Lower Cholesky factors of ``inv(S_k)``."""
    cov = np.linalg.inv(precs)
    return np.linalg.cholesky(_sym(cov))


def draw_entropy_points(means, chols, eps) -> np.ndarray:
    return np.ascontiguousarray(means[:, None, :] + np.einsum("kmb,kab->kma", eps, chols))


def entropy_terms(means, precs, log_norm, log_w, Z, domain: Domain):
    """MC entropy estimate and the moments used by its gradients.

    Differentiating ``-int_S q log q`` gives ``-int_S dq (log q + 1)``. The
    ``+ 1`` part is ``-d/dtheta int_S q``, which vanishes only when ``S`` holds
    all of the mass, so the moments are taken of ``(log q + 1) 1_S``. The
    entropy itself is recovered by subtracting the in-box fraction.

    The first and second moments come back as sample covariances between
    the weight and ``r`` or ``r r^T``. The score terms they multiply have
    mean zero under each component, so this leave-one-out baseline keeps the
    gradient estimators unbiased and removes most of their variance.
    """
    M = Z.shape[1]
    if M < 2:
        raise InvalidInputError("the entropy estimators need at least two draws per component")
    e0, e1, e2 = _kernels.entropy_moments(
        Z, means, precs, log_norm, log_w, domain.lower, domain.upper, LOG_FLOOR, 1.0
    )
    inside = np.all((Z >= domain.lower) & (Z <= domain.upper), axis=2).sum(axis=1)
    weights = np.exp(log_w)
    entropy = -float(weights @ (e0 - inside)) / M
    m0 = e0 / M
    R = Z - means[:, None, :]
    c1 = (e1 / M - m0[:, None] * R.mean(axis=1)) * (M / (M - 1))
    c2 = (e2 / M - m0[:, None, None] * np.einsum("kma,kmb->kab", R, R) / M) * (M / (M - 1))
    return entropy, m0, c1, c2


def entropy_gradients_from_moments(precs, weights, m0, c1, c2):
    """Correctly-signed score-function estimators of the entropy gradients.

    With ``w = (log q(Z) + 1) 1_S(Z)`` and ``r = Z - mu_k`` for draws
    ``Z ~ q_k``: ``m0`` is the MC mean of ``w``, and ``c1``, ``c2`` are the
    sample covariances of ``w`` with ``r`` and with ``r r^T``.
    """
    pk = weights[:, None, None]
    ScS = np.einsum("kab,kbc,kcd->kad", precs, c2, precs)
    eta = _sym(-0.5 * pk * ScS)
    gamma = -weights[:, None] * np.einsum("kab,kb->ka", precs, c1)
    phi = -(m0[:-1] - m0[-1])
    return eta, gamma, phi


def data_gradients_from_moments(precs, weights, B, s0, s1, s2):
    pk = weights[:, None, None]
    SsS = np.einsum("kab,kbc,kcd->kad", precs, s2, precs)
    H = _sym(0.5 * pk * (SsS - s0[:, None, None] * precs) / B)
    g = weights[:, None] * np.einsum("kab,kb->ka", precs, s1) / B
    f = (s0[:-1] - s0[-1]) / B
    return g, H, f


def _check_points(state: MixtureState, X) -> np.ndarray:
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    if X.shape[0] < 1:
        raise InvalidInputError("need at least one sample")
    if X.shape[1] != state.dim:
        raise DimensionMismatchError(f"samples have dimension {X.shape[1]}, state has {state.dim}")
    return X


def entropy_mc(state: MixtureState, domain: Domain, ecfg: EntropyConfig = EntropyConfig()) -> float:
    """Stratified MC estimate of ``-int_S q log q`` (B_e draws per component)."""
    return _entropy_pass(state, domain, ecfg)[0]


def _entropy_pass(state: MixtureState, domain: Domain, ecfg: EntropyConfig):
    if domain.dim != state.dim:
        raise DimensionMismatchError("domain and state dimensions differ")
    means, precs, log_norm, log_w = state.kernel_args()
    eps = component_normals(ecfg.seed, state.n_components, int(ecfg.n_entropy_samples), state.dim)
    Z = draw_entropy_points(means, covariance_factors(precs), eps)
    return entropy_terms(means, precs, log_norm, log_w, Z, domain)


def empirical_objective(
    state: MixtureState,
    samples,
    omega: float,
    domain: Domain,
    ecfg: EntropyConfig = EntropyConfig(),
) -> float:
    if omega < 0:
        raise InvalidInputError("omega must be non-negative")
    X = _check_points(state, samples)
    data = float(np.exp(_kernels.mixture_logpdf(X, *state.kernel_args())).mean())
    if omega == 0:
        return data
    return data + omega * entropy_mc(state, domain, ecfg)


def data_gradients(state: MixtureState, batch) -> GradientBundle:
    """Batch estimators of the data-term gradient (``g``, ``H``, ``f``)."""
    X = _check_points(state, batch)
    means, precs, log_norm, _ = state.kernel_args()
    s0, s1, s2 = _kernels.data_moments(X, means, precs, log_norm)
    g, H, f = data_gradients_from_moments(precs, state.weights, X.shape[0], s0, s1, s2)
    return GradientBundle(g=g, H=H, f=f)


def entropy_gradients(state: MixtureState, domain: Domain, ecfg: EntropyConfig = EntropyConfig()) -> GradientBundle:
    """MC estimators of the entropy gradient (``eta``, ``gamma``, ``phi``).

    The same per-component draws feed all three blocks and the entropy value.
    """
    entropy, m0, m1, m2 = _entropy_pass(state, domain, ecfg)
    eta, gamma, phi = entropy_gradients_from_moments(state.precisions, state.weights, m0, m1, m2)
    return GradientBundle(eta=eta, gamma=gamma, phi=phi, entropy=entropy)
