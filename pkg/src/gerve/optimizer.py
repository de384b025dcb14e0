"""Natural-gradient ascent on the entropy-regularised mixture objective.

One iteration draws a mini-batch with replacement, estimates the data and
entropy gradients at the current iterate, then updates each component in
expectation-parameter coordinates::

    S_k   <- S_k - (2 rho / pi_k) (H_k + omega eta_k)
    mu_k  <- mu_k + (rho / pi_k) S_k_new^-1 (g_k + omega gamma_k)
    v_k   <- v_k + rho (f_k + omega phi_k)

The precision moves first and the mean step uses the new precision. The
result is projected back onto the parameter box after every step.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
from scipy.cluster.vq import kmeans2

from . import _kernels
from .errors import InvalidInputError, NumericalFailure, StalledPointError
from .mixture import (
    LOG_2PI,
    Domain,
    MixtureState,
    ParameterBounds,
    log_weights_from_logits,
    project_arrays,
)
from .objective import (
    EntropyConfig,
    covariance_factors,
    data_gradients_from_moments,
    draw_entropy_points,
    entropy_gradients_from_moments,
    entropy_terms,
)

log = logging.getLogger(__name__)

COVARIANCE_KINDS = ("full", "diagonal", "isotropic", "fixed")
TEMPERATURE_KINDS = ("constant", "power", "power_floor")
STEPSIZE_KINDS = ("robbins_monro", "coupled", "adaptive")


@dataclass(frozen=True)
class Schedule:
    """Annealing temperatures ``omega_t`` and step sizes ``rho_t`` for ``t >= 1``.

    Temperature kinds: ``constant`` (omega1), ``power`` (omega1 / t**beta),
    ``power_floor`` (omega1 / t**beta + omega_floor). Step-size kinds:
    ``robbins_monro`` (rho1 / t**alpha), ``coupled``
    (rho1 * (omega1 / omega_t)**gamma) and ``adaptive`` (the normalised
    mean-shift step, only meaningful for the fixed-covariance loop).
    """

    temperature: str = "power"
    omega1: float = 1.0
    beta: float = 1.0
    omega_floor: float = 0.0
    stepsize: str = "robbins_monro"
    rho1: float = 0.01
    alpha: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.temperature not in TEMPERATURE_KINDS:
            raise InvalidInputError(f"unknown temperature schedule {self.temperature!r}")
        if self.stepsize not in STEPSIZE_KINDS:
            raise InvalidInputError(f"unknown step-size schedule {self.stepsize!r}")
        if self.omega1 < 0 or self.omega_floor < 0 or self.beta < 0:
            raise InvalidInputError("temperatures must be non-negative and non-increasing")
        if not self.rho1 >= 0:
            raise InvalidInputError("rho1 must be non-negative")
        if self.stepsize == "coupled" and self.omega(1) <= 0:
            raise InvalidInputError("coupled step sizes need a positive temperature")

    @classmethod
    def constant(cls, omega: float, rho1: float, alpha: float = 0.0) -> "Schedule":
        return cls("constant", omega, 0.0, 0.0, "robbins_monro", rho1, alpha)

    def omega(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.temperature == "constant":
            out = np.full_like(t, self.omega1)
        else:
            out = self.omega1 / t**self.beta
            if self.temperature == "power_floor":
                out = out + self.omega_floor
        return float(out) if out.ndim == 0 else out

    def rho(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.stepsize == "robbins_monro":
            out = self.rho1 / t**self.alpha
        elif self.stepsize == "coupled":
            out = self.rho1 * (self.omega1 / np.asarray(self.omega(t))) ** self.gamma
        else:
            out = np.full_like(t, np.nan)
        return float(out) if out.ndim == 0 else out

    def with_constant_temperature(self, omega: float) -> "Schedule":
        """Same step sizes, temperature frozen at ``omega``.

        A coupled step size is evaluated against its original reference
        temperature, so it becomes constant too.
        """
        if self.stepsize == "coupled":
            rho = self.rho1 * (self.omega1 / omega) ** self.gamma if omega > 0 else self.rho1
            return Schedule("constant", omega, 0.0, 0.0, "robbins_monro", rho, 0.0)
        return replace(self, temperature="constant", omega1=omega, beta=0.0, omega_floor=0.0)

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "omega1": self.omega1,
            "beta": self.beta,
            "omega_floor": self.omega_floor,
            "stepsize": self.stepsize,
            "rho1": self.rho1,
            "alpha": self.alpha,
            "gamma": self.gamma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        return cls(**{k: d[k] for k in cls().to_dict() if k in d})


@dataclass(frozen=True)
class EarlyStop:
    check_every: int = 10
    mean_tol: float = 1e-2
    prec_rel_tol: float = 1e-1
    consecutive: int = 3

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class InitSpec:
    """How to build the starting mixture when no explicit state is given.

    ``uniform`` draws means uniformly in ``[low, high]`` (the data bounding
    box when unset); ``kmeans++`` uses k-means centroids with ++ seeding.
    All components start with covariance ``sigma2 * I`` and equal weights.
    """

    method: str = "uniform"
    sigma2: float = 1.0
    low: Optional[tuple] = None
    high: Optional[tuple] = None

    def __post_init__(self):
        if self.method not in ("uniform", "kmeans++"):
            raise InvalidInputError(f"unknown init method {self.method!r}")
        if not self.sigma2 > 0:
            raise InvalidInputError("initial variance must be positive")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "sigma2": self.sigma2,
            "low": None if self.low is None else list(self.low),
            "high": None if self.high is None else list(self.high),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InitSpec":
        low, high = d.get("low"), d.get("high")
        return cls(
            d.get("method", "uniform"),
            float(d.get("sigma2", 1.0)),
            None if low is None else tuple(low),
            None if high is None else tuple(high),
        )


@dataclass(frozen=True)
class FitConfig:
    T: int
    B: int
    bounds: ParameterBounds
    schedule: Schedule
    ecfg: EntropyConfig = EntropyConfig()
    early_stop: Optional[EarlyStop] = None
    seed: int = 0
    domain: Optional[Domain] = None
    covariance: str = "full"
    init: InitSpec = InitSpec()
    snapshot_every: int = 0

    def __post_init__(self):
        if int(self.T) < 1 or int(self.B) < 1:
            raise InvalidInputError("T and B must be >= 1")
        if self.covariance not in COVARIANCE_KINDS:
            raise InvalidInputError(f"covariance must be one of {COVARIANCE_KINDS}")

    def resolve_domain(self, dim: int) -> Domain:
        if self.domain is not None:
            if self.domain.dim != dim:
                raise InvalidInputError("configured domain dimension does not match the data")
            return self.domain
        return Domain.cube(self.bounds.mu_max, dim)

    def to_dict(self) -> dict:
        return {
            "T": int(self.T),
            "B": int(self.B),
            "bounds": self.bounds.to_dict(),
            "schedule": self.schedule.to_dict(),
            "ecfg": self.ecfg.to_dict(),
            "early_stop": None if self.early_stop is None else self.early_stop.to_dict(),
            "seed": int(self.seed),
            "domain": None if self.domain is None else self.domain.to_dict(),
            "covariance": self.covariance,
            "init": self.init.to_dict(),
            "snapshot_every": int(self.snapshot_every),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        es = d.get("early_stop")
        dom = d.get("domain")
        return cls(
            T=int(d["T"]),
            B=int(d["B"]),
            bounds=ParameterBounds.from_dict(d["bounds"]),
            schedule=Schedule.from_dict(d["schedule"]),
            ecfg=EntropyConfig.from_dict(d.get("ecfg", {})),
            early_stop=None if es is None else EarlyStop(**es),
            seed=int(d.get("seed", 0)),
            domain=None if dom is None else Domain.from_dict(dom),
            covariance=d.get("covariance", "full"),
            init=InitSpec.from_dict(d.get("init", {})),
            snapshot_every=int(d.get("snapshot_every", 0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FitConfig":
        return cls.from_dict(json.loads(text))


@dataclass
class Snapshot:
    iteration: int
    means: np.ndarray
    eigmax_sigma: np.ndarray
    weights: np.ndarray
    omega: float
    rho: float
    objective: float


@dataclass
class FitResult:
    final: MixtureState
    iterations_run: int
    stop_reason: str
    trajectory: list = field(default_factory=list)
    clamp_count: int = 0

    def trajectory_csv(self) -> str:
        """Rows ``(iter, k, mean_0..mean_{d-1}, eigmax_sigma, omega, rho)``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.final.dim
        w.writerow(["iter", "k"] + [f"mean_{j}" for j in range(d)] + ["eigmax_sigma", "omega", "rho"])
        for snap in self.trajectory:
            for k in range(snap.means.shape[0]):
                w.writerow(
                    [snap.iteration, k]
                    + [repr(float(x)) for x in snap.means[k]]
                    + [repr(float(snap.eigmax_sigma[k])), repr(float(snap.omega)), repr(float(snap.rho))]
                )
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "schema": "gerve/fit-result/1",
            "final": self.final.to_dict(),
            "weights": self.final.weights.tolist(),
            "iterations_run": self.iterations_run,
            "stop_reason": self.stop_reason,
            "clamp_count": self.clamp_count,
        }


# -- the mixture step --------------------------------------------------------


def _log_norms(precs: np.ndarray) -> np.ndarray:
    _, logdet = np.linalg.slogdet(precs)
    return -0.5 * precs.shape[1] * LOG_2PI + 0.5 * logdet


def _restrict(precs_new: np.ndarray, precs_old: np.ndarray, covariance: str) -> np.ndarray:
    if covariance == "full":
        return 0.5 * (precs_new + np.swapaxes(precs_new, 1, 2))
    if covariance == "fixed":
        return precs_old.copy()
    diag = np.einsum("kaa->ka", precs_new)
    if covariance == "isotropic":
        diag = np.repeat(diag.mean(axis=1, keepdims=True), diag.shape[1], axis=1)
    out = np.zeros_like(precs_new)
    idx = np.arange(diag.shape[1])
    out[:, idx, idx] = diag
    return out


_MEAN_SCALE = lambda w: 1.0 / w


def _step_arrays(means, precs, logits, batch, eps, omega, rho, domain, bounds, covariance):
    """One projected natural-gradient step on raw arrays.

    Returns ``(means, precs, logits, n_clamped, objective_estimate)``.
    """
    K, d = means.shape
    log_w = log_weights_from_logits(logits)
    weights = np.exp(log_w)
    log_norm = _log_norms(precs)
    B = batch.shape[0]
    s0, s1, s2 = _kernels.data_moments(batch, means, precs, log_norm)
    g, H, f = data_gradients_from_moments(precs, weights, B, s0, s1, s2)
    objective = float(weights @ s0) / B
    if omega > 0:
        Z = draw_entropy_points(means, covariance_factors(precs), eps)
        entropy, m0, m1, m2 = entropy_terms(means, precs, log_norm, log_w, Z, domain)
        eta, gamma, phi = entropy_gradients_from_moments(precs, weights, m0, m1, m2)
        H = H + omega * eta
        g = g + omega * gamma
        f = f + omega * phi
        objective += omega * entropy
    inv_pi = (1.0 / weights)[:, None, None]
    precs_new = _restrict(precs - 2.0 * rho * inv_pi * H, precs, covariance)
    # clamp the spectrum before it is inverted for the mean step
    _, precs_new, _, n_clamped = project_arrays(means, precs_new, logits, bounds, covariance)
    cov_new = np.linalg.inv(precs_new)
    means_new = means + rho * _MEAN_SCALE(weights)[:, None] * np.einsum("kab,kb->ka", cov_new, g)
    logits_new = logits + rho * f
    means_new, precs_new, logits_new, _ = project_arrays(means_new, precs_new, logits_new, bounds, covariance)
    return means_new, precs_new, logits_new, n_clamped, objective


def step_mixture(
    state: MixtureState,
    batch,
    omega: float,
    rho: float,
    domain: Domain,
    ecfg: EntropyConfig,
    rng: Optional[Union[np.random.Generator, int]] = None,
    bounds: Optional[ParameterBounds] = None,
    covariance: str = "full",
) -> MixtureState:
    """One natural-gradient step followed by projection.

    Entropy draws come from ``rng`` (``ecfg.seed`` when ``rng`` is None). With
    ``bounds=None`` a box that leaves the state unchanged is used, so only
    non-PD precisions are repaired. The number of components whose spectrum
    had to be clamped is stored on the result as ``state.clamped``.
    """
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(batch, dtype=np.float64)))
    if X.shape[0] < 1:
        raise InvalidInputError("batch must be non-empty")
    if X.shape[1] != state.dim:
        raise InvalidInputError("batch dimension does not match state")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(ecfg.seed if rng is None else rng)
    K, d = state.n_components, state.dim
    eps = gen.standard_normal((K, int(ecfg.n_entropy_samples), d)) if omega > 0 else None
    if bounds is None:
        bounds = _LooseBounds()
    means, precs, logits, n_clamped, _ = _step_arrays(
        np.ascontiguousarray(state.means),
        np.ascontiguousarray(state.precisions),
        state.logits.copy(),
        X,
        eps,
        omega,
        rho,
        domain,
        bounds,
        covariance,
    )
    out = MixtureState._from_raw(means, precs, logits)
    object.__setattr__(out, "clamped", n_clamped)
    return out


class _LooseBounds:
    mu_max = np.inf
    v_max = np.inf
    sigma2_min = 1e-300
    sigma2_max = 1e300


# -- initialisation ------------------------------------------------------------


def initial_state(samples: np.ndarray, K: int, spec: InitSpec, rng: np.random.Generator) -> MixtureState:
    X = np.asarray(samples, dtype=np.float64)
    d = X.shape[1]
    if spec.method == "uniform":
        low = X.min(axis=0) if spec.low is None else np.broadcast_to(np.asarray(spec.low, float), (d,))
        high = X.max(axis=0) if spec.high is None else np.broadcast_to(np.asarray(spec.high, float), (d,))
        means = rng.uniform(low, high, size=(K, d))
    else:
        seed = int(rng.integers(0, 2**32 - 1))
        if X.shape[0] <= K:
            means = X[rng.integers(0, X.shape[0], size=K)]
        else:
            means, _ = kmeans2(X, K, minit="++", seed=np.random.default_rng(seed))
    precs = np.repeat((np.eye(d) / spec.sigma2)[None], K, axis=0)
    return MixtureState._from_raw(means, precs, np.zeros(K - 1))


# -- the fitting loop ----------------------------------------------------------


def fit(
    samples,
    K: int,
    cfg: FitConfig,
    init: Optional[Union[MixtureState, InitSpec]] = None,
) -> FitResult:
    """Annealed natural-gradient ascent from ``init`` (default ``cfg.init``)."""
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(samples, dtype=np.float64)))
    N, d = X.shape
    if N < 1:
        raise InvalidInputError("need at least one sample")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("samples must be finite")
    rng = np.random.default_rng(cfg.seed)
    if isinstance(init, MixtureState):
        state0 = init
        if state0.dim != d:
            raise InvalidInputError("initial state dimension does not match samples")
        K = state0.n_components
    else:
        state0 = initial_state(X, int(K), init if init is not None else cfg.init, rng)
    domain = cfg.resolve_domain(d)
    bounds = cfg.bounds
    Be = int(cfg.ecfg.n_entropy_samples)
    B = int(cfg.B)
    full_batch = B == N

    means, precs, logits, clamps, _ = (*project_arrays(
        np.ascontiguousarray(state0.means), np.ascontiguousarray(state0.precisions),
        state0.logits.copy(), bounds, cfg.covariance), None)
    clamp_total = int(clamps)
    es = cfg.early_stop
    streak = 0
    trajectory = []
    stop_reason = "max-iter"
    t = 0
    omegas = np.atleast_1d(cfg.schedule.omega(np.arange(1, cfg.T + 1)))
    rhos = np.atleast_1d(cfg.schedule.rho(np.arange(1, cfg.T + 1)))
    if cfg.schedule.stepsize == "adaptive":
        raise InvalidInputError("the adaptive step size applies to fit_fixed_cov only")

    for t in range(1, int(cfg.T) + 1):
        omega = float(omegas[t - 1])
        rho = float(rhos[t - 1])
        batch = X if full_batch else X[rng.integers(0, N, size=B)]
        eps = rng.standard_normal((K, Be, d)) if omega > 0 else None
        # overflow surfaces as non-finite values, which are reported below
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            new_means, new_precs, new_logits, n_clamped, objective = _step_arrays(
                means, precs, logits, batch, eps, omega, rho, domain, bounds, cfg.covariance
            )
        if not (
            np.all(np.isfinite(new_means))
            and np.all(np.isfinite(new_precs))
            and np.all(np.isfinite(new_logits))
            and math.isfinite(objective)
        ):
            raise NumericalFailure(
                f"non-finite iterate at t={t} (omega={omega:.4g}, rho={rho:.4g}, objective={objective})"
            )
        clamp_total += n_clamped
        if es is not None and t % es.check_every == 0:
            dm = np.linalg.norm(new_means - means, axis=1)
            dS = np.linalg.norm(new_precs - precs, axis=(1, 2)) / np.linalg.norm(precs, axis=(1, 2))
            streak = streak + 1 if (np.all(dm < es.mean_tol) and np.all(dS < es.prec_rel_tol)) else 0
        means, precs, logits = new_means, new_precs, new_logits
        if cfg.snapshot_every and (t % cfg.snapshot_every == 0 or t == cfg.T):
            trajectory.append(_snapshot(t, means, precs, logits, omega, rho, objective))
        if es is not None and streak >= es.consecutive:
            stop_reason = "early-stop"
            break

    final = MixtureState._from_raw(means, precs, logits)
    return FitResult(final, t, stop_reason, trajectory, clamp_total)


def _snapshot(t, means, precs, logits, omega, rho, objective) -> Snapshot:
    eig_sigma = 1.0 / np.linalg.eigvalsh(precs)[:, 0]
    return Snapshot(t, means.copy(), eig_sigma, np.exp(log_weights_from_logits(logits)), omega, rho, objective)


# -- fixed covariance / mean-shift ----------------------------------------------


def _iso_density(X: np.ndarray, mean: np.ndarray, s: float) -> np.ndarray:
    d = X.shape[1]
    r2 = np.einsum("na,na->n", X - mean, X - mean)
    return np.exp(0.5 * d * (math.log(s) - LOG_2PI) - 0.5 * s * r2)


def step_fixed_cov(mean, batch, s: float, rho: float) -> np.ndarray:
    """``mu + (rho / B) sum_i (X_i - mu) q(X_i)`` with ``q = N(mu, I / s)``."""
    if not s > 0:
        raise InvalidInputError("precision s must be positive")
    X = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    mu = np.asarray(mean, dtype=np.float64)
    q = _iso_density(X, mu, s)
    return mu + (rho / X.shape[0]) * (q @ (X - mu))


def adaptive_step(mean, batch, s: float) -> float:
    """Normalising step ``B / sum_b q(X_b)`` that turns the update into mean-shift."""
    X = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    total = _iso_density(X, np.asarray(mean, dtype=np.float64), s).sum()
    if total == 0.0:
        raise StalledPointError("kernel weights underflowed at the current mean")
    return X.shape[0] / total


def mean_shift_step(mean, samples, h: float) -> np.ndarray:
    """Gaussian-kernel mean-shift fixed-point update; ``h`` is the kernel variance."""
    X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    mu = np.asarray(mean, dtype=np.float64)
    w = np.exp(-0.5 * np.einsum("na,na->n", X - mu, X - mu) / h)
    total = w.sum()
    if total == 0.0:
        raise StalledPointError("all kernel weights underflowed")
    return (w @ X) / total


@dataclass
class FixedCovResult:
    mean: np.ndarray
    trajectory: np.ndarray
    iterations_run: int
    stop_reason: str


def fit_fixed_cov(samples, init_mean, s: float, cfg: FitConfig) -> FixedCovResult:
    """Mini-batch fixed-covariance ascent (a single mean, precision ``s I``).

    ``cfg.schedule.stepsize == "adaptive"`` uses ``rho_t = B / sum_b q(X_b)``,
    i.e. stochastic Gaussian mean-shift with bandwidth ``1/s``.
    """
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(samples, dtype=np.float64)))
    N = X.shape[0]
    B = int(cfg.B)
    rng = np.random.default_rng(cfg.seed)
    mu = np.asarray(init_mean, dtype=np.float64).copy()
    traj = [mu.copy()]
    adaptive = cfg.schedule.stepsize == "adaptive"
    es = cfg.early_stop
    streak = 0
    stop = "max-iter"
    t = 0
    for t in range(1, int(cfg.T) + 1):
        batch = X if B == N else X[rng.integers(0, N, size=B)]
        rho = adaptive_step(mu, batch, s) if adaptive else cfg.schedule.rho(t)
        new = step_fixed_cov(mu, batch, s, rho)
        if not np.all(np.isfinite(new)):
            raise NumericalFailure(f"non-finite mean at t={t}")
        if es is not None and t % es.check_every == 0:
            streak = streak + 1 if np.linalg.norm(new - mu) < es.mean_tol else 0
        mu = new
        traj.append(mu.copy())
        if es is not None and streak >= es.consecutive:
            stop = "early-stop"
            break
    return FixedCovResult(mu, np.array(traj), t, stop)
