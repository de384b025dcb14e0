"""Named hyperparameter sets for the three experiment families.

``triangle-cluster`` and ``triangle-modes`` target the synthetic triangle
mixtures; ``hotspot`` targets point data normalised to a rectangle of area
about one and padded out to ``[-2, 2]^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from .bootstrap import BootstrapConfig
from .errors import InvalidInputError
from .mixture import Domain, ParameterBounds
from .modes import PruneMergeConfig
from .objective import EntropyConfig
from .optimizer import EarlyStop, FitConfig, InitSpec, Schedule


@dataclass(frozen=True)
class Preset:
    name: str
    K: int
    fit: FitConfig
    prune_merge: PruneMergeConfig
    bootstrap: Optional[BootstrapConfig] = None
    omega_grid: Optional[tuple] = None

    @property
    def sigma2_init(self) -> float:
        return self.fit.init.sigma2


def mode_sigma2_min(N: int, d: int) -> float:
    """Lower covariance bound ``N^(-2/(d+6))``: a squared mean-shift bandwidth rate."""
    return float(N) ** (-2.0 / (d + 6))


def triangle_cluster(K: int = 7, seed: int = 0) -> Preset:
    fit = FitConfig(
        T=40000,
        B=1000,
        bounds=ParameterBounds(mu_max=5.0, sigma2_min=0.1, sigma2_max=4.0, v_max=6.0),
        schedule=Schedule("power_floor", 50.0, 1.1, 0.004, "coupled", 1e-4, 0.0, 0.7),
        ecfg=EntropyConfig(100, seed),
        seed=seed,
        init=InitSpec("uniform", 2.0, (-2.0, -2.0), (0.0, 0.0)),
    )
    return Preset("triangle-cluster", K, fit, PruneMergeConfig(1e-3, None, 0.3))


def triangle_modes(N: int, K: int = 3, seed: int = 0, d: int = 2) -> Preset:
    fit = FitConfig(
        T=4000,
        B=1000,
        bounds=ParameterBounds(mu_max=5.0, sigma2_min=mode_sigma2_min(N, d), sigma2_max=4.0, v_max=6.0),
        schedule=Schedule("power", 50.0, 1.1, 0.0, "coupled", 0.1, 0.0, 0.3),
        ecfg=EntropyConfig(100, seed),
        seed=seed,
        init=InitSpec("uniform", 0.2),
    )
    return Preset("triangle-modes", K, fit, PruneMergeConfig(1e-3, None, 0.05))


def hotspot(seed: int = 0, omega: float = 1.0, L: int = 500) -> Preset:
    fit = FitConfig(
        T=10000,
        B=1000,
        bounds=ParameterBounds(mu_max=2.05, sigma2_min=1e-5, sigma2_max=1e-2, v_max=6.0),
        schedule=Schedule("constant", omega, 0.0, 0.0, "robbins_monro", 0.2, 0.1, 0.0),
        ecfg=EntropyConfig(100, seed),
        early_stop=EarlyStop(10, 1e-2, 1e-1, 3),
        seed=seed,
        domain=Domain.cube(2.05, 2),
        init=InitSpec("kmeans++", 5e-3),
    )
    return Preset(
        "hotspot",
        20,
        fit,
        PruneMergeConfig(1e-3, 0.018, 0.005),
        BootstrapConfig(L=L, omega0=omega, seed=seed),
        (10.0, 5.0, 3.0, 2.0, 1.0, 0.5, 0.3, 0.1),
    )


def hotspot_fixture(seed: int = 0, omega: float = 0.1, L: int = 40) -> Preset:
    """The hotspot pipeline rescaled to the density level of the shipped fixture.

    Natural-gradient steps on the data term scale with the density, and the
    fixture's tight synthetic hotspots peak one to two orders of magnitude
    above the level the ``hotspot`` step size suits. The step size, the
    initial variance and the temperature grid shrink accordingly; the spread
    rule keeps its threshold at ``10 sigma2_min``.
    """
    base = hotspot(seed, omega, L)
    fit = replace(
        base.fit,
        T=2000,
        schedule=Schedule("constant", omega, 0.0, 0.0, "robbins_monro", 0.007, 0.1, 0.0),
        early_stop=None,
        init=InitSpec("kmeans++", 1e-4),
    )
    return replace(
        base,
        name="hotspot-fixture",
        fit=fit,
        prune_merge=PruneMergeConfig(1e-3, 1.0, 0.005),
        omega_grid=(3.0, 1.0, 0.3, 0.1, 0.03),
    )


TWO_BLOB_MEANS = ((-1.0, -1.0), (1.0, 1.0))


def two_blob(seed: int = 0, omega: float = 0.01, L: int = 100) -> Preset:
    """Two tight, well-separated blobs; a quick end-to-end bootstrap check.

    The blobs sit on a diagonal so neither axis of the z-scored matching
    frame is degenerate.
    """
    fit = FitConfig(
        T=200,
        B=500,
        bounds=ParameterBounds(mu_max=2.0, sigma2_min=0.002, sigma2_max=0.5, v_max=6.0),
        schedule=Schedule.constant(omega, 0.05),
        ecfg=EntropyConfig(30, seed),
        early_stop=EarlyStop(10, 1e-3, 1e-2, 3),
        seed=seed,
        init=InitSpec("kmeans++", 0.1),
    )
    return Preset("two-blob", 4, fit, PruneMergeConfig(1e-4, None, 0.2), BootstrapConfig(L=L, omega0=omega, seed=seed))


def get_preset(name: str, **kw) -> Preset:
    table = {
        "triangle-cluster": triangle_cluster,
        "triangle-modes": triangle_modes,
        "hotspot": hotspot,
        "hotspot-fixture": hotspot_fixture,
        "two-blob": two_blob,
    }
    if name not in table:
        raise InvalidInputError(f"unknown preset {name!r}; choose from {sorted(table)}")
    return table[name](**kw)
