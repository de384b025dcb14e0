"""Turning a fitted mixture into resolved modes and cluster labels."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ._seeding import derive_seed
from .errors import InvalidInputError
from .mixture import MixtureState, ParameterBounds, canonical_permutation, log_responsibilities, _points


@dataclass(frozen=True)
class PruneMergeConfig:
    """Post-fit clean-up rules.

    ``spread_beta=None`` switches the spread rule off, leaving only the
    weight floor.
    """

    weight_floor: float = 1e-3
    spread_beta: Optional[float] = 0.018
    merge_radius: float = 0.005

    def __post_init__(self):
        if not 0 < self.weight_floor < 1:
            raise InvalidInputError("weight_floor must lie in (0, 1)")
        if self.merge_radius < 0:
            raise InvalidInputError("merge_radius must be non-negative")
        if self.spread_beta is not None and self.spread_beta < 0:
            raise InvalidInputError("spread_beta must be non-negative")

    def spread_threshold(self, sigma2_init: float, sigma2_min: float) -> float:
        return sigma2_min + self.spread_beta * (sigma2_init - sigma2_min)

    def to_dict(self) -> dict:
        return {"weight_floor": self.weight_floor, "spread_beta": self.spread_beta, "merge_radius": self.merge_radius}

    @classmethod
    def from_dict(cls, d: dict) -> "PruneMergeConfig":
        return cls(float(d.get("weight_floor", 1e-3)), d.get("spread_beta", 0.018), float(d.get("merge_radius", 0.005)))


@dataclass(frozen=True, eq=False)
class ResolvedMode:
    center: np.ndarray
    weight: float
    covariance: np.ndarray
    source_components: tuple

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "weight": self.weight,
            "covariance": self.covariance.tolist(),
            "source_components": list(self.source_components),
        }


# -- pruning -------------------------------------------------------------------


def _keep_indices(state: MixtureState, cfg: PruneMergeConfig, sigma2_init, bounds) -> np.ndarray:
    w = state.weights
    keep = w >= cfg.weight_floor
    if cfg.spread_beta is not None:
        if sigma2_init is None or bounds is None:
            raise InvalidInputError("the spread rule needs sigma2_init and bounds")
        eigmax = 1.0 / np.linalg.eigvalsh(state.precisions)[:, 0]
        keep &= eigmax <= cfg.spread_threshold(sigma2_init, bounds.sigma2_min)
    keep[int(np.argmax(w))] = True
    return np.flatnonzero(keep)


def _subset(state: MixtureState, idx) -> MixtureState:
    idx = list(idx)
    lw = state.log_weights[idx]
    return MixtureState(lw[:-1] - lw[-1], tuple(state.components[i] for i in idx))


def prune(
    state: MixtureState,
    cfg: PruneMergeConfig,
    sigma2_init: Optional[float] = None,
    bounds: Optional[ParameterBounds] = None,
) -> MixtureState:
    """Drop light or over-spread components and renormalise the rest.

    A component goes if its weight is below ``cfg.weight_floor`` or (when the
    spread rule is on) its largest covariance eigenvalue exceeds
    ``sigma2_min + beta (sigma2_init - sigma2_min)``. The heaviest component
    always survives.
    """
    idx = _keep_indices(state, cfg, sigma2_init, bounds)
    if len(idx) == state.n_components:
        return state
    return _subset(state, idx)


# -- merging ---------------------------------------------------------------------


def _linkage_groups(means: np.ndarray, radius: float) -> list[list[int]]:
    """Connected components of the graph joining means at distance <= radius."""
    K = means.shape[0]
    parent = list(range(K))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    D = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=2)
    for i in range(K):
        for j in range(i + 1, K):
            if D[i, j] <= radius:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for i in range(K):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


def _moment_match(w, mu, cov):
    W = w.sum()
    m = (w @ mu) / W
    r = mu - m
    C = (np.einsum("k,kab->ab", w, cov) + np.einsum("k,ka,kb->ab", w, r, r)) / W
    return W, m, 0.5 * (C + C.T)


def _merge_with_groups(state: MixtureState, radius: float):
    """Repeated single-linkage merging until no two means lie within ``radius``.

    Moment matching can move a merged mean next to another one, so the
    grouping is re-run on its own output until it stops changing; the result
    is therefore a fixed point and merging it again is the identity.
    """
    w = state.weights
    mu = state.means
    cov = state.covariances
    groups = [[k] for k in range(state.n_components)]
    while True:
        links = _linkage_groups(mu, radius)
        if len(links) == len(groups):
            break
        nw, nmu, ncov, ngroups = [], [], [], []
        for g in links:
            W, m, C = _moment_match(w[g], mu[g], cov[g])
            nw.append(W)
            nmu.append(m)
            ncov.append(C)
            ngroups.append(sorted(i for j in g for i in groups[j]))
        w, mu, cov, groups = np.array(nw), np.array(nmu), np.array(ncov), ngroups
    return w, mu, cov, groups


def merge(state: MixtureState, merge_radius: float) -> MixtureState:
    w, mu, cov, groups = _merge_with_groups(state, merge_radius)
    if len(groups) == state.n_components:
        return state
    return MixtureState.from_arrays(mu, covariances=cov, weights=w / w.sum())


def resolve_modes(
    state: MixtureState,
    cfg: PruneMergeConfig,
    sigma2_init: Optional[float] = None,
    bounds: Optional[ParameterBounds] = None,
) -> list[ResolvedMode]:
    """Prune, merge, order canonically, then sort by weight (heaviest first)."""
    keep = _keep_indices(state, cfg, sigma2_init, bounds)
    pruned = _subset(state, keep) if len(keep) < state.n_components else state
    w, mu, cov, groups = _merge_with_groups(pruned, cfg.merge_radius)
    w = w / w.sum()
    merged = MixtureState.from_arrays(mu, covariances=cov, weights=w) if len(groups) > 1 else None
    order = canonical_permutation(merged) if merged is not None else [0]
    modes = [
        ResolvedMode(
            center=mu[k].copy(),
            weight=float(w[k]),
            covariance=cov[k].copy(),
            source_components=tuple(int(keep[i]) for i in groups[k]),
        )
        for k in order
    ]
    # stable sort keeps the canonical order among equal weights
    return sorted(modes, key=lambda m: -m.weight)


def modes_csv(modes: Sequence[ResolvedMode]) -> str:
    """``id, weight, center_*, cov_ij`` (upper triangle, row-major)."""
    if not modes:
        return "id,weight\n"
    d = modes[0].center.shape[0]
    iu = np.triu_indices(d)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "weight"] + [f"center_{j}" for j in range(d)] + [f"cov_{a}{b}" for a, b in zip(*iu)])
    for i, m in enumerate(modes):
        w.writerow([i, repr(m.weight)] + [repr(float(x)) for x in m.center] + [repr(float(x)) for x in m.covariance[iu]])
    return buf.getvalue()


def modes_json(modes: Sequence[ResolvedMode]) -> str:
    return json.dumps({"schema": "gerve/modes/1", "modes": [m.to_dict() for m in modes]}, indent=2)


# -- elbow scan ------------------------------------------------------------------


@dataclass
class ElbowResult:
    omegas: list
    count_after_prune: list
    count_after_merge: list
    omega_star: float
    states: list = field(default_factory=list, repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["omega", "count_after_prune", "count_after_merge", "selected"])
        for om, a, b in zip(self.omegas, self.count_after_prune, self.count_after_merge):
            w.writerow([repr(float(om)), a, b, int(om == self.omega_star)])
        return buf.getvalue()


def _elbow_cell(args):
    from .optimizer import fit  # deferred: optimizer imports nothing from here

    samples, K, cell, pm, sigma2_init = args
    state = fit(samples, K, cell).final
    n_pruned = prune(state, pm, sigma2_init, cell.bounds).n_components
    n_merged = len(resolve_modes(state, pm, sigma2_init, cell.bounds))
    return n_pruned, n_merged, state


def elbow_scan(
    samples,
    omega_grid: Sequence[float],
    cfg,
    K: int,
    pm: PruneMergeConfig,
    sigma2_init: Optional[float] = None,
    workers: int = 1,
) -> ElbowResult:
    """Cold-start constant-temperature fits across a descending grid of omega.

    Cell ``i`` is fitted with seed ``derive_seed(cfg.seed, i)``, so the
    result does not depend on ``workers``. The selected temperature is the
    largest omega whose merged mode count equals the maximum over the grid.
    """
    grid = [float(o) for o in omega_grid]
    if not grid:
        raise InvalidInputError("omega grid must be non-empty")
    if any(b >= a for a, b in zip(grid, grid[1:])):
        raise InvalidInputError("omega grid must be strictly descending")
    if sigma2_init is None:
        sigma2_init = cfg.init.sigma2
    X = np.ascontiguousarray(np.asarray(samples, dtype=np.float64))
    tasks = [
        (X, K, replace(cfg, schedule=cfg.schedule.with_constant_temperature(om), seed=derive_seed(cfg.seed, i)), pm, sigma2_init)
        for i, om in enumerate(grid)
    ]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_elbow_cell, tasks))
    else:
        cells = [_elbow_cell(t) for t in tasks]
    n_pruned = [c[0] for c in cells]
    n_merged = [c[1] for c in cells]
    best = max(n_merged)
    omega_star = next(om for om, c in zip(grid, n_merged) if c == best)
    return ElbowResult(grid, n_pruned, n_merged, omega_star, [c[2] for c in cells])


# -- clustering ----------------------------------------------------------------


def assign_clusters(state: MixtureState, samples) -> np.ndarray:
    """Highest-responsibility component per point (lowest index on ties).

    Points where every component density underflows get label ``-1``.
    """
    X, _ = _points(samples, state.dim)
    lr = log_responsibilities(state, X)
    ok = np.all(np.isfinite(lr), axis=1)
    labels = np.full(X.shape[0], -1, dtype=np.int64)
    if np.any(ok):
        labels[ok] = np.argmax(lr[ok], axis=1)
    return labels
