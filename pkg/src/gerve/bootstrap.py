"""Bootstrap uncertainty for resolved modes.

A baseline fit at a fixed temperature gives the reference modes. Each
replicate refits on a with-replacement resample, and its modes are matched
to the baseline by a gated minimum-cost assignment in z-scored coordinates.
Matched centres give per-mode stability scores and confidence ellipses.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import chi2

from ._seeding import derive_seed
from .errors import DegenerateEllipseError, InsufficientMatchesError, InvalidInputError
from .modes import PruneMergeConfig, ResolvedMode, resolve_modes


# -- assignment ------------------------------------------------------------------


def _solve_square(C: np.ndarray):
    """Shortest-augmenting-path assignment with dual potentials, O(n^3).

    Returns ``(row_to_col, u, v)`` with ``C[i, j] - u[i] - v[j] >= 0`` and
    equality on the assignment.
    """
    n = C.shape[0]
    INF = math.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j]: row matched to column j (1-based, 0 = none)
    way = np.zeros(n + 1, dtype=np.int64)
    A = np.zeros((n + 1, n + 1))
    A[1:, 1:] = C
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, INF)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = A[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, INF)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    row_to_col = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        row_to_col[p[j] - 1] = j - 1
    return row_to_col, u[1:], v[1:]


def _lexicographic_optimum(tight: np.ndarray, row_to_col: np.ndarray, n_real: int) -> np.ndarray:
    """Lexicographically smallest perfect matching inside the tight-edge graph.

    Every optimal assignment uses tight edges only (complementary slackness
    with the final potentials), so greedily giving each real row its smallest
    column that still admits a perfect matching selects the lexicographically
    smallest optimum.
    """
    n = tight.shape[0]
    r2c = row_to_col.copy()
    c2r = np.empty(n, dtype=np.int64)
    c2r[r2c] = np.arange(n)
    for i in range(n_real):
        for j in np.flatnonzero(tight[i]):
            if j == r2c[i]:
                break
            other = c2r[j]
            if other < i:
                continue
            # re-seat `other` using tight edges among unfixed rows, freeing column j
            target = r2c[i]
            parent_col = {}
            frontier = [other]
            seen_cols = {j}
            found = None
            while frontier and found is None:
                nxt = []
                for r in frontier:
                    for c in np.flatnonzero(tight[r]):
                        c = int(c)
                        if c in seen_cols:
                            continue
                        if c == target:
                            parent_col[c] = r
                            found = c
                            break
                        owner = c2r[c]
                        if owner <= i:
                            continue
                        seen_cols.add(c)
                        parent_col[c] = r
                        nxt.append(owner)
                    if found is not None:
                        break
                frontier = nxt
            if found is None:
                continue
            c = found
            while True:
                r = parent_col[c]
                prev = r2c[r]
                r2c[r] = c
                c2r[c] = r
                if r == other:
                    break
                c = prev
            r2c[i] = j
            c2r[j] = i
            break
    return r2c


def hungarian(cost) -> tuple[np.ndarray, np.ndarray]:
    """Minimum-cost rectangular assignment.

    Returns ``(rows, cols)`` index arrays of length ``min(m, n)``, rows
    ascending. Among optimal assignments the lexicographically smallest
    sequence of columns (of rows, when ``m > n``) is returned, so ties are
    resolved deterministically.
    """
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2:
        raise InvalidInputError("cost must be a matrix")
    m, n = C.shape
    if m == 0 or n == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    if not np.all(np.isfinite(C)):
        raise InvalidInputError("costs must be finite")
    if m > n:
        cols, rows = hungarian(C.T)
        order = np.argsort(rows, kind="stable")
        return rows[order], cols[order]
    square = np.zeros((n, n))
    square[:m] = C
    r2c, u, v = _solve_square(square)
    reduced = square - u[:, None] - v[None, :]
    tol = 1e-9 * max(1.0, float(np.abs(C).max())) * n
    r2c = _lexicographic_optimum(reduced <= tol, r2c, m)
    return np.arange(m, dtype=np.int64), r2c[:m]


# -- gating and matching ---------------------------------------------------------


def adaptive_gates(centres, eta: float = 0.35, tau_min: float = 0.08, tau_max: float = 0.22) -> np.ndarray:
    """``clip(eta * nn_k, tau_min, tau_max)``; a lone centre gets ``tau_max``."""
    P = np.atleast_2d(np.asarray(centres, dtype=np.float64))
    if P.shape[0] == 0:
        return np.empty(0)
    D = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2)
    np.fill_diagonal(D, np.inf)
    nn = D.min(axis=1)
    return np.where(np.isinf(nn), tau_max, np.clip(eta * nn, tau_min, tau_max))


def match_modes(baseline, replicate, gates) -> list:
    """Gated assignment of replicate centres to baseline centres.

    Returns one entry per baseline mode: the index of its matched replicate
    centre, or ``None`` when unassigned or rejected by the gate.
    """
    Bz = np.atleast_2d(np.asarray(baseline, dtype=np.float64))
    Rz = np.asarray(replicate, dtype=np.float64)
    out: list = [None] * Bz.shape[0]
    if Rz.size == 0 or Bz.shape[0] == 0:
        return out
    Rz = np.atleast_2d(Rz)
    D = np.linalg.norm(Bz[:, None, :] - Rz[None, :, :], axis=2)
    rows, cols = hungarian(D)
    for k, j in zip(rows, cols):
        if D[k, j] <= gates[k]:
            out[int(k)] = int(j)
    return out


def stability_scores(matches, L: int) -> np.ndarray:
    """Fraction of the ``L`` replicates in which each baseline mode was matched.

    ``matches`` is a per-mode sequence of matched centres (or of replicate
    indices); only its lengths are used.
    """
    if L < 1:
        raise InvalidInputError("L must be >= 1")
    return np.array([len(m) / L for m in matches], dtype=np.float64)


@dataclass(frozen=True)
class Ellipse:
    center: np.ndarray
    semi_axes: tuple
    angle_deg: float
    covariance: np.ndarray

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "semi_axes": list(self.semi_axes),
            "angle_deg": self.angle_deg,
            "covariance": self.covariance.tolist(),
        }


def confidence_ellipse(points, alpha: float = 0.05, center=None) -> Ellipse:
    """Chi-square ellipse of the empirical covariance of ``points`` (2-D).

    Semi-axes are ``sqrt(chi2_{2,1-alpha} * eig)``. The angle of the major
    axis is ``atan2(e_x, e_y)`` in degrees, with the eigenvector sign fixed
    so the angle lies in ``(-90, 90]``. The centre defaults to the mean of
    the points.
    """
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if P.shape[0] < 3:
        raise InsufficientMatchesError(f"need >= 3 matched centres, got {P.shape[0]}")
    if P.shape[1] != 2:
        raise InvalidInputError("ellipses are defined for 2-D centres only")
    V = np.cov(P, rowvar=False, ddof=1)
    evals, evecs = np.linalg.eigh(V)
    if not evals[0] > 1e-12 * max(evals[1], np.finfo(float).tiny):
        raise DegenerateEllipseError("matched centres are (nearly) collinear")
    q = chi2.ppf(1.0 - alpha, 2)
    e1 = evecs[:, 1]
    if e1[1] < 0 or (e1[1] == 0 and e1[0] < 0):
        e1 = -e1
    angle = math.degrees(math.atan2(e1[0], e1[1]))
    if angle == -90.0:
        angle = 90.0
    c = P.mean(axis=0) if center is None else np.asarray(center, dtype=np.float64)
    return Ellipse(c, (math.sqrt(q * evals[1]), math.sqrt(q * evals[0])), angle, V)


# -- the full procedure ------------------------------------------------------------


@dataclass(frozen=True)
class BootstrapConfig:
    """Replicate count, fixed temperature and matching / ellipse settings.

    ``resample=False`` refits the original sample with the baseline seed in
    every replicate; it exists to check the plumbing (all scores become 1).
    ``count_radius`` turns on a closed-ball point count around each mode.
    """

    L: int
    omega0: float
    eta: float = 0.35
    tau_min: float = 0.08
    tau_max: float = 0.22
    alpha: float = 0.05
    seed: int = 0
    resample: bool = True
    count_radius: Optional[float] = None

    def __post_init__(self):
        if int(self.L) < 1:
            raise InvalidInputError("L must be >= 1")
        if not self.omega0 > 0:
            raise InvalidInputError("omega0 must be positive")
        if not 0 < self.eta < 0.5:
            raise InvalidInputError("eta must lie in (0, 0.5)")
        if not 0 < self.tau_min <= self.tau_max:
            raise InvalidInputError("need 0 < tau_min <= tau_max")
        if not 0 < self.alpha < 1:
            raise InvalidInputError("alpha must lie in (0, 1)")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "BootstrapConfig":
        return cls(**d)


@dataclass
class BootstrapReport:
    baseline: list
    matches: list
    stability: np.ndarray
    ellipses: list
    replicate_mode_counts: list
    L: int
    local_counts: Optional[list] = None
    diagnostics: list = field(default_factory=list)

    def to_dict(self) -> dict:
        rows = []
        for k, mode in enumerate(self.baseline):
            e = self.ellipses[k]
            rows.append(
                {
                    "mode_id": k,
                    "stability": float(self.stability[k]),
                    "n_matched": len(self.matches[k]),
                    "mode": mode.to_dict(),
                    "ellipse": None if e is None else e.to_dict(),
                    "local_count": None if self.local_counts is None else int(self.local_counts[k]),
                }
            )
        return {
            "schema": "gerve/bootstrap-report/1",
            "L": self.L,
            "modes": rows,
            "replicate_mode_counts": [int(c) for c in self.replicate_mode_counts],
            "diagnostics": list(self.diagnostics),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self, transform: Optional[Callable] = None) -> str:
        """Flat table ``mode_id, s, center_x, center_y, a_m, b_m, angle_deg``.

        ``transform`` maps the matched centres (an (n, 2) array) into the
        reporting frame (for instance metres) before the ellipse is formed.
        Without it, lengths are in the fitting units.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.baseline[0].center.shape[0] if self.baseline else 2
        head = ["mode_id", "s"] + [f"center_{j}" for j in range(d)] + ["a_m", "b_m", "angle_deg"]
        if self.local_counts is not None:
            head.append("count")
        w.writerow(head)
        for k, mode in enumerate(self.baseline):
            centre = mode.center
            e = self.ellipses[k]
            if transform is not None:
                centre = np.asarray(transform(centre[None, :]))[0]
                if len(self.matches[k]) >= 3 and d == 2:
                    try:
                        e = confidence_ellipse(transform(np.array(self.matches[k])), center=centre)
                    except (InsufficientMatchesError, DegenerateEllipseError):
                        e = None
            ax = ["", "", ""] if e is None else [repr(e.semi_axes[0]), repr(e.semi_axes[1]), repr(e.angle_deg)]
            row = [k, repr(float(self.stability[k]))] + [repr(float(x)) for x in centre] + ax
            if self.local_counts is not None:
                row.append(int(self.local_counts[k]))
            w.writerow(row)
        return buf.getvalue()


def zscore_frame(centres: np.ndarray):
    """Per-axis mean and std of the baseline centres (std 1 when undefined)."""
    P = np.atleast_2d(centres)
    loc = P.mean(axis=0)
    scale = P.std(axis=0) if P.shape[0] > 1 else np.ones(P.shape[1])
    scale = np.where(scale > 0, scale, 1.0)
    return loc, scale


def local_counts(samples: np.ndarray, centres: np.ndarray, radius: float) -> np.ndarray:
    """Number of samples in the closed ball of ``radius`` around each centre."""
    X = np.asarray(samples, dtype=np.float64)
    return np.array([int(np.count_nonzero(np.linalg.norm(X - c, axis=1) <= radius)) for c in centres])


def _fit_modes(X, K, cfg, pm_cfg, sigma2_init, seed):
    from .optimizer import fit

    state = fit(X, K, replace(cfg, seed=seed)).final
    return resolve_modes(state, pm_cfg, sigma2_init, cfg.bounds)


def _replicate(args):
    X, K, cfg, pm_cfg, sigma2_init, bcfg, ell = args
    if not bcfg.resample:
        return _fit_modes(X, K, cfg, pm_cfg, sigma2_init, cfg.seed)
    rep_seed = derive_seed(bcfg.seed, ell)
    idx = np.random.default_rng(rep_seed).integers(0, X.shape[0], size=X.shape[0])
    return _fit_modes(X[idx], K, cfg, pm_cfg, sigma2_init, derive_seed(rep_seed, 1))


def bootstrap_uq(
    samples,
    fit_cfg,
    pm_cfg: PruneMergeConfig,
    bcfg: BootstrapConfig,
    K: int,
    sigma2_init: Optional[float] = None,
    progress: Optional[Callable[[int], None]] = None,
    workers: int = 1,
) -> BootstrapReport:
    """Baseline fit, ``L`` resampled refits at ``omega0``, gated matching.

    Replicate ``l`` resamples with seed ``derive_seed(bcfg.seed, l)``, so the
    report does not depend on ``workers`` or on completion order.
    """
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(samples, dtype=np.float64)))
    N = X.shape[0]
    if N < 2:
        raise InvalidInputError("bootstrap needs at least two samples")
    if sigma2_init is None:
        sigma2_init = fit_cfg.init.sigma2
    cfg = replace(fit_cfg, schedule=fit_cfg.schedule.with_constant_temperature(bcfg.omega0))
    L = int(bcfg.L)

    baseline = _fit_modes(X, K, cfg, pm_cfg, sigma2_init, cfg.seed)
    diagnostics = []
    if not baseline:
        diagnostics.append("baseline produced no modes")
        return BootstrapReport([], [], np.empty(0), [], [], L, None, diagnostics)

    centres = np.array([m.center for m in baseline])
    loc, scale = zscore_frame(centres)
    Bz = (centres - loc) / scale
    gates = adaptive_gates(Bz, bcfg.eta, bcfg.tau_min, bcfg.tau_max)

    tasks = ((X, K, cfg, pm_cfg, sigma2_init, bcfg, ell) for ell in range(L))
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        pool = ProcessPoolExecutor(max_workers=workers)
        results = pool.map(_replicate, tasks, chunksize=max(1, L // (4 * workers)))
    else:
        pool = None
        results = map(_replicate, tasks)

    matches: list = [[] for _ in baseline]
    counts = []
    try:
        for ell, rep in enumerate(results):
            counts.append(len(rep))
            if rep:
                rc = np.array([m.center for m in rep])
                for k, j in enumerate(match_modes(Bz, (rc - loc) / scale, gates)):
                    if j is not None:
                        matches[k].append(rc[j])
            if progress is not None:
                progress(ell + 1)
    finally:
        if pool is not None:
            pool.shutdown()

    stability = stability_scores(matches, L)
    ellipses = []
    for k, mode in enumerate(baseline):
        if mode.center.shape[0] != 2:
            ellipses.append(None)
            continue
        try:
            ellipses.append(confidence_ellipse(np.array(matches[k]), bcfg.alpha, center=mode.center))
        except (InsufficientMatchesError, DegenerateEllipseError) as exc:
            ellipses.append(None)
            diagnostics.append(f"mode {k}: {exc}")
    lc = None
    if bcfg.count_radius is not None:
        lc = local_counts(X, centres, bcfg.count_radius).tolist()
    return BootstrapReport(baseline, matches, stability, ellipses, counts, L, lc, diagnostics)
