"""Normalized integrals ``L_s``, paths ``Z_{s,y}`` and their statistical checks.

Box rule: a site belongs to the box of half-width ``w`` when every coordinate
satisfies ``|x_i| < w``.  Sites are cell midpoints, so ``w = s`` keeps all
``N^n`` sites of a grid on ``[-s, s]^n`` and ``w = 0`` keeps none
(``Z_{s,0} = 0`` exactly).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import GridError, InsufficientReplicatesError, IntegrabilityError
from .hermite import ChaosExpansion, Functional, evaluate_G_q
from .rng import normal_generator
from .simulate import FieldSample, GridSpec, Synthesizer
from .spectral import SpectralModel

VARIANCE_BAND = 5.0
KS_LEVEL = 0.01
FDD_SE = 3.0
SPREAD = 3.0
MIN_REPLICATES = 500


@dataclass(frozen=True)
class BMObservation:
    s: float
    L: float
    seed: int
    per_chaos: dict[int, float] | None = None


@dataclass(frozen=True)
class BMPath:
    s: float
    y_grid: np.ndarray
    Z: np.ndarray
    seed: int = 0

    def at(self, y: float) -> float:
        return float(self.Z[_y_index(self.y_grid, y)])


@dataclass
class VerificationReport:
    """Statistics, the thresholds they were judged against, and the resulting flags."""

    test: str
    replicates: int
    statistics: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(self.checks.values())

    def to_dict(self) -> dict:
        return {"test": self.test, "replicates": self.replicates, "passed": self.passed,
                "statistics": self.statistics, "thresholds": self.thresholds,
                "checks": self.checks, "notes": self.notes}


def _site_extent(grid: GridSpec) -> np.ndarray:
    """``max_i |x_i|`` for every site, row-major."""
    return np.max(np.abs(grid.coordinates()), axis=1)


def _centered_values(sample: FieldSample, G: Functional, G0: float) -> np.ndarray:
    if G.m != sample.m:
        raise GridError(f"functional lives on R^{G.m} but the sample has {sample.m} channels")
    return np.asarray(G(sample.values), dtype=float) - G0


def _window(grid: GridSpec, s: float | None) -> float:
    s = grid.s if s is None else float(s)
    if s <= 0 or s > grid.s * (1 + 1e-12):
        raise GridError(f"window half-width {s:g} is not covered by the grid on [-{grid.s:g},{grid.s:g}]")
    return s


def compute_L_s(sample: FieldSample, G: Functional, G0: float = 0.0, s: float | None = None,
                expansion: ChaosExpansion | None = None) -> BMObservation:
    """Riemann sum ``(2s)^(-n/2) sum_x [G(xi(x)) - G0] h^n`` over the sites in ``[-s, s]^n``.

    With ``expansion`` the per-level sums using ``G_q`` in place of ``G`` are
    attached as ``per_chaos``.
    """
    grid = sample.grid
    s = _window(grid, s)
    norm = grid.h**grid.n / (2 * s) ** (grid.n / 2)
    inside = _site_extent(grid) < s
    g = _centered_values(sample, G, G0)
    per = None
    if expansion is not None:
        x = sample.values[inside]
        per = {q: float(norm * np.sum(evaluate_G_q(expansion, q, x)))
               for q in expansion.nonzero_levels()}
    return BMObservation(s, float(norm * np.sum(g[inside])), sample.seed, per)


def _y_index(y_grid: np.ndarray, y: float) -> int:
    hits = np.flatnonzero(np.abs(y_grid - y) <= 1e-12 * max(1.0, abs(y)))
    if not len(hits):
        raise KeyError(f"y = {y} is not on the path grid")
    return int(hits[0])


def compute_Z_path(sample: FieldSample, G: Functional, G0: float, y_grid,
                   s: float | None = None) -> BMPath:
    """``Z_{s,y} = (2s)^(-n/2) int_{[-s y^(1/n), s y^(1/n)]^n} G(xi(x)) dx`` for every ``y``.

    One sort of the sites by ``max_i |x_i|`` and one cumulative sum serve all
    nested boxes.
    """
    grid = sample.grid
    s = grid.s if s is None else float(s)
    y = np.asarray(y_grid, dtype=float)
    if np.any(y < 0) or np.any(np.diff(y) <= 0):
        raise GridError("y grid must be nonnegative and strictly increasing")
    if s <= 0 or (len(y) and y[-1] > (grid.s / s) ** grid.n * (1 + 1e-12)):
        raise GridError(f"y up to {y[-1]:g} needs boxes beyond the grid half-width {grid.s:g}")
    n = grid.n
    norm = grid.h**n / (2 * s) ** (n / 2)
    extent = _site_extent(grid)
    order = np.argsort(extent, kind="stable")
    cums = np.concatenate([[0.0], np.cumsum(_centered_values(sample, G, G0)[order])])
    counts = np.searchsorted(extent[order], s * y ** (1.0 / n), side="left")
    return BMPath(s, y, norm * cums[counts], sample.seed)


def _values(observations) -> np.ndarray:
    return np.array([o.L if isinstance(o, BMObservation) else float(o) for o in observations])


def clt_test(observations, V: float, variance_band: float = VARIANCE_BAND,
             ks_level: float = KS_LEVEL, min_replicates: int = MIN_REPLICATES,
             variance_rel_tol: float | None = None) -> VerificationReport:
    """Compare the sample to ``N(0, V)``.

    Variance check: ``|var - V| <= variance_band * V sqrt(2/N)``, or
    ``<= variance_rel_tol * V`` when a relative tolerance is given.
    KS check: statistic below the asymptotic Kolmogorov critical value at
    ``ks_level`` (``1.628 / sqrt(N)`` at 1%).
    """
    x = _values(observations)
    N = len(x)
    if N < min_replicates:
        raise InsufficientReplicatesError(f"clt_test needs >= {min_replicates} replicates, got {N}")
    var = float(np.var(x, ddof=1))
    stderr = V * math.sqrt(2.0 / N)
    band = variance_rel_tol * V if variance_rel_tol is not None else variance_band * stderr
    if V > 0:
        ks = stats.kstest(x, "norm", args=(0.0, math.sqrt(V)))
        ks_stat, ks_p = float(ks.statistic), float(ks.pvalue)
    else:
        ks_stat, ks_p = 1.0, 0.0
    critical = float(stats.kstwobign.isf(ks_level) / math.sqrt(N))
    rep = VerificationReport("clt", N)
    rep.statistics = {"V": V, "mean": float(np.mean(x)), "variance": var,
                      "variance_stderr": stderr, "ks_statistic": ks_stat, "ks_pvalue": ks_p}
    rep.thresholds = {"variance_band": band, "ks_critical": critical, "ks_level": ks_level}
    if variance_rel_tol is None:
        rep.thresholds["variance_band_stderrs"] = variance_band
    else:
        rep.thresholds["variance_rel_tol"] = variance_rel_tol
    rep.checks = {"variance": abs(var - V) <= band, "ks": ks_stat < critical}
    return rep


def jackknife_covariance(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Unbiased sample covariance and its leave-one-out jackknife standard error."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    N = len(x)
    sx, sy, sxy = x.sum(), y.sum(), (x * y).sum()
    cov = (sxy - sx * sy / N) / (N - 1)
    lx, ly, lxy = sx - x, sy - y, sxy - x * y
    loo = (lxy - lx * ly / (N - 1)) / (N - 2)
    se = math.sqrt((N - 1) / N * float(np.sum((loo - loo.mean()) ** 2)))
    return float(cov), se


def fdd_test(paths: Sequence[BMPath], V: float, pairs, n_se: float = FDD_SE,
             min_replicates: int = MIN_REPLICATES) -> VerificationReport:
    """``Cov(Z_{y1}, Z_{y2})`` against ``V min(y1, y2)`` within ``n_se`` jackknife errors."""
    N = len(paths)
    if N < min_replicates:
        raise InsufficientReplicatesError(f"fdd_test needs >= {min_replicates} paths, got {N}")
    y_grid = paths[0].y_grid
    Z = np.array([p.Z for p in paths])
    rep = VerificationReport("fdd", N)
    rows = []
    for y1, y2 in pairs:
        cov, se = jackknife_covariance(Z[:, _y_index(y_grid, y1)], Z[:, _y_index(y_grid, y2)])
        target = V * min(y1, y2)
        ok = abs(cov - target) <= n_se * se
        rows.append({"y1": y1, "y2": y2, "covariance": cov, "jackknife_se": se,
                     "target": target, "z": (cov - target) / se if se > 0 else math.inf})
        rep.checks[f"cov({y1:g},{y2:g})"] = bool(ok)
    rep.statistics = {"V": V, "pairs": rows}
    rep.thresholds = {"n_se": n_se}
    return rep


def dyadic_pairs(levels: int = 3, T: float = 1.0) -> list[tuple[float, float]]:
    """Consecutive dyadic pairs ``(k 2^-j T, (k+1) 2^-j T)`` for ``j = 1..levels``."""
    return [(T * k / 2**j, T * (k + 1) / 2**j) for j in range(1, levels + 1) for k in range(2**j)]


def dyadic_grid(levels: int = 3, T: float = 1.0) -> np.ndarray:
    return T * np.arange(2**levels + 1) / 2**levels


def increment_test(paths: Sequence[BMPath], p: float, pairs, integrability: float = math.inf,
                   spread_threshold: float = SPREAD,
                   min_replicates: int = MIN_REPLICATES) -> VerificationReport:
    """Moment ratios ``E|Z_{y2} - Z_{y1}|^p / |y2 - y1|^(p/2)`` and their max/median spread."""
    if p <= 2:
        raise ValueError("the increment bound is stated for p > 2")
    if p > integrability:
        raise IntegrabilityError(
            f"p = {p:g} exceeds the declared integrability L^{integrability:g} of the functional")
    N = len(paths)
    if N < min_replicates:
        raise InsufficientReplicatesError(f"increment_test needs >= {min_replicates} paths, got {N}")
    y_grid = paths[0].y_grid
    Z = np.array([q.Z for q in paths])
    rows, ratios = [], []
    for y1, y2 in pairs:
        if y1 == y2:
            continue
        dz = Z[:, _y_index(y_grid, y2)] - Z[:, _y_index(y_grid, y1)]
        ratio = float(np.mean(np.abs(dz) ** p) / abs(y2 - y1) ** (p / 2))
        rows.append({"y1": y1, "y2": y2, "ratio": ratio})
        ratios.append(ratio)
    rep = VerificationReport("increments", N)
    if not ratios:
        rep.notes.append("no pair with y1 != y2")
        return rep
    spread = max(ratios) / float(np.median(ratios))
    rep.statistics = {"p": p, "pairs": rows, "max_ratio": max(ratios),
                      "median_ratio": float(np.median(ratios)), "spread": spread}
    rep.thresholds = {"spread": spread_threshold}
    rep.checks = {"spread": spread < spread_threshold}
    rep.notes.append("paths are checked on a finite y grid only")
    return rep


def brownian_paths(y_grid, count: int, seed: int, variance: float = 1.0) -> list[BMPath]:
    """Exact ``sqrt(variance) * B_y`` on ``y_grid`` (which must start at 0)."""
    y = np.asarray(y_grid, dtype=float)
    if y[0] != 0.0:
        raise ValueError("Brownian paths start at y = 0")
    steps = normal_generator(seed, 1).standard_normal((count, len(y) - 1))
    inc = steps * np.sqrt(np.diff(y) * variance)
    Z = np.concatenate([np.zeros((count, 1)), np.cumsum(inc, axis=1)], axis=1)
    return [BMPath(1.0, y, z, seed) for z in Z]


def run_replicates(spec: SpectralModel, grid: GridSpec, G: Functional, seeds: Sequence[int],
                   G0: float = 0.0, y_grid=None, threads: int = 1,
                   expansion: ChaosExpansion | None = None, keep_fields: bool = False):
    """Simulate one field per seed and reduce it to ``L_s`` (and ``Z_{s,.}`` if ``y_grid``).

    Returns ``(observations, paths, fields)`` in seed order; ``paths`` is empty
    without ``y_grid`` and ``fields`` is empty unless ``keep_fields``.
    """
    synth = Synthesizer(spec, grid)

    def one(seed):
        smp = synth.sample(seed)
        obs = compute_L_s(smp, G, G0, expansion=expansion)
        path = compute_Z_path(smp, G, G0, y_grid) if y_grid is not None else None
        return obs, path, (smp if keep_fields else None)

    if threads <= 1:
        out = [one(s) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(one, seeds))
    obs = [o for o, _, _ in out]
    paths = [p for _, p, _ in out if p is not None]
    fields = [f for _, _, f in out if f is not None]
    return obs, paths, fields


__all__ = [
    "BMObservation", "BMPath", "VerificationReport", "compute_L_s", "compute_Z_path",
    "clt_test", "jackknife_covariance", "fdd_test", "dyadic_pairs", "dyadic_grid",
    "increment_test", "brownian_paths", "run_replicates",
]
