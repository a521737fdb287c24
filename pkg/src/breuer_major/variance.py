"""Diagram formula, the covariance ``C_G(x)`` and the variances ``V_s``, ``V^(q)``, ``V``.

Orientation: for a lag ``x`` the Gaussian pair is ``X = xi(x)``, ``Y = xi(0)``,
so the cross-covariance fed to the diagram formula is ``rho_ij = r_ij(x)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .covariance import C1Report, CovarianceModel, check_c1, eval_r
from .errors import (
    BudgetExceededError,
    C1FailureError,
    DimensionMismatchError,
    ModelError,
    UnsupportedDegreeError,
    UnsupportedDimensionError,
)
from .hermite import MAX_M, MAX_Q, ChaosExpansion, MultiIndex, hermite_rank
from .quadrature import QuadratureSpec, integrate_box

TABLE_BUDGET = 10_000_000
FEASIBILITY_TOL = 1e-8
_POINT_CHUNK = 2048


def _as_tuple(a) -> tuple[int, ...]:
    return tuple(a.exponents) if isinstance(a, MultiIndex) else tuple(int(v) for v in a)


def contingency_tables(rows: Sequence[int], cols: Sequence[int],
                       budget: int = TABLE_BUDGET) -> Iterator[tuple[int, ...]]:
    """Nonnegative integer matrices with the given row and column sums, row-major flat.

    Rows are filled one at a time; the last row is forced by the remaining
    column sums.  More than ``budget`` generated tables raises.
    """
    rows, cols = tuple(rows), tuple(cols)
    if sum(rows) != sum(cols):
        return
    p, q = len(rows), len(cols)
    count = 0

    def fill_row(total, caps, j):
        # compositions of ``total`` into ``caps[j:]`` respecting the caps
        if j == q - 1:
            if total <= caps[j]:
                yield (total,)
            return
        rest = sum(caps[j + 1:])
        for v in range(max(0, total - rest), min(total, caps[j]) + 1):
            for tail in fill_row(total - v, caps, j + 1):
                yield (v,) + tail

    def rec(i, caps):
        nonlocal count
        if i == p - 1:
            if sum(caps) == rows[i]:
                count += 1
                if count > budget:
                    raise BudgetExceededError(
                        f"more than {budget} contingency tables for margins {rows}, {cols}")
                yield tuple(caps)
            return
        for row in fill_row(rows[i], caps, 0):
            left = tuple(c - v for c, v in zip(caps, row))
            for rest in rec(i + 1, left):
                yield row + rest

    yield from rec(0, cols)


@lru_cache(maxsize=4096)
def diagram_terms(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[tuple[int, tuple[int, ...]], ...]:
    """``(a! b! / prod K_ij!, K)`` for every table ``K`` with margins ``a`` and ``b``."""
    fa = math.prod(math.factorial(v) for v in a)
    fb = math.prod(math.factorial(v) for v in b)
    out = []
    for k in contingency_tables(a, b):
        out.append((fa * fb // math.prod(math.factorial(v) for v in k), k))
    return tuple(out)


def _check_rho(rho, m: int) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (m, m):
        raise DimensionMismatchError(f"rho must be {m}x{m}, got shape {rho.shape}")
    return rho


def cross_covariance(rho) -> np.ndarray:
    """Validate ``rho`` as ``E[X Y^T]`` for standard Gaussian vectors ``X``, ``Y``."""
    rho = np.atleast_2d(np.asarray(rho, dtype=float))
    m = rho.shape[0]
    if rho.shape != (m, m):
        raise DimensionMismatchError("rho must be square")
    if np.any(np.abs(rho) > 1.0 + 1e-12):
        raise ModelError("|rho_ij| must not exceed 1")
    block = np.block([[np.eye(m), rho], [rho.T, np.eye(m)]])
    if np.linalg.eigvalsh(block)[0] < -FEASIBILITY_TOL:
        raise ModelError("[[Id, rho], [rho^T, Id]] is not positive semidefinite")
    return rho


def pair_expectation(a, b, rho) -> float:
    """``E[H_a(X) H_b(Y)]`` for standard Gaussian ``X, Y`` with ``E[X Y^T] = rho``.

    Diagram formula: ``sum_K a! b! prod rho_ij^K_ij / K_ij!`` over tables ``K``
    with row sums ``a`` and column sums ``b``; zero unless ``|a| = |b|``.
    Each term multiplies its factors in sorted order and the terms are summed
    with ``math.fsum``, so swapping ``(a, b, rho)`` for ``(b, a, rho^T)``
    gives a bit-identical result.
    """
    a, b = _as_tuple(a), _as_tuple(b)
    m = len(a)
    if len(b) != m:
        raise DimensionMismatchError(f"multi-indices of lengths {m} and {len(b)}")
    if m > MAX_M:
        raise UnsupportedDimensionError(f"m <= {MAX_M} required, got {m}")
    if sum(a) > MAX_Q or sum(b) > MAX_Q:
        raise UnsupportedDegreeError(f"|a|, |b| <= {MAX_Q} required")
    rho = _check_rho(rho, m)
    if sum(a) != sum(b):
        return 0.0
    flat = rho.ravel().tolist()
    terms = []
    for w, k in diagram_terms(a, b):
        factors = sorted(flat[i] ** e for i, e in enumerate(k) if e)
        prod = 1.0
        for f in factors:
            prod *= f
        terms.append(float(w) * prod)
    return math.fsum(terms)


@dataclass(frozen=True)
class LevelPolynomial:
    """``C_{G_q}`` as a polynomial in the ``m*m`` entries of ``rho``."""

    q: int
    m: int
    exponents: np.ndarray
    coefficients: np.ndarray

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        """Evaluate on ``(k, m, m)`` cross-covariances; returns ``(k,)``."""
        rho = np.asarray(rho, dtype=float).reshape(-1, self.m * self.m)
        out = np.empty(len(rho))
        if len(self.coefficients) == 0:
            out[:] = 0.0
            return out
        cells = np.arange(self.m * self.m)
        for s in range(0, len(rho), _POINT_CHUNK):
            block = rho[s:s + _POINT_CHUNK].T
            powers = block[:, None, :] ** np.arange(self.q + 1)[None, :, None]
            mono = np.prod(powers[cells[None, :], self.exponents], axis=1)
            out[s:s + _POINT_CHUNK] = self.coefficients @ mono
        return out


def level_polynomial(e: ChaosExpansion, q: int) -> LevelPolynomial:
    """Collect ``sum_{a,b} c_a c_b E[H_a(X) H_b(Y)]`` into monomials of ``rho``."""
    terms = e.levels.get(q, ())
    acc: dict[tuple[int, ...], float] = {}
    for a, ca in terms:
        for b, cb in terms:
            for w, k in diagram_terms(tuple(a.exponents), tuple(b.exponents)):
                acc[k] = acc.get(k, 0.0) + ca * cb * w
    keys = sorted(acc)
    exps = np.array(keys, dtype=np.intp).reshape(len(keys), e.m * e.m)
    coefs = np.array([acc[k] for k in keys], dtype=float)
    return LevelPolynomial(q, e.m, exps, coefs)


@dataclass(frozen=True)
class ChaosCovariance:
    """Per-level covariance ``x -> C_{G_q}(x)`` for a fixed expansion and model."""

    expansion: ChaosExpansion
    model: CovarianceModel
    polynomials: tuple[LevelPolynomial, ...] = field(repr=False)

    @property
    def levels(self) -> tuple[int, ...]:
        return tuple(p.q for p in self.polynomials)

    def per_level(self, x) -> np.ndarray:
        """``(k, L)`` array of ``C_{G_q}(x)`` for the ``L`` stored levels ``q >= 1``."""
        x = np.asarray(x, dtype=float).reshape(-1, self.model.n)
        rho = eval_r(self.model, x)
        if not self.polynomials:
            return np.zeros((len(x), 0))
        return np.stack([p(rho) for p in self.polynomials], axis=-1)

    def __call__(self, x) -> np.ndarray:
        return self.per_level(x).sum(axis=-1)


def chaos_covariance(e: ChaosExpansion, model: CovarianceModel) -> ChaosCovariance:
    if e.m != model.m:
        raise DimensionMismatchError(
            f"expansion lives on R^{e.m} but the model has {model.m} channels")
    if not model.whitened:
        raise ModelError("C_G needs a whitened model (r(0) = Id); call whiten() first")
    polys = tuple(level_polynomial(e, q) for q in e.nonzero_levels())
    return ChaosCovariance(e, model, polys)


def c_G(e: ChaosExpansion, model: CovarianceModel, x, per_chaos: bool = False):
    """``C_G(x) = E[G(xi(x)) G(xi(0))]`` summed over the stored levels ``q >= 1``.

    With ``per_chaos=True`` returns ``{q: C_{G_q}(x)}`` instead.  A single lag
    gives floats, ``(k, n)`` lags give arrays.
    """
    cc = chaos_covariance(e, model)
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1 and x.size == model.n
    vals = cc.per_level(x)
    if per_chaos:
        return {q: (float(vals[0, i]) if single else vals[:, i]) for i, q in enumerate(cc.levels)}
    total = vals.sum(axis=-1)
    return float(total[0]) if single else total


def triangular_kernel(x: np.ndarray, s: float) -> np.ndarray:
    """``I_{2s}(x) = prod_i (1 - |x_i| / 2s)_+``."""
    return np.prod(np.clip(1.0 - np.abs(x) / (2.0 * s), 0.0, None), axis=-1)


def _integration_half_width(model: CovarianceModel, s: float | None, R: float | None) -> float:
    R = float(model.decay_radius if R is None else R)
    return R if s is None else min(2.0 * s, R)


def v_s_levels(e: ChaosExpansion, model: CovarianceModel, s: float, R: float | None = None,
               spec: QuadratureSpec = QuadratureSpec()) -> dict[int, float]:
    """Per-level ``V_s^(q) = int C_{G_q}(x) I_{2s}(x) dx``.

    The box is ``[-min(2s, R), min(2s, R)]^n``: past the decay radius ``R`` the
    integrand is below the declared decay threshold and is dropped.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    if model.n > 3:
        raise UnsupportedDimensionError(f"quadrature supports n <= 3, got {model.n}")
    cc = chaos_covariance(e, model)
    if not cc.polynomials:
        return {}
    width = _integration_half_width(model, s, R)
    res = integrate_box(lambda x: cc.per_level(x) * triangular_kernel(x, s)[:, None],
                        model.n, width, spec)
    return {q: float(v) for q, v in zip(cc.levels, np.atleast_1d(res.value))}


def v_s(e: ChaosExpansion, model: CovarianceModel, s: float, R: float | None = None,
        spec: QuadratureSpec = QuadratureSpec()) -> float:
    """``V_s = Var(L_s) = int C_G(x) I_{2s}(x) dx``."""
    return float(sum(v_s_levels(e, model, s, R, spec).values()))


@dataclass
class VarianceReport:
    """Limit variances per chaos level, optional finite-window values, and error bounds.

    ``chaos_tail_bound`` bounds the variance carried by the discarded levels
    ``q > q_max`` by ``(||G||^2 - captured mass) * int psi^d``;
    ``quadrature_tail_bound`` is the heuristic contribution from outside the
    box, ``||G||^2 psi(R)^d (2R)^n``.
    """

    label: str
    rank: int
    R: float
    V: float
    per_chaos: dict[int, float]
    chaos_tail_bound: float
    quadrature_tail_bound: float
    quadrature_error: float
    c1: C1Report
    s_values: list[float] = field(default_factory=list)
    v_s: list[float] = field(default_factory=list)
    v_s_per_chaos: list[dict[int, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "functional": self.label,
            "rank": self.rank,
            "R": self.R,
            "V": self.V,
            "V_per_chaos": {str(q): v for q, v in sorted(self.per_chaos.items())},
            "chaos_tail_bound": self.chaos_tail_bound,
            "quadrature_tail_bound": self.quadrature_tail_bound,
            "quadrature_error": self.quadrature_error,
            "V_s": [
                {"s": s, "V_s": v, "per_chaos": {str(q): x for q, x in sorted(pc.items())}}
                for s, v, pc in zip(self.s_values, self.v_s, self.v_s_per_chaos)
            ],
            "c1": self.c1.to_dict(),
            "note": "no convergence rate for V_s -> V is claimed; the sequence is reported as computed",
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["s", "V_s"])
        for s, v in zip(self.s_values, self.v_s):
            writer.writerow([repr(float(s)), repr(float(v))])
        return buf.getvalue()


def v_limit(e: ChaosExpansion, model: CovarianceModel, R: float | None = None,
            spec: QuadratureSpec = QuadratureSpec(), c1: C1Report | None = None,
            s_values: Sequence[float] = ()) -> VarianceReport:
    """``V^(q) = int C_{G_q}`` over ``[-R, R]^n`` and ``V = sum_q V^(q)``.

    Refuses with :class:`C1FailureError` unless (C1) holds numerically for the
    Hermite rank of ``e``.  Finite-window values ``V_s`` are added for every
    ``s`` in ``s_values``.
    """
    if model.n > 3:
        raise UnsupportedDimensionError(f"quadrature supports n <= 3, got {model.n}")
    d = hermite_rank(e)
    R = float(model.decay_radius if R is None else R)
    c1 = check_c1(model, d, R) if c1 is None else c1
    if not c1.passed:
        raise C1FailureError(
            f"(C1) not certified for d={d} on [-{R:g},{R:g}]^{model.n}: boundary max "
            f"{c1.boundary_max:.3g} >= {c1.threshold:g}", c1)
    cc = chaos_covariance(e, model)
    per_chaos: dict[int, float] = {}
    err = 0.0
    if cc.polynomials:
        res = integrate_box(cc.per_level, model.n, R, spec)
        per_chaos = {q: float(v) for q, v in zip(cc.levels, np.atleast_1d(res.value))}
        err = res.error
    norm2 = e.centered_mass + e.residual_mass
    report = VarianceReport(
        label=e.label, rank=d, R=R, V=float(sum(per_chaos.values())), per_chaos=per_chaos,
        chaos_tail_bound=e.residual_mass * c1.psi_integral,
        quadrature_tail_bound=norm2 * c1.psi_tail_estimate,
        quadrature_error=err, c1=c1)
    for s in s_values:
        levels = v_s_levels(e, model, s, R, spec)
        report.s_values.append(float(s))
        report.v_s.append(float(sum(levels.values())))
        report.v_s_per_chaos.append(levels)
    return report


__all__ = [
    "contingency_tables", "diagram_terms", "cross_covariance", "pair_expectation",
    "LevelPolynomial", "level_polynomial", "ChaosCovariance", "chaos_covariance", "c_G",
    "triangular_kernel", "v_s", "v_s_levels", "VarianceReport", "v_limit",
]
