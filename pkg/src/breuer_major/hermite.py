"""Probabilists' Hermite polynomials, multivariate chaos coefficients and Hermite rank.

Normalization: ``H_n`` is orthogonal with respect to the standard normal
density ``phi(x) = exp(-x**2 / 2) / sqrt(2 pi)`` (variance-1 weight), with
``E[H_p(X) H_q(X)] = p! * delta_pq``.  The physicists' polynomials (weight
``exp(-x**2)``) are never used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss

from .errors import (
    AbsentLevelError,
    DegenerateFunctionalError,
    DimensionMismatchError,
    QuadratureError,
    UnsupportedDegreeError,
    UnsupportedDimensionError,
)

MAX_DEGREE = 60
MAX_M = 4
MAX_Q = 12
NODE_BUDGET = 2**24
DROP_THRESHOLD = 1e-12
RANK_TOL = 1e-9
# phi(12) ~ 2e-32: truncation point for the piecewise rule used on non-smooth G
_TRUNCATION = 12.0


def hermite_eval(n: int, x):
    """Evaluate ``H_n(x)`` by ``H_{k+1} = x H_k - k H_{k-1}``.

    Works elementwise on arrays.  Degrees above ``MAX_DEGREE`` are refused
    because the values overflow double precision at moderate ``|x|``.
    """
    if n < 0 or int(n) != n:
        raise UnsupportedDegreeError(f"degree must be a nonnegative integer, got {n!r}")
    if n > MAX_DEGREE:
        raise UnsupportedDegreeError(f"degree {n} exceeds the supported cap {MAX_DEGREE}")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if n == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    h = x.copy()
    for k in range(1, n):
        h_prev, h = h, x * h - k * h_prev
    return h if h.ndim else float(h)


def hermite_table(q_max: int, x) -> np.ndarray:
    """Return ``T[k, ...] = H_k(x)`` for ``k = 0..q_max``."""
    x = np.asarray(x, dtype=float)
    out = np.empty((q_max + 1,) + x.shape)
    out[0] = 1.0
    if q_max >= 1:
        out[1] = x
    for k in range(1, q_max):
        out[k + 1] = x * out[k] - k * out[k - 1]
    return out


@dataclass(frozen=True, order=True)
class MultiIndex:
    exponents: tuple[int, ...]

    def __post_init__(self):
        exps = tuple(int(a) for a in self.exponents)
        if any(a < 0 for a in exps):
            raise ValueError(f"multi-index entries must be nonnegative: {exps}")
        object.__setattr__(self, "exponents", exps)

    def __len__(self):
        return len(self.exponents)

    def __iter__(self):
        return iter(self.exponents)

    def __getitem__(self, i):
        return self.exponents[i]

    def order(self) -> int:
        return sum(self.exponents)

    def factorial(self) -> int:
        return math.prod(math.factorial(a) for a in self.exponents)

    def __repr__(self):
        return f"MultiIndex{self.exponents}"


def multi_indices(m: int, q: int) -> Iterator[MultiIndex]:
    """All multi-indices of length ``m`` and order ``q``, in reverse-lexicographic order."""
    if m == 1:
        yield MultiIndex((q,))
        return
    for first in range(q, -1, -1):
        for rest in multi_indices(m - 1, q - first):
            yield MultiIndex((first,) + rest.exponents)


def multi_hermite_eval(a: MultiIndex | Sequence[int], x) -> float | np.ndarray:
    """``prod_i H_{a_i}(x_i)``; ``x`` may be a point or an array of points (last axis m)."""
    a = a if isinstance(a, MultiIndex) else MultiIndex(tuple(a))
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (len(a),):
        raise DimensionMismatchError(
            f"multi-index has length {len(a)} but point has shape {x.shape}")
    out = np.ones(x.shape[:-1])
    for i, ai in enumerate(a):
        if ai:
            out = out * hermite_eval(ai, x[..., i])
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Functional:
    """A map ``G: R^m -> R`` together with what the caller claims about it.

    ``evaluator`` receives an array of shape ``(k, m)`` and returns ``k`` values.
    ``integrability`` is the declared ``p`` with ``G in L^p(gamma_m)``;
    it is recorded, not proven.  ``breakpoints`` lists coordinates where ``G``
    has a jump or kink along every axis; when present, the chaos quadrature
    switches to a piecewise rule split at those points.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    m: int
    integrability: float = 2.0
    label: str = "G"
    breakpoints: tuple[float, ...] = ()
    mean: float | None = None

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.m:
            raise DimensionMismatchError(
                f"{self.label} expects points in R^{self.m}, got shape {x.shape}")
        flat = x.reshape(-1, self.m)
        out = np.asarray(self.evaluator(flat), dtype=float).reshape(x.shape[:-1])
        return out

    @property
    def smooth(self) -> bool:
        return not self.breakpoints


def gaussian_rule(G: Functional, order: int) -> tuple[np.ndarray, np.ndarray]:
    """One-dimensional nodes and weights integrating against the standard normal density.

    Smooth ``G``: Gauss-Hermite (probabilists') of the requested order.
    ``G`` with breakpoints: Gauss-Legendre with ``order`` nodes on each smooth
    piece of ``[-12, 12]``, which doubles the node count for one breakpoint.
    The per-axis size is reduced if the tensor grid would exceed ``NODE_BUDGET``.
    """
    per_axis_cap = int(round(NODE_BUDGET ** (1.0 / G.m)))
    if G.smooth:
        order = min(order, per_axis_cap)
        x, w = hermegauss(order)
        return x, w / math.sqrt(2 * math.pi)
    cuts = sorted({float(b) for b in G.breakpoints if abs(b) < _TRUNCATION})
    edges = [-_TRUNCATION, *cuts, _TRUNCATION]
    pieces = len(edges) - 1
    per_piece = max(2, min(order, per_axis_cap // pieces))
    t, wt = leggauss(per_piece)
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        xi = lo + half * (t + 1.0)
        xs.append(xi)
        ws.append(wt * half * np.exp(-0.5 * xi * xi) / math.sqrt(2 * math.pi))
    return np.concatenate(xs), np.concatenate(ws)


def evaluate_on_tensor_grid(G: Functional, nodes: np.ndarray) -> np.ndarray:
    """Values of ``G`` on the tensor grid ``nodes^m``; shape ``(len(nodes),) * m``."""
    k, m = len(nodes), G.m
    out = np.empty((k,) * m)
    if m == 1:
        out[:] = G(nodes[:, None])
    else:
        rest = np.stack(np.meshgrid(*([nodes] * (m - 1)), indexing="ij"), axis=-1)
        rest = rest.reshape(-1, m - 1)
        for i, xi in enumerate(nodes):
            pts = np.column_stack([np.full(len(rest), xi), rest])
            out[i] = G(pts).reshape((k,) * (m - 1))
    if not np.all(np.isfinite(out)):
        bad = np.argwhere(~np.isfinite(out))[0]
        node = tuple(float(nodes[j]) for j in bad)
        raise QuadratureError(f"{G.label} is not finite at quadrature node {node}")
    return out


@dataclass(frozen=True)
class ChaosExpansion:
    """Truncated Wiener chaos expansion ``G = sum_q sum_{|a|=q} c(G,a) H_a``.

    ``levels`` maps ``q`` to a tuple of ``(MultiIndex, coefficient)`` pairs.
    ``captured_mass`` is ``sum c^2 a!`` over every stored term (level 0 included
    when present) and ``total_mass`` the quadrature estimate of ``||G||^2``.
    """

    m: int
    q_max: int
    levels: dict[int, tuple[tuple[MultiIndex, float], ...]]
    captured_mass: float
    total_mass: float
    label: str = "G"
    quadrature_nodes: int = 0

    def __post_init__(self):
        for q, terms in self.levels.items():
            seen = set()
            for a, _ in terms:
                if a.order() != q or len(a) != self.m:
                    raise ValueError(f"term {a} does not belong to level {q}")
                if a in seen:
                    raise ValueError(f"duplicate multi-index {a} at level {q}")
                seen.add(a)

    @property
    def mean(self) -> float:
        """``G_0``, the level-0 coefficient (0 when the level is absent)."""
        terms = self.levels.get(0, ())
        return terms[0][1] if terms else 0.0

    @property
    def centered_mass(self) -> float:
        """Captured mass of the levels ``q >= 1``."""
        return self.captured_mass - self.mean**2

    @property
    def residual_mass(self) -> float:
        """``||G||^2`` not accounted for by the stored levels; clipped at 0."""
        return max(0.0, self.total_mass - self.captured_mass)

    def coefficient(self, a: MultiIndex | Sequence[int]) -> float:
        a = a if isinstance(a, MultiIndex) else MultiIndex(tuple(a))
        for b, c in self.levels.get(a.order(), ()):
            if b == a:
                return c
        return 0.0

    def nonzero_levels(self) -> list[int]:
        return sorted(q for q, terms in self.levels.items() if q >= 1 and terms)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "q_max": self.q_max,
            "levels": [
                {"q": q, "terms": [{"a": list(a.exponents), "c": c} for a, c in terms]}
                for q, terms in sorted(self.levels.items())
            ],
            "captured_mass": self.captured_mass,
            "total_mass": self.total_mass,
        }

    def to_json(self) -> str:
        from .jsonio import dumps17

        return dumps17(self.to_dict())

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ChaosExpansion":
        levels = {
            int(level["q"]): tuple(
                (MultiIndex(tuple(t["a"])), float(t["c"])) for t in level["terms"])
            for level in doc["levels"]
        }
        return cls(m=int(doc["m"]), q_max=int(doc["q_max"]), levels=levels,
                   captured_mass=float(doc["captured_mass"]),
                   total_mass=float(doc["total_mass"]))

    @classmethod
    def from_json(cls, text: str) -> "ChaosExpansion":
        import json

        return cls.from_dict(json.loads(text))


def chaos_coefficients(
    G: Functional,
    m: int | None = None,
    q_max: int = 6,
    quadrature_order: int = 64,
    drop_threshold: float = DROP_THRESHOLD,
) -> ChaosExpansion:
    """Compute ``c(G, a) = E[G(X) H_a(X)] / a!`` for all ``|a| <= q_max``.

    The projections onto all ``H_a`` with ``a_i <= q_max`` are obtained at once by
    contracting the tensor of ``G`` values with the weighted Hermite table along
    each axis.  Terms with ``|c| sqrt(a!) < drop_threshold`` are omitted.
    """
    m = G.m if m is None else m
    if m != G.m:
        raise DimensionMismatchError(f"functional {G.label} lives on R^{G.m}, not R^{m}")
    if m > MAX_M:
        raise UnsupportedDimensionError(f"tensor quadrature supports m <= {MAX_M}, got {m}")
    if not 0 <= q_max <= MAX_Q:
        raise ValueError(f"q_max must lie in [0, {MAX_Q}], got {q_max}")
    if quadrature_order < 2 * q_max:
        raise ValueError(
            f"quadrature_order={quadrature_order} is below 2*q_max={2 * q_max}")

    nodes, weights = gaussian_rule(G, quadrature_order)
    values = evaluate_on_tensor_grid(G, nodes)

    sq = values * values
    for _ in range(m):
        sq = np.tensordot(sq, weights, axes=([0], [0]))
    total_mass = float(sq)

    weighted = hermite_table(q_max, nodes) * weights
    proj = values
    for _ in range(m):
        proj = np.tensordot(proj, weighted, axes=([0], [1]))

    levels: dict[int, tuple[tuple[MultiIndex, float], ...]] = {}
    captured = 0.0
    for q in range(q_max + 1):
        terms = []
        for a in multi_indices(m, q):
            fact = a.factorial()
            c = float(proj[a.exponents]) / fact
            if abs(c) * math.sqrt(fact) < drop_threshold:
                continue
            terms.append((a, c))
            captured += c * c * fact
        if terms:
            levels[q] = tuple(terms)
    return ChaosExpansion(m=m, q_max=q_max, levels=levels, captured_mass=captured,
                          total_mass=total_mass, label=G.label,
                          quadrature_nodes=len(nodes) ** m)


def hermite_rank(e: ChaosExpansion, tol: float = RANK_TOL) -> int:
    """Smallest ``q >= 1`` carrying a coefficient with ``|c| > tol``."""
    for q in sorted(e.levels):
        if q >= 1 and any(abs(c) > tol for _, c in e.levels[q]):
            return q
    raise DegenerateFunctionalError(
        f"{e.label}: every coefficient of order 1..{e.q_max} is below {tol:g}; "
        "the degenerate (rank-free) case is excluded")


def evaluate_G_q(e: ChaosExpansion, q: int, x) -> float | np.ndarray:
    """Level-``q`` partial sum ``G_q(x) = sum_{|a|=q} c(G,a) H_a(x)``."""
    if q not in e.levels:
        raise AbsentLevelError(f"level {q} is not present in the expansion of {e.label}")
    x = np.asarray(x, dtype=float)
    total = np.zeros(x.shape[:-1])
    for a, c in e.levels[q]:
        total = total + c * multi_hermite_eval(a, x)
    return total if total.ndim else float(total)


def expansion_as_functional(e: ChaosExpansion, levels: Sequence[int] | None = None,
                            label: str | None = None) -> Functional:
    """The polynomial ``sum_{q in levels} G_q`` as a functional (defaults to all q >= 1)."""
    chosen = tuple(q for q in (levels if levels is not None else e.nonzero_levels())
                   if q in e.levels)

    def evaluate(x):
        return sum((evaluate_G_q(e, q, x) for q in chosen), np.zeros(len(x)))

    return Functional(evaluate, e.m, integrability=math.inf,
                      label=label or f"sum_q G_q[{e.label}]", mean=0.0)


__all__ = [
    "MAX_DEGREE", "MultiIndex", "Functional", "ChaosExpansion", "hermite_eval",
    "hermite_table", "multi_indices", "multi_hermite_eval", "gaussian_rule",
    "chaos_coefficients", "hermite_rank", "evaluate_G_q", "expansion_as_functional",
]
