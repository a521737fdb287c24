"""Adaptive tensor-product trapezoid rule on boxes ``[-W, W]^n``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BudgetExceededError, QuadratureError

_CHUNK = 1 << 15


@dataclass(frozen=True)
class QuadratureSpec:
    """Step-halving controls: stop when successive Richardson estimates agree.

    The grid always contains the origin, so kinks on the coordinate
    hyperplanes (such as the triangular window) sit on nodes.
    """

    rel_tol: float = 1e-6
    abs_tol: float = 1e-12
    initial_intervals: int = 64
    max_points: int = 1 << 22


@dataclass(frozen=True)
class IntegrationResult:
    value: np.ndarray | float
    error: float
    points: int
    intervals: int


def trapezoid_box(f: Callable[[np.ndarray], np.ndarray], n: int, half_width: float,
                  intervals: int) -> np.ndarray:
    """Plain tensor trapezoid with ``intervals`` cells per axis.

    ``f`` maps ``(k, n)`` points to ``(k,)`` or ``(k, p)`` values.  Points are
    fed in fixed-size chunks in C order, so the summation order only depends
    on ``intervals``.
    """
    axis = np.linspace(-half_width, half_width, intervals + 1)
    h = axis[1] - axis[0]
    w1 = np.full(intervals + 1, h)
    w1[[0, -1]] *= 0.5
    total = None
    count = (intervals + 1) ** n
    for start in range(0, count, _CHUNK):
        idx = np.unravel_index(np.arange(start, min(count, start + _CHUNK)), (intervals + 1,) * n)
        pts = np.stack([axis[i] for i in idx], axis=-1)
        w = np.prod(np.stack([w1[i] for i in idx], axis=-1), axis=-1)
        vals = np.asarray(f(pts), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise QuadratureError("integrand is not finite on the quadrature grid")
        part = np.tensordot(w, vals, axes=([0], [0]))
        total = part if total is None else total + part
    return total


def integrate_box(f: Callable[[np.ndarray], np.ndarray], n: int, half_width: float,
                  spec: QuadratureSpec = QuadratureSpec()) -> IntegrationResult:
    """Integrate ``f`` over ``[-half_width, half_width]^n`` to ``spec.rel_tol``.

    Each halving gives a trapezoid value ``T_k``; the Richardson combination
    ``T_k + (T_k - T_{k-1}) / 3`` removes the ``h^2`` term left by kinks.
    """
    if half_width <= 0:
        return IntegrationResult(0.0, 0.0, 0, 0)
    intervals = max(2, spec.initial_intervals + spec.initial_intervals % 2)
    prev_t = prev_r = None
    used = 0
    while True:
        points = (intervals + 1) ** n
        if used + points > spec.max_points:
            raise BudgetExceededError(
                f"trapezoid on [-{half_width:g},{half_width:g}]^{n} did not reach "
                f"rel_tol={spec.rel_tol:g} within {spec.max_points} points")
        t = trapezoid_box(f, n, half_width, intervals)
        used += points
        if prev_t is not None:
            r = t + (t - prev_t) / 3.0
            if prev_r is not None:
                err = float(np.max(np.abs(r - prev_r)))
                scale = float(np.max(np.abs(r)))
                if err <= spec.rel_tol * scale + spec.abs_tol:
                    return IntegrationResult(r, err, used, intervals)
            prev_r = r
        prev_t = t
        intervals *= 2
