"""Registry of named functionals ``G: R^m -> R`` used by the CLI and the tests.

Every registered functional is centered under the standard Gaussian measure,
so the level-0 chaos is absent and Hermite ranks are exact.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .hermite import Functional, hermite_eval

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def _channel(m: int, j: int) -> int:
    if not 1 <= j <= m:
        raise ValueError(f"channel {j} outside 1..{m}")
    return j - 1


def hermite(m: int, degree: int, channel: int = 1) -> Functional:
    """``H_degree(x_channel)``: rank ``degree``."""
    i = _channel(m, channel)
    return Functional(lambda x: hermite_eval(degree, x[:, i]), m, math.inf,
                      f"H{degree}(x{channel})", mean=0.0)


def coordinate(m: int, channel: int = 1) -> Functional:
    i = _channel(m, channel)
    return Functional(lambda x: x[:, i].copy(), m, math.inf, f"x{channel}", mean=0.0)


def product(m: int, first: int = 1, second: int = 2) -> Functional:
    """``x_first * x_second`` for distinct channels: rank 2."""
    if first == second:
        raise ValueError("product needs two distinct channels; use hermite(degree=2)")
    i, j = _channel(m, first), _channel(m, second)
    return Functional(lambda x: x[:, i] * x[:, j], m, math.inf,
                      f"x{first}*x{second}", mean=0.0)


def abs_centered(m: int, channel: int = 1) -> Functional:
    """``|x_channel| - sqrt(2/pi)``: even, rank 2, kink at 0."""
    i = _channel(m, channel)
    return Functional(lambda x: np.abs(x[:, i]) - SQRT_2_OVER_PI, m, math.inf,
                      f"|x{channel}|-sqrt(2/pi)", breakpoints=(0.0,), mean=0.0)


def sign(m: int, channel: int = 1) -> Functional:
    """``sign(x_channel)``: odd, rank 1, jump at 0, bounded."""
    i = _channel(m, channel)
    return Functional(lambda x: np.sign(x[:, i]), m, math.inf, f"sign(x{channel})",
                      breakpoints=(0.0,), mean=0.0)


def quadratic_form(matrix) -> Functional:
    """``(x^T C x - tr C) / 2`` for a symmetric ``C``: pure second chaos with matrix ``C``."""
    c = np.asarray(matrix, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or not np.allclose(c, c.T):
        raise ValueError("quadratic_form needs a symmetric square matrix")
    tr = float(np.trace(c))
    return Functional(lambda x: 0.5 * (np.einsum("ki,ij,kj->k", x, c, x) - tr),
                      c.shape[0], math.inf, "quadform", mean=0.0)


REGISTRY: dict[str, Callable[..., Functional]] = {
    "hermite": hermite,
    "coordinate": coordinate,
    "product": product,
    "abs": abs_centered,
    "sign": sign,
    "quadratic_form": quadratic_form,
}


def build(name: str, m: int, **params) -> Functional:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown functional {name!r}; choose from {sorted(REGISTRY)}") from None
    if name == "quadratic_form":
        g = factory(params["matrix"])
        if g.m != m:
            raise ValueError(f"quadratic_form matrix is {g.m}x{g.m} but m={m}")
        return g
    return factory(m, **params)
