"""The second-chaos matrix ``C`` and two closed forms for ``V^(2)``.

Trace route: ``V^(2) = 1/2 int Tr[r(x)^T C r(x) C] dx``.  For a centered
functional the second-chaos component is ``G_2(x) = (x^T C x - Tr C) / 2``,
and ``E[G_2(X) G_2(Y)] = Tr[rho^T C rho C] / 2`` when ``E[X Y^T] = rho``.  When
``r`` is symmetric (every real even spectral model) this is ``Tr[r C r C] / 2``.

Spectral route, with ``r(x) = int exp(i <t, x>) f(t) dt`` and ``f = alpha alpha^T``
for a real even ``alpha``:  ``V^(2) = (2 pi)^n / 2 * ||H||^2`` where
``H(t) = alpha(-t)^T C alpha(t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .covariance import CovarianceModel, eval_r
from .errors import ModelError, UnsupportedDimensionError
from .hermite import MAX_M, Functional, evaluate_on_tensor_grid, gaussian_rule
from .quadrature import QuadratureSpec, integrate_box
from .spectral import SpectralModel

CONVENTION = "density/plain-exponent"


@dataclass(frozen=True)
class SecondChaosMatrix:
    """``c_jk = E[G(X) X_j X_k]`` off the diagonal, ``c_jj = E[G(X)(X_j^2 - 1)]``."""

    C: np.ndarray
    label: str = "G"

    def __post_init__(self):
        c = np.asarray(self.C, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("C must be square")
        if np.max(np.abs(c - c.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(c), initial=0.0)):
            raise ValueError("C must be symmetric")
        object.__setattr__(self, "C", c)

    @property
    def m(self) -> int:
        return self.C.shape[0]

    def to_list(self) -> list:
        return self.C.tolist()


def c_matrix(G: Functional, m: int | None = None, quadrature_order: int = 64) -> SecondChaosMatrix:
    """Gauss-Hermite estimates of the defining integrals, symmetrized."""
    m = G.m if m is None else m
    if m != G.m:
        raise ValueError(f"functional lives on R^{G.m}, not R^{m}")
    if m > MAX_M:
        raise UnsupportedDimensionError(f"tensor quadrature supports m <= {MAX_M}, got {m}")
    nodes, weights = gaussian_rule(G, quadrature_order)
    values = evaluate_on_tensor_grid(G, nodes)

    def moment(factors):
        # contract axis i of the value tensor with weights * factors[i]
        out = values
        for f in factors:
            out = np.tensordot(out, weights * f, axes=([0], [0]))
        return float(out)

    ones = np.ones_like(nodes)
    c = np.zeros((m, m))
    for j in range(m):
        for k in range(m):
            factors = [ones] * m
            if j == k:
                factors[j] = nodes * nodes - 1.0
            else:
                factors[j] = nodes
                factors[k] = nodes
            c[j, k] = moment(factors)
    return SecondChaosMatrix(0.5 * (c + c.T), label=G.label)


def _matrix(C) -> np.ndarray:
    return C.C if isinstance(C, SecondChaosMatrix) else np.atleast_2d(np.asarray(C, dtype=float))


def trace_integrand(model: CovarianceModel, C, x) -> np.ndarray:
    """``Tr[r(x)^T C r(x) C] / 2`` at ``(k, n)`` lags."""
    c = _matrix(C)
    r = eval_r(model, np.asarray(x, dtype=float).reshape(-1, model.n))
    rc = r @ c
    rtc = np.swapaxes(r, -1, -2) @ c
    return 0.5 * np.einsum("kij,kji->k", rtc, rc)


def v2_trace(model: CovarianceModel, C, R: float | None = None,
             spec: QuadratureSpec = QuadratureSpec()) -> float:
    """``1/2 int_{[-R, R]^n} Tr[r(x)^T C r(x) C] dx``."""
    c = _matrix(C)
    if not model.whitened:
        raise ModelError("v2_trace needs a whitened model")
    if model.n > 3:
        raise UnsupportedDimensionError(f"quadrature supports n <= 3, got {model.n}")
    if c.shape != (model.m, model.m):
        raise ValueError(f"C must be {model.m}x{model.m}")
    if not np.any(c):
        return 0.0
    R = float(model.decay_radius if R is None else R)
    return float(integrate_box(lambda x: trace_integrand(model, c, x), model.n, R, spec).value)


def h_function(spec: SpectralModel, C, t) -> np.ndarray:
    """``H(t) = alpha(-t)^T C alpha(t)`` at ``(k, n)`` frequencies."""
    c = _matrix(C)
    t = np.atleast_2d(np.asarray(t, dtype=float))
    return np.einsum("ki,ij,kj->k", spec.amplitude(-t), c, spec.amplitude(t))


def v2_spectral(spec: SpectralModel, C, points_per_axis: int | None = None,
                tol: float = 1e-6) -> float:
    """``(2 pi)^n / 2 * int H(t)^2 dt`` by the trapezoid rule on ``[-t_max, t_max]^n``."""
    c = _matrix(C)
    if not spec.single_noise:
        raise ModelError("the spectral formula needs a single-noise model f = alpha alpha^T")
    if c.shape != (spec.m, spec.m):
        raise ValueError(f"C must be {spec.m}x{spec.m}")
    spec.check_normalized(tol)
    if not np.any(c):
        return 0.0
    t, w = spec.grid(points_per_axis)
    h = h_function(spec, c, t)
    return float((2 * math.pi) ** spec.n / 2 * (w @ (h * h)))


@dataclass(frozen=True)
class SecondChaosReport:
    C: SecondChaosMatrix
    V2_trace: float
    V2_spectral: float | None
    V2_chaos: float | None

    def to_dict(self) -> dict:
        return {"V2_trace": self.V2_trace, "V2_spectral": self.V2_spectral,
                "V2_chaos": self.V2_chaos, "C_matrix": self.C.to_list(),
                "convention": CONVENTION}


def second_chaos_report(G: Functional, model: CovarianceModel, quadrature_order: int = 64,
                        R: float | None = None, v2_chaos: float | None = None) -> SecondChaosReport:
    """``C``, the trace value and, for spectral-defined single-noise models, the spectral value."""
    C = c_matrix(G, quadrature_order=quadrature_order)
    trace = v2_trace(model, C, R)
    spectral = None
    if model.spectral is not None and model.spectral.single_noise:
        spectral = v2_spectral(model.spectral, C)
    return SecondChaosReport(C, trace, spectral, v2_chaos)


__all__ = [
    "CONVENTION", "SecondChaosMatrix", "c_matrix", "trace_integrand", "v2_trace",
    "h_function", "v2_spectral", "SecondChaosReport", "second_chaos_report",
]
