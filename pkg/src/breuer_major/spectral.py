"""Spectral descriptions of jointly stationary Gaussian vector fields.

Convention used throughout the package: the cross-spectral density ``f`` is
defined by ``r(x) = int exp(i <t, x>) f(t) dt`` (no 2 pi factors in the
exponent, none in front), and a single-noise model has ``f_jk = alpha_j alpha_k``
with ``alpha`` real and even.  Under this convention ``int f_jj = r_jj(0) = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import ModelError
from .hermite import hermite_eval

# well below the required 1e-8 so that r(0) = Id holds to 1e-12 after quadrature
TAIL_MASS = 1e-14


@dataclass(frozen=True)
class SpectralModel:
    """Cross-spectral density on ``R^n`` for an ``m``-channel field.

    Exactly one of ``alpha`` (single-noise amplitude, ``(k, n) -> (k, m)``) or
    ``density`` (Hermitian matrix, ``(k, n) -> (k, m, m)``) defines the model.
    ``t_max`` bounds the frequency box outside of which each ``f_jj`` carries
    less than ``TAIL_MASS``.
    """

    n: int
    m: int
    t_max: float
    alpha: Callable[[np.ndarray], np.ndarray] | None = None
    density_fn: Callable[[np.ndarray], np.ndarray] | None = None
    label: str = "spectral"

    def __post_init__(self):
        if (self.alpha is None) == (self.density_fn is None):
            raise ModelError("give exactly one of alpha or density_fn")
        if not 1 <= self.n <= 3:
            raise ModelError(f"spectral models support n in 1..3, got {self.n}")

    @property
    def single_noise(self) -> bool:
        return self.alpha is not None

    def amplitude(self, t) -> np.ndarray:
        """``alpha(t)`` with shape ``(k, m)``; only for single-noise models."""
        if self.alpha is None:
            raise ModelError(f"{self.label} is not a single-noise model")
        t = np.atleast_2d(np.asarray(t, dtype=float))
        return np.asarray(self.alpha(t), dtype=float).reshape(len(t), self.m)

    def density(self, t) -> np.ndarray:
        t = np.atleast_2d(np.asarray(t, dtype=float))
        if self.alpha is not None:
            a = self.amplitude(t)
            return a[:, :, None] * a[:, None, :]
        return np.asarray(self.density_fn(t)).reshape(len(t), self.m, self.m)

    def grid(self, points_per_axis: int | None = None, t_max: float | None = None):
        """Tensor trapezoid nodes and weights on ``[-t_max, t_max]^n``."""
        if points_per_axis is None:
            points_per_axis = {1: 4097, 2: 513, 3: 97}[self.n]
        t_max = self.t_max if t_max is None else t_max
        axis = np.linspace(-t_max, t_max, points_per_axis)
        w1 = np.full(points_per_axis, axis[1] - axis[0])
        w1[[0, -1]] *= 0.5
        mesh = np.meshgrid(*([axis] * self.n), indexing="ij")
        nodes = np.stack([g.ravel() for g in mesh], axis=-1)
        weights = np.ones(len(nodes))
        for g in np.meshgrid(*([w1] * self.n), indexing="ij"):
            weights = weights * g.ravel()
        return nodes, weights

    def channel_masses(self, points_per_axis: int | None = None) -> np.ndarray:
        """``int f_jj(t) dt`` over the frequency box, one entry per channel."""
        t, w = self.grid(points_per_axis)
        diag = np.real(np.einsum("kjj->kj", self.density(t)))
        return w @ diag

    def check_normalized(self, tol: float = 1e-6) -> None:
        mass = self.channel_masses()
        if np.any(np.abs(mass - 1.0) > tol):
            raise ModelError(
                f"{self.label}: spectral masses {mass.tolist()} differ from 1 by more than {tol:g}")

    def linear_transform(self, a, label: str | None = None) -> "SpectralModel":
        """Spectral model of ``A xi``: ``alpha -> A alpha`` or ``f -> A f A^T``."""
        a = np.asarray(a, dtype=float)
        if a.shape != (self.m, self.m):
            raise ModelError(f"transform must be {self.m}x{self.m}")
        label = label or f"A*{self.label}"
        if self.alpha is not None:
            base = self.alpha
            return SpectralModel(self.n, self.m, self.t_max,
                                 alpha=lambda t: base(t) @ a.T, label=label)
        dens = self.density_fn
        return SpectralModel(self.n, self.m, self.t_max,
                             density_fn=lambda t: a @ dens(t) @ a.T, label=label)


def gaussian_spectral_density(t: np.ndarray, length_scale: float) -> np.ndarray:
    """Density of ``r(x) = exp(-|x|^2 / (2 l^2))``: ``(l / sqrt(2 pi))^n exp(-l^2 |t|^2 / 2)``."""
    n = t.shape[-1]
    ell = length_scale
    return (ell / math.sqrt(2 * math.pi)) ** n * np.exp(-0.5 * ell**2 * np.sum(t * t, axis=-1))


def _hermite_tail(k: int, u: float) -> float:
    """``int_{|z| > u} H_k(z)^2 / k! phi(z) dz``."""
    f = lambda z: hermite_eval(k, z) ** 2 / math.factorial(k) * math.exp(-0.5 * z * z)
    val, _ = integrate.quad(f, u, np.inf, epsabs=0.0, epsrel=1e-8)
    return 2.0 * val / math.sqrt(2 * math.pi)


def _cutoff(tail: Callable[[float], float], scale: float, step: float = 0.125) -> float:
    u = 1.0
    while tail(u) >= TAIL_MASS:
        u += step
    return u / scale


def hermite_gaussian(n: int = 1, m: int = 2, length_scale: float = 1.0,
                     rotation: float = 0.0) -> SpectralModel:
    """Single-noise model with mutually orthogonal amplitudes.

    ``alpha_j(t) = sqrt(g(t)) H_{2(j-1)}(l t_1) / sqrt((2(j-1))!)`` where ``g`` is
    the Gaussian density of ``exp(-|x|^2 / (2 l^2))``.  The amplitudes are real,
    even and orthonormal in ``L^2``, so ``r(0) = Id`` while every channel is
    driven by the same noise.  ``rotation`` (radians) mixes channels 1 and 2 by
    an orthogonal matrix, which keeps ``r(0) = Id``.
    """
    ell = float(length_scale)
    degrees = [2 * j for j in range(m)]
    norms = np.array([math.sqrt(math.factorial(d)) for d in degrees])
    q = np.eye(m)
    if rotation:
        c, s = math.cos(rotation), math.sin(rotation)
        q[:2, :2] = [[c, -s], [s, c]]

    def alpha(t):
        base = np.sqrt(gaussian_spectral_density(t, ell))
        u = ell * t[:, 0]
        cols = [base * hermite_eval(d, u) / z for d, z in zip(degrees, norms)]
        return np.column_stack(cols) @ q.T

    def tail(u):
        per_channel = sum(_hermite_tail(d, u) for d in degrees)
        return per_channel + m * (n - 1) * special.erfc(u / math.sqrt(2))

    label = f"hermite_gaussian(n={n},m={m},l={ell:g},rot={rotation:g})"
    return SpectralModel(n, m, _cutoff(tail, ell), alpha=alpha, label=label)


def gaussian_diagonal(n: int = 1, length_scales=(1.0, 1.0)) -> SpectralModel:
    """Independent channels with Gaussian covariances (two-noise, not single-noise)."""
    ells = np.asarray(length_scales, dtype=float)
    m = len(ells)

    def density(t):
        out = np.zeros((len(t), m, m))
        for j, ell in enumerate(ells):
            out[:, j, j] = gaussian_spectral_density(t, ell)
        return out

    tail = lambda u: m * n * special.erfc(u / math.sqrt(2))
    return SpectralModel(n, m, _cutoff(tail, float(ells.min())), density_fn=density,
                         label=f"gaussian_diagonal(n={n},l={ells.tolist()})")


REGISTRY = {
    "hermite_gaussian": hermite_gaussian,
    "gaussian_diagonal": gaussian_diagonal,
}
