"""Independent reference values and brute-force oracles.

Nothing here imports the package.  Closed forms are derived by hand and
frozen as constants; the Isserlis oracle expands Hermite polynomials into
monomials with the explicit coefficient formula and sums over pair partitions.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np

SQRT_PI = math.sqrt(math.pi)

# int 2 exp(-x^2) dx over R
V_H2_GAUSSIAN = 2.0 * SQRT_PI  # 3.5449077018110318
# int exp(-x^2 / 2) dx
V_X1_GAUSSIAN = math.sqrt(2.0 * math.pi)  # 2.5066282746310002
# int exp(-x^2) dx
INT_EXP_X2 = SQRT_PI  # 1.7724538509055159
# x1*x2 on the Hermite-Gaussian pair with l = 1: C_G = exp(-x^2) (x^2 - 1)^2,
# int = (3/4 - 1 + 1) sqrt(pi)
V_PRODUCT_HG = 0.75 * SQRT_PI  # 1.3293403881791370
# V_s for H2 with s = 50: 2 sqrt(pi) - (2 / 100) int |x| exp(-x^2) dx = 2 sqrt(pi) - 0.02
V_S50_H2 = 2.0 * SQRT_PI - 0.02
# c(|x| - sqrt(2/pi), (2)) = (E|X|^3 - E|X|) / 2 = sqrt(2/pi) / 2 = 1 / sqrt(2 pi)
C2_ABS = 1.0 / math.sqrt(2.0 * math.pi)  # 0.3989422804014327
# c_11 = E[|X| (X^2 - 1)] = sqrt(2/pi)
C11_ABS = math.sqrt(2.0 / math.pi)  # 0.7978845608028654
# V^(2) for |x1| - sqrt(2/pi) with r_11 = exp(-x^2/2): (1/2) c_11^2 int r^2 = (1/pi) sqrt(pi)
V2_ABS_GAUSSIAN = 0.5 * C11_ABS**2 * SQRT_PI


def hermite_coefficients(n: int) -> dict[int, int]:
    """Monomial coefficients of the probabilists' ``H_n``: explicit sum, no recurrence."""
    return {n - 2 * k: (-1) ** k * math.factorial(n) // (math.factorial(k) * math.factorial(n - 2 * k) * 2**k)
            for k in range(n // 2 + 1)}


def hermite_explicit(n: int, x):
    x = np.asarray(x, dtype=float)
    return sum(c * x**p for p, c in hermite_coefficients(n).items())


@lru_cache(maxsize=1 << 16)
def _pairing_sum(variables: tuple[int, ...], cov: tuple[tuple[Fraction, ...], ...]) -> Fraction:
    """``E[prod z_v]`` for a centered Gaussian vector with covariance ``cov``, exactly."""
    if not variables:
        return Fraction(1)
    if len(variables) % 2:
        return Fraction(0)
    first, rest = variables[0], variables[1:]
    total = Fraction(0)
    for j in range(len(rest)):
        c = cov[first][rest[j]]
        if c != 0.0:
            total += c * _pairing_sum(rest[:j] + rest[j + 1:], cov)
    return total


def isserlis_pair_expectation(a, b, rho) -> float:
    """``E[H_a(X) H_b(Y)]`` by monomial expansion and Wick pairings.

    ``(X, Y)`` has covariance ``[[Id, rho], [rho^T, Id]]``; variable ``i < m``
    is ``X_i`` and ``m + j`` is ``Y_j``.  The entries of ``rho`` are taken as
    exact rationals, so the monomial cancellations cost no precision and the
    only rounding is the final conversion to float.
    """
    rho = np.asarray(rho, dtype=float)
    m = rho.shape[0]
    big = np.block([[np.eye(m), rho], [rho.T, np.eye(m)]])
    cov = tuple(tuple(Fraction(float(v)) for v in row) for row in big)

    def monomials(idx, offset):
        out = [((), 1)]
        for i, n in enumerate(idx):
            out = [(vars_ + (offset + i,) * p, coef * c)
                   for vars_, coef in out for p, c in hermite_coefficients(n).items()]
        return out

    total = Fraction(0)
    for vx, cx in monomials(a, 0):
        for vy, cy in monomials(b, m):
            total += cx * cy * _pairing_sum(tuple(sorted(vx + vy)), cov)
    return float(total)


def hermite_gaussian_r(x, length_scale: float = 1.0, rotation: float = 0.0) -> np.ndarray:
    """Closed-form covariance of the two-channel Hermite-Gaussian single-noise model.

    With ``u = x / l`` and ``z ~ N(0, 1)``: ``E[e^{izu}] = e^{-u^2/2}``,
    ``E[e^{izu} (z^2 - 1)] = -u^2 e^{-u^2/2}`` and
    ``E[e^{izu} (z^2 - 1)^2] = (u^4 - 4u^2 + 2) e^{-u^2/2}``, so
    ``r_11 = e^{-u^2/2}``, ``r_12 = r_21 = -u^2 e^{-u^2/2} / sqrt 2`` and
    ``r_22 = (u^4 - 4u^2 + 2) e^{-u^2/2} / 2``.  A rotation ``Q`` of the
    channels gives ``Q r Q^T``.
    """
    u = np.asarray(x, dtype=float) / length_scale
    e = np.exp(-0.5 * u * u)
    r = np.empty(u.shape + (2, 2))
    r[..., 0, 0] = e
    r[..., 0, 1] = r[..., 1, 0] = -u * u * e / math.sqrt(2.0)
    r[..., 1, 1] = (u**4 - 4 * u * u + 2) * e / 2.0
    c, s = math.cos(rotation), math.sin(rotation)
    q = np.array([[c, -s], [s, c]])
    return q @ r @ q.T


def random_feasible_rho(m: int, rng: np.random.Generator) -> np.ndarray:
    """``E[X Y^T]`` for a random jointly Gaussian pair with standard margins.

    Draw a random ``2m x 2m`` covariance and whiten each diagonal block with
    its Cholesky factor; the transformed off-diagonal block is ``rho``.
    """
    while True:
        a = rng.standard_normal((2 * m, 2 * m))
        cov = a @ a.T + 0.2 * np.eye(2 * m)
        sx = np.linalg.cholesky(cov[:m, :m])
        sy = np.linalg.cholesky(cov[m:, m:])
        rho = np.linalg.solve(sx, cov[:m, m:]) @ np.linalg.inv(sy).T
        if np.all(np.abs(rho) < 1):
            return rho
