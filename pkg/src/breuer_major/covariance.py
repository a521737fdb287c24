"""Matrix-valued stationary covariances, whitening, the psi majorant and (C1) checks.

(C1) is the short-range condition ``int psi(x)^d dx < inf`` where
``psi(x) = max_ij |r_ij(x)|`` and ``d`` is the Hermite rank of the functional.

Orientation: ``r_ij(x - y) = E[xi_i(x) xi_j(y)]``, hence ``r(-x) = r(x)^T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import (
    ModelError,
    NotWhitenableError,
    UnsupportedDimensionError,
)
from .hermite import Functional
from .spectral import SpectralModel

WHITE_TOL = 1e-12
MAX_CONDITION = 1e8
DECAY_THRESHOLD = 1e-6
_KERNEL_FLOOR = 1e-7
_CHUNK = 1 << 14


@dataclass(frozen=True)
class CovarianceModel:
    """``x -> r(x)`` for an ``m``-channel field on ``R^n``.

    ``kernel`` maps ``(k, n)`` lags to ``(k, m, m)`` matrices.  ``decay_radius``
    is the radius past which the caller asserts ``max |r_jk|`` is negligible.
    """

    n: int
    m: int
    kernel: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    decay_radius: float
    kind: str
    params: Mapping = field(default_factory=dict)
    spectral: SpectralModel | None = field(default=None, repr=False)
    whitened: bool = False

    def __post_init__(self):
        r0 = self.kernel(np.zeros((1, self.n)))[0]
        object.__setattr__(self, "whitened",
                           bool(np.max(np.abs(r0 - np.eye(self.m))) <= WHITE_TOL))

    def __call__(self, x) -> np.ndarray:
        return eval_r(self, x)

    def describe(self) -> dict:
        return {"kind": self.kind, "n": self.n, "m": self.m,
                "decay_radius": self.decay_radius, "whitened": self.whitened,
                "params": dict(self.params)}


def eval_r(model: CovarianceModel, x) -> np.ndarray:
    """``r(x)``: an ``(m, m)`` matrix for one lag, ``(k, m, m)`` for ``(k, n)`` lags."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x.reshape(-1, model.n)
    out = np.asarray(model.kernel(pts), dtype=float).reshape(len(pts), model.m, model.m)
    if not np.all(np.isfinite(out)):
        raise ModelError(f"{model.kind}: non-finite covariance entry")
    return out[0] if single else out


def _mixed(n, latent_kernels, mixing):
    """``r(x) = A diag(k_1(x), ..., k_p(x)) A^T``: PSD for PSD scalar kernels."""
    a = np.asarray(mixing, dtype=float)

    def kernel(x):
        d = np.stack([k(x) for k in latent_kernels], axis=-1)
        return np.einsum("ip,kp,jp->kij", a, d, a)

    return kernel


def _mixing(mixing, p):
    return np.eye(p) if mixing is None else np.atleast_2d(np.asarray(mixing, dtype=float))


def gaussian(n: int = 1, length_scales=(1.0,), mixing=None, decay_radius=None) -> CovarianceModel:
    """Latent channels with ``exp(-|x|^2 / (2 l^2))``, optionally mixed by ``A``."""
    ells = [float(v) for v in np.atleast_1d(length_scales)]
    a = _mixing(mixing, len(ells))
    kernels = [lambda x, l=l: np.exp(-0.5 * np.sum(x * x, axis=-1) / l**2) for l in ells]
    radius = decay_radius or math.ceil(max(ells) * math.sqrt(2 * math.log(1 / _KERNEL_FLOOR)))
    return CovarianceModel(n, a.shape[0], _mixed(n, kernels, a), float(radius), "gaussian",
                           {"length_scales": ells, "mixing": a.tolist()})


def exponential(n: int = 1, length_scales=(1.0,), mixing=None, decay_radius=None) -> CovarianceModel:
    ells = [float(v) for v in np.atleast_1d(length_scales)]
    a = _mixing(mixing, len(ells))
    kernels = [lambda x, l=l: np.exp(-np.sqrt(np.sum(x * x, axis=-1)) / l) for l in ells]
    radius = decay_radius or math.ceil(max(ells) * math.log(1 / _KERNEL_FLOOR))
    return CovarianceModel(n, a.shape[0], _mixed(n, kernels, a), float(radius), "exponential",
                           {"length_scales": ells, "mixing": a.tolist()})


def triangular(n: int = 1, widths=(1.0,), mixing=None) -> CovarianceModel:
    """Separable ``prod_i max(0, 1 - |x_i| / w)``: compact support ``[-w, w]^n``."""
    ws = [float(v) for v in np.atleast_1d(widths)]
    a = _mixing(mixing, len(ws))
    kernels = [lambda x, w=w: np.prod(np.clip(1.0 - np.abs(x) / w, 0.0, None), axis=-1)
               for w in ws]
    return CovarianceModel(n, a.shape[0], _mixed(n, kernels, a), float(max(ws)), "triangular",
                           {"widths": ws, "mixing": a.tolist()})


def power_law(n: int = 1, exponent: float = 0.3, length_scale: float = 1.0,
              decay_radius: float = 10.0) -> CovarianceModel:
    """Scalar ``(1 + |x|^2 / l^2)^(-exponent)``; integrable in ``n = 1`` only for exponent > 1/2."""
    beta, ell = float(exponent), float(length_scale)
    k = lambda x: (1.0 + np.sum(x * x, axis=-1) / ell**2) ** (-beta)
    return CovarianceModel(n, 1, _mixed(n, [k], np.eye(1)), float(decay_radius), "power",
                           {"exponent": beta, "length_scale": ell})


def lagged(n: int = 1, length_scale: float = 1.0, shift=(1.0,), decay_radius=None) -> CovarianceModel:
    """Two channels built from one Gaussian-covariance field ``eta``.

    ``xi_1(x) = eta(x)`` and ``xi_2(x) = (eta(x + d) - k(d) eta(x)) / sqrt(1 - k(d)^2)``.
    Both are linear filters of ``eta``, so the pair is jointly stationary with
    ``r(0) = Id``, but ``r(x)`` is not symmetric: ``r_12(x) != r_21(x)``.
    """
    ell = float(length_scale)
    d = np.resize(np.asarray(shift, dtype=float), n)
    k = lambda x: np.exp(-0.5 * np.sum(x * x, axis=-1) / ell**2)
    kd = float(k(d[None, :])[0])
    if kd >= 1.0 - 1e-12:
        raise ModelError("shift too small: channels would be collinear")
    sig = math.sqrt(1.0 - kd * kd)

    def kernel(x):
        k0, km, kp = k(x), k(x - d), k(x + d)
        out = np.empty((len(x), 2, 2))
        out[:, 0, 0] = k0
        out[:, 0, 1] = (km - kd * k0) / sig
        out[:, 1, 0] = (kp - kd * k0) / sig
        out[:, 1, 1] = (k0 * (1 + kd * kd) - kd * (km + kp)) / sig**2
        return out

    radius = decay_radius or math.ceil(
        float(np.max(np.abs(d))) + ell * math.sqrt(2 * math.log(1 / _KERNEL_FLOOR)))
    return CovarianceModel(n, 2, kernel, float(radius), "lagged",
                           {"length_scale": ell, "shift": d.tolist()})


def from_spectral(spec: SpectralModel, decay_radius: float = 12.0,
                  points_per_axis: int | None = None) -> CovarianceModel:
    """``r(x) = int exp(i <t, x>) f(t) dt`` by the trapezoid rule on the frequency box."""
    t, w = spec.grid(points_per_axis)
    f = spec.density(t)
    real = bool(np.all(np.abs(np.imag(f)) == 0))
    fw = np.real(f) * w[:, None, None] if real else f * w[:, None, None]

    step = max(1, (1 << 22) // len(t))

    def kernel(x):
        out = np.empty((len(x), spec.m, spec.m))
        for s in range(0, len(x), step):
            phase = x[s:s + step] @ t.T
            if real:
                # f real and even in t: the sine part integrates to zero
                out[s:s + step] = np.einsum("kt,tij->kij", np.cos(phase), fw)
            else:
                out[s:s + step] = np.real(np.einsum("kt,tij->kij", np.exp(1j * phase), fw))
        return out

    return CovarianceModel(spec.n, spec.m, kernel, float(decay_radius), "spectral",
                           {"spectral": spec.label, "t_max": spec.t_max}, spectral=spec)


def linear_transform(model: CovarianceModel, a, kind: str | None = None) -> CovarianceModel:
    """Covariance of ``A xi``: ``r -> A r A^T``."""
    a = np.asarray(a, dtype=float)
    base = model.kernel
    spec = model.spectral.linear_transform(a) if model.spectral is not None else None
    return CovarianceModel(model.n, model.m,
                           lambda x: np.einsum("ip,kpq,jq->kij", a, base(x), a),
                           model.decay_radius, kind or model.kind,
                           {**dict(model.params), "transform": a.tolist()}, spectral=spec)


REGISTRY = {
    "gaussian": gaussian,
    "exponential": exponential,
    "triangular": triangular,
    "power": power_law,
    "lagged": lagged,
}


def whiten(model: CovarianceModel, G: Functional) -> tuple[CovarianceModel, Functional]:
    """Change coordinates so that ``r(0) = Id``.

    With ``S = r(0)^{1/2}`` (symmetric root) the new pair is
    ``r'(x) = S^-1 r(x) S^-1`` and ``G'(y) = G(S y)``; ``G'(xi')`` and
    ``G(xi)`` have the same law.  Already-white models are returned untouched.
    """
    if G.m != model.m:
        raise ModelError(f"functional lives on R^{G.m} but the field has {model.m} channels")
    if model.whitened:
        return model, G
    sigma = eval_r(model, np.zeros(model.n))
    if np.max(np.abs(sigma - sigma.T)) > 1e-12 * max(1.0, np.max(np.abs(sigma))):
        raise NotWhitenableError("r(0) is not symmetric")
    lam, u = np.linalg.eigh(sigma)
    if lam[0] <= 0 or lam[-1] / lam[0] > MAX_CONDITION:
        raise NotWhitenableError(
            f"r(0) is singular or ill-conditioned (eigenvalues {lam.tolist()})")
    root = (u * np.sqrt(lam)) @ u.T
    inv_root = (u / np.sqrt(lam)) @ u.T
    white = linear_transform(model, inv_root, kind=f"whitened {model.kind}")

    breakpoints = ()
    if G.breakpoints:
        diagonal = np.allclose(root, np.diag(np.diag(root)), atol=0, rtol=0)
        if diagonal and all(b == 0.0 for b in G.breakpoints):
            breakpoints = G.breakpoints
        elif np.allclose(root, root[0, 0] * np.eye(model.m), atol=0, rtol=0):
            breakpoints = tuple(b / root[0, 0] for b in G.breakpoints)
    base = G.evaluator
    g_white = Functional(lambda y: base(y @ root.T), G.m, G.integrability,
                         f"{G.label}(S y)", breakpoints=breakpoints, mean=G.mean)
    # exact identity after rounding: snap r'(0) to Id
    if not white.whitened:
        r0 = eval_r(white, np.zeros(model.n))
        if np.max(np.abs(r0 - np.eye(model.m))) > 1e-10:
            raise NotWhitenableError("whitening lost accuracy; r(0) is too ill-conditioned")
        correction = np.linalg.inv(np.linalg.cholesky(r0))
        white = linear_transform(white, correction, kind=white.kind)
        base2 = g_white.evaluator
        back = np.linalg.inv(correction)
        g_white = Functional(lambda y: base2(y @ back.T), G.m, G.integrability,
                             g_white.label, breakpoints=(), mean=G.mean)
    return white, g_white


def psi(model: CovarianceModel, x) -> float | np.ndarray:
    """``max(max row sum, max column sum)`` of ``|r(x)|``."""
    r = np.abs(eval_r(model, x))
    rows = r.sum(axis=-1).max(axis=-1)
    cols = r.sum(axis=-2).max(axis=-1)
    out = np.maximum(rows, cols)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class C1Report:
    """Numerical certificate for ``r_jk in L^d`` on a truncated box.

    The integrals are over ``[-R, R]^n`` only; membership of ``L^d(R^n)``
    is not machine-checkable in general, so ``passed`` additionally asks that
    ``max |r_jk| < threshold`` everywhere on the box boundary.
    """

    d: int
    R: float
    pair_integrals: list
    psi_integral: float
    boundary_max: float
    psi_boundary: float
    psi_tail_estimate: float
    threshold: float
    passed: bool
    caveat: str = ("integrability certified on a truncated box with a declared decay "
                   "radius; tails beyond R are estimated, not proven")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _box_boundary(n: int, R: float, res: int) -> np.ndarray:
    if n == 1:
        return np.array([[-R], [R]])
    axis = np.linspace(-R, R, res)
    faces = []
    for i in range(n):
        mesh = np.meshgrid(*([axis] * (n - 1)), indexing="ij")
        rest = np.stack([g.ravel() for g in mesh], axis=-1)
        for sgn in (-R, R):
            faces.append(np.insert(rest, i, sgn, axis=1))
    return np.concatenate(faces)


def check_c1(model: CovarianceModel, d: int, R: float | None = None,
             grid_resolution: int | None = None, threshold: float = DECAY_THRESHOLD) -> C1Report:
    if model.n > 3:
        raise UnsupportedDimensionError(f"(C1) quadrature supports n <= 3, got {model.n}")
    if not model.whitened:
        raise ModelError("(C1) is stated for whitened models; call whiten() first")
    if d < 1:
        raise ValueError("Hermite rank must be >= 1")
    R = float(model.decay_radius if R is None else R)
    if grid_resolution is None:
        grid_resolution = {1: 8193, 2: 1025, 3: 129}[model.n]
    n, m = model.n, model.m
    axis = np.linspace(-R, R, grid_resolution)
    w1 = np.full(grid_resolution, axis[1] - axis[0])
    w1[[0, -1]] *= 0.5
    count = grid_resolution**n
    pair = np.zeros((m, m))
    psi_int = 0.0
    for start in range(0, count, _CHUNK):
        idx = np.unravel_index(np.arange(start, min(count, start + _CHUNK)), (grid_resolution,) * n)
        pts = np.stack([axis[i] for i in idx], axis=-1)
        w = np.prod(np.stack([w1[i] for i in idx], axis=-1), axis=-1)
        r = np.abs(eval_r(model, pts))
        pair += np.einsum("k,kij->ij", w, r**d)
        p = np.maximum(r.sum(axis=-1).max(axis=-1), r.sum(axis=-2).max(axis=-1))
        psi_int += float(w @ p**d)
    edge = _box_boundary(n, R, min(grid_resolution, 257))
    r_edge = np.abs(eval_r(model, edge))
    boundary_max = float(r_edge.max())
    psi_edge = float(np.max(np.maximum(r_edge.sum(axis=-1).max(axis=-1),
                                       r_edge.sum(axis=-2).max(axis=-1))))
    tail = psi_edge**d * (2 * R) ** n
    passed = bool(np.all(np.isfinite(pair)) and math.isfinite(psi_int)
                  and boundary_max < threshold)
    return C1Report(d=d, R=R, pair_integrals=pair.tolist(), psi_integral=psi_int,
                    boundary_max=boundary_max, psi_boundary=psi_edge,
                    psi_tail_estimate=tail, threshold=threshold, passed=passed)
