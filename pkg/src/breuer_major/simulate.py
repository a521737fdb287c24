"""Spectral synthesis of jointly stationary Gaussian vector fields on ``[-s, s]^n``.

The field is synthesized on the padded box ``[-2s, 2s]^n`` with ``2N`` points
per axis and cropped to the central ``N^n`` sites, so the torus wrap-around
sits a distance ``2s`` away from every retained pair of sites.  With period
``L = 4s`` the frequencies are ``t_k = 2 pi k / L`` for ``k`` in
``[-N, N)``; the synthesized value at padded index ``g`` is

    xi(g h) = sum_k exp(i t_k g h) A(t_k) Z_k dt^(n/2),

where ``A = alpha`` (single noise, one complex normal per frequency) or a
symmetric square root of ``f`` (general density, ``m`` complex normals per
frequency).  ``Z_{-k} = conj(Z_k)`` makes the sum real; the two self-conjugate
bins per axis (zero and Nyquist) receive real standard normals.  Sites are
cell midpoints ``-s + (g + 1/2) h``; since the field is stationary, the
half-cell offset is a translation in law and no phase factor is applied.
"""

from __future__ import annotations

import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import GridError, ModelError
from .jsonio import dumps17
from .rng import indexed_normals
from .spectral import SpectralModel

MAGIC = b"BMF1"
MAX_SITES = 1 << 24
PSD_TOL = 1e-10


@dataclass(frozen=True)
class GridSpec:
    """``N`` midpoint sites per axis on ``[-s, s]^n``, spacing ``h = 2s / N``."""

    n: int
    s: float
    N: int

    def __post_init__(self):
        if not 1 <= self.n <= 3:
            raise GridError(f"n must lie in 1..3, got {self.n}")
        if self.s <= 0:
            raise GridError("s must be positive")
        if self.N < 8 or self.N & (self.N - 1):
            raise GridError(f"N must be a power of two >= 8, got {self.N}")
        if self.N**self.n > MAX_SITES:
            raise GridError(f"N^n = {self.N**self.n} exceeds the budget of {MAX_SITES} sites")

    @property
    def h(self) -> float:
        return 2.0 * self.s / self.N

    @property
    def sites(self) -> int:
        return self.N**self.n

    def axis(self) -> np.ndarray:
        return -self.s + (np.arange(self.N) + 0.5) * self.h

    def coordinates(self) -> np.ndarray:
        """``(N^n, n)`` site coordinates in row-major order."""
        mesh = np.meshgrid(*([self.axis()] * self.n), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    def to_dict(self) -> dict:
        return {"n": self.n, "s": self.s, "N": self.N, "h": self.h}


@dataclass(frozen=True)
class FieldSample:
    """Field values at the sites of ``grid``: shape ``(N^n, m)``, row-major sites."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)
    seed: int
    model_id: str
    stream: int = 0
    imag_residue: float = 0.0

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def as_array(self) -> np.ndarray:
        """Values reshaped to ``(N, ..., N, m)``."""
        return self.values.reshape((self.grid.N,) * self.grid.n + (self.m,))

    def save(self, path: str | Path) -> tuple[Path, Path]:
        """Write ``path`` (binary) and ``path`` + ``.json`` (sidecar)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = MAGIC + struct.pack("<III", self.grid.n, self.m, self.grid.N)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        sidecar = path.with_name(path.name + ".json")
        sidecar.write_text(dumps17({"seed": self.seed, "stream": self.stream,
                                    "model_id": self.model_id, "grid": self.grid.to_dict()}))
        return path, sidecar

    @classmethod
    def load(cls, path: str | Path) -> "FieldSample":
        path = Path(path)
        raw = path.read_bytes()
        if raw[:4] != MAGIC:
            raise GridError(f"{path}: not a field sample (bad magic)")
        n, m, N = struct.unpack("<III", raw[4:16])
        values = np.frombuffer(raw, dtype="<f8", offset=16)
        if values.size != N**n * m:
            raise GridError(f"{path}: expected {N**n * m} values, found {values.size}")
        meta = json.loads(path.with_name(path.name + ".json").read_text())
        grid = GridSpec(n, float(meta["grid"]["s"]), N)
        return cls(grid, values.reshape(N**n, m).astype(float), int(meta["seed"]),
                   meta["model_id"], int(meta.get("stream", 0)))


def _neg_index(a: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
    """``a[-k mod M]`` along each of ``axes``."""
    return np.roll(np.flip(a, axis=axes), 1, axis=axes)


class Synthesizer:
    """Precomputed spectral amplitudes for one ``(spec, grid)`` pair.

    ``t_max`` (default ``spec.t_max``) truncates the frequency box; the FFT
    grid must reach it, ``pi / h >= t_max``.
    """

    def __init__(self, spec: SpectralModel, grid: GridSpec, t_max: float | None = None):
        if spec.n != grid.n:
            raise GridError(f"spectral model is on R^{spec.n} but the grid on R^{grid.n}")
        self.spec, self.grid = spec, grid
        self.t_max = float(spec.t_max if t_max is None else t_max)
        if math.pi / grid.h < self.t_max * (1 - 1e-12):
            raise GridError(
                f"grid Nyquist frequency pi/h = {math.pi / grid.h:.4g} does not cover "
                f"t_max = {self.t_max:.4g}; increase N or decrease s")
        n, M = grid.n, 2 * grid.N
        self.M = M
        self.dt = 2.0 * math.pi / (4.0 * grid.s)
        k = np.fft.fftfreq(M, d=1.0 / M)
        mesh = np.meshgrid(*([k * self.dt] * n), indexing="ij")
        t = np.stack([g.ravel() for g in mesh], axis=-1)
        inside = np.all(np.abs(t) <= self.t_max, axis=-1)
        scale = self.dt ** (n / 2)
        m = spec.m
        if spec.single_noise:
            amp = np.zeros((len(t), m))
            amp[inside] = spec.amplitude(t[inside])
            self.amplitude = (amp * scale).T.reshape((m,) + (M,) * n)
            self.noises = 1
        else:
            f = np.zeros((len(t), m, m), dtype=complex)
            f[inside] = spec.density(t[inside])
            if np.any(np.imag(f) != 0):
                raise ModelError("complex cross-spectra are not supported; use a real even density")
            lam, u = np.linalg.eigh(np.real(f))
            if lam.min() < -PSD_TOL:
                bad = t[np.argmin(lam.min(axis=-1))]
                raise ModelError(f"f(t) is not PSD at t = {bad.tolist()} (eigenvalue {lam.min():.3g})")
            root = np.einsum("kij,kj,klj->kil", u, np.sqrt(np.clip(lam, 0.0, None)), u)
            self.amplitude = (root * scale).transpose(1, 2, 0).reshape((m, m) + (M,) * n)
            self.noises = m

    def noise(self, seed: int, stream: int = 0) -> np.ndarray:
        """Hermitian complex normals ``Z``, shape ``(noises, M, ..., M)``."""
        n, M, p = self.grid.n, self.M, self.noises
        z = indexed_normals(seed, stream, 0, M**n, 2 * p)
        w = (z[:, 0::2] + 1j * z[:, 1::2]) / math.sqrt(2.0)
        w = w.T.reshape((p,) + (M,) * n)
        axes = tuple(range(1, n + 1))
        return (w + np.conj(_neg_index(w, axes))) / math.sqrt(2.0)

    def sample(self, seed: int, stream: int = 0, model_id: str | None = None) -> FieldSample:
        n, M, N = self.grid.n, self.M, self.grid.N
        z = self.noise(seed, stream)
        if self.noises == 1:
            coef = self.amplitude * z
        else:
            coef = np.einsum("ij...,j...->i...", self.amplitude, z)
        axes = tuple(range(1, n + 1))
        full = np.fft.ifftn(coef, axes=axes) * M**n
        imag = float(np.max(np.abs(full.imag))) if full.size else 0.0
        crop = (slice(None),) + (slice(N // 2, N // 2 + N),) * n
        values = np.ascontiguousarray(full.real[crop].reshape(self.spec.m, -1).T)
        return FieldSample(self.grid, values, int(seed), model_id or self.spec.label,
                           int(stream), imag)


def simulate(spec: SpectralModel, grid: GridSpec, seed: int, stream: int = 0,
             t_max: float | None = None) -> FieldSample:
    """One realization; bit-identical for identical ``(spec, grid, seed, stream)``."""
    return Synthesizer(spec, grid, t_max).sample(seed, stream)


def simulate_many(spec: SpectralModel, grid: GridSpec, seeds: Sequence[int],
                  threads: int = 1, stream: int = 0) -> list[FieldSample]:
    """Realizations for each seed, in seed order; ``threads`` does not change any value."""
    synth = Synthesizer(spec, grid)
    if threads <= 1:
        return [synth.sample(s, stream) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: synth.sample(s, stream), seeds))


@dataclass(frozen=True)
class CovarianceEstimate:
    """``r_hat(lag)`` averaged over samples with jackknife standard errors."""

    lags: np.ndarray
    r_hat: np.ndarray
    stderr: np.ndarray
    samples: int

    def to_dict(self) -> dict:
        return {"lags": self.lags.tolist(), "r_hat": self.r_hat.tolist(),
                "stderr": self.stderr.tolist(), "samples": self.samples}


def lag_steps(grid: GridSpec, lag) -> tuple[int, ...]:
    lag = np.resize(np.asarray(lag, dtype=float), grid.n)
    steps = lag / grid.h
    rounded = np.rint(steps)
    if np.any(np.abs(steps - rounded) > 1e-9 * np.maximum(1.0, np.abs(steps))):
        raise GridError(f"lag {lag.tolist()} is not a multiple of h = {grid.h:g}")
    if np.any(np.abs(rounded) >= grid.N):
        raise GridError(f"lag {lag.tolist()} exceeds the grid")
    return tuple(int(v) for v in rounded)


def sample_covariance(sample: FieldSample, steps: Sequence[int],
                      site_range: tuple[int, int] | None = None) -> np.ndarray:
    """``mean_x xi(x + lag) xi(x)^T`` over base sites ``x`` with ``x + lag`` on the grid.

    ``site_range`` restricts the first coordinate index of the base sites.
    """
    a = sample.as_array()
    N = sample.grid.N
    lead, base = [], []
    for axis, k in enumerate(steps):
        lo, hi = max(0, -k), N - max(0, k)
        if axis == 0 and site_range is not None:
            lo, hi = max(lo, site_range[0]), min(hi, site_range[1])
        if hi <= lo:
            raise GridError("no base sites left for this lag")
        base.append(slice(lo, hi))
        lead.append(slice(lo + k, hi + k))
    x = a[tuple(lead)].reshape(-1, sample.m)
    y = a[tuple(base)].reshape(-1, sample.m)
    return x.T @ y / len(x)


def jackknife_mean(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean over axis 0 and its leave-one-out jackknife standard error."""
    values = np.asarray(values, dtype=float)
    k = len(values)
    total = values.sum(axis=0)
    loo = (total[None] - values) / (k - 1)
    se = np.sqrt((k - 1) / k * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    return total / k, se


def empirical_covariance(samples: Sequence[FieldSample], lags,
                         site_range: tuple[int, int] | None = None,
                         min_samples: int = 30) -> CovarianceEstimate:
    """Cross-channel covariances at each lag, averaged over independent samples."""
    if len(samples) < min_samples:
        raise GridError(f"need at least {min_samples} samples, got {len(samples)}")
    grid, m = samples[0].grid, samples[0].m
    for smp in samples:
        if smp.grid != grid or smp.m != m:
            raise GridError("samples do not share a common grid")
    lags = np.asarray(lags, dtype=float).reshape(-1, grid.n)
    steps = [lag_steps(grid, lag) for lag in lags]
    per = np.array([[sample_covariance(smp, st, site_range) for st in steps] for smp in samples])
    mean, se = jackknife_mean(per)
    return CovarianceEstimate(lags, mean, se, len(samples))


__all__ = [
    "GridSpec", "FieldSample", "Synthesizer", "simulate", "simulate_many",
    "CovarianceEstimate", "lag_steps", "sample_covariance", "jackknife_mean",
    "empirical_covariance",
]
