"""Q-Wiener increments on the truncated Fourier basis.

The noise is ``W^Q(t) = sum_k gamma_k beta_k(t) e_k`` with independent
real-valued Brownian motions ``beta_k`` and real ``gamma_k >= 0``, truncated to
the grid's wavenumber set.

Random numbers come from counter-based Philox streams keyed by
``(seed, sample_index, channel)``.  Step ``n`` of a stream of width ``w``
always occupies raw draws ``n*w .. (n+1)*w - 1``, so any step of any sample can
be regenerated independently, in any order and on any worker.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.random import Philox, SeedSequence

from .spectral import GridSpec

# stream channels: independent draws for the same (seed, sample)
INCREMENT_CHANNEL = 0
CONVOLUTION_CHANNEL = 1
TANGENT_CHANNEL = 2

_KINDS = ("power-law-2", "power-law-4", "custom")


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    """Diagonal covariance ``Q e_k = gamma_k^2 e_k`` over the grid modes."""

    kind: str
    gamma: np.ndarray  # FFT order, same length as the grid

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        g = np.asarray(self.gamma, dtype=float)
        if g.ndim != 1 or np.any(~np.isfinite(g)) or np.any(g < 0):
            raise ValueError("gamma must be a finite nonnegative vector")
        object.__setattr__(self, "gamma", g)

    @classmethod
    def power_law(cls, grid: GridSpec, power: int) -> "CovarianceSpec":
        """``gamma_k = 1 / (1 + |k|^power)`` for ``power`` in {2, 4}."""
        if power not in (2, 4):
            raise ValueError("power must be 2 or 4")
        k = np.abs(grid.wavenumbers).astype(float)
        return cls(f"power-law-{power}", 1.0 / (1.0 + k**power))

    @classmethod
    def from_name(cls, name: str, grid: GridSpec) -> "CovarianceSpec":
        aliases = {"power-law-2": 2, "powerlaw2": 2, "power-law-4": 4, "powerlaw4": 4}
        try:
            return cls.power_law(grid, aliases[name.lower()])
        except KeyError:
            raise ValueError(f"unknown covariance {name!r}") from None

    @classmethod
    def single_mode(cls, grid: GridSpec, k: int, value: float = 1.0) -> "CovarianceSpec":
        gamma = np.zeros(grid.num_modes)
        gamma[grid.wavenumbers == k] = value
        return cls("custom", gamma)


def trace_q(cov: CovarianceSpec) -> float:
    """Tr(Q) = sum_k gamma_k^2."""
    return float(np.sum(cov.gamma**2))


def _stream_key(seed: int, sample_index: int, channel: int) -> np.ndarray:
    return SeedSequence([int(seed), int(sample_index), int(channel)]).generate_state(2, np.uint64)


def _box_muller(raw: np.ndarray) -> np.ndarray:
    """Map ``w`` raw 64-bit words (last axis, ``w`` even) to ``w`` N(0,1) draws."""
    u = (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53
    half = raw.shape[-1] // 2
    radius = np.sqrt(-2.0 * np.log1p(-u[..., :half]))  # 1 - u lies in (0, 1]
    angle = (2.0 * np.pi) * u[..., half:]
    return np.concatenate([radius * np.cos(angle), radius * np.sin(angle)], axis=-1)


@dataclass(frozen=True)
class NoiseStream:
    """Standard normals for one Monte Carlo sample, ``width`` per step."""

    seed: int
    sample_index: int
    width: int
    channel: int = INCREMENT_CHANNEL

    def __post_init__(self):
        if self.width <= 0 or self.width % 4:
            raise ValueError("width must be a positive multiple of 4")
        object.__setattr__(self, "_key", _stream_key(self.seed, self.sample_index, self.channel))

    def bit_generator(self, step: int = 0) -> Philox:
        """Philox positioned at the first raw draw of ``step``."""
        return Philox(key=self._key, counter=step * (self.width // 4))

    def normals(self, step: int, count: int = 1) -> np.ndarray:
        """Draws for steps ``step .. step+count-1``, shape ``(count, width)``."""
        if step < 0 or count < 0:
            raise ValueError("step and count must be nonnegative")
        raw = self.bit_generator(step).random_raw(count * self.width)
        return _box_muller(raw.reshape(count, self.width))


class BatchNoise:
    """Normals for a batch of samples, gathered by sample index.

    ``block(start, count)`` has shape ``(count, len(samples), width)``; row ``m``
    is exactly what ``NoiseStream(seed, samples[m], width, channel)`` yields, so
    results never depend on how samples are batched or distributed.  Sequential
    calls reuse the open Philox states instead of re-keying.
    """

    def __init__(self, seed: int, samples: Sequence[int], width: int, channel: int = INCREMENT_CHANNEL):
        self.streams = [NoiseStream(seed, int(s), width, channel) for s in samples]
        self.width = width
        self._bitgens = None
        self._next_step = None

    def block(self, start: int, count: int) -> np.ndarray:
        if start < 0 or count < 0:
            raise ValueError("start and count must be nonnegative")
        if self._next_step != start:
            self._bitgens = [s.bit_generator(start) for s in self.streams]
        raw = np.empty((len(self.streams), count * self.width), dtype=np.uint64)
        for m, bitgen in enumerate(self._bitgens):
            raw[m] = bitgen.random_raw(count * self.width)
        self._next_step = start + count
        raw = raw.reshape(len(self.streams), count, self.width).transpose(1, 0, 2)
        return _box_muller(raw)


def increment_from_normals(xi: np.ndarray, tau: float, cov: CovarianceSpec) -> np.ndarray:
    """``gamma_k sqrt(tau) xi_k`` -- the real coefficients of a Q-Wiener increment."""
    return cov.gamma * np.sqrt(tau) * xi


def sample_increment(stream: NoiseStream, step: int, tau: float, cov: CovarianceSpec) -> np.ndarray:
    """Coefficients of ``W^Q((n+1) tau) - W^Q(n tau)``.

    The result is real: each real Brownian motion multiplies a complex basis
    function, so its coefficient is a real Gaussian.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if stream.width != cov.gamma.size:
        raise ValueError("stream width must match the number of modes")
    return increment_from_normals(stream.normals(step)[0], tau, cov)


def _pairwise_sum(blocks: np.ndarray) -> np.ndarray:
    while blocks.shape[0] > 1:
        blocks = blocks[0::2] + blocks[1::2]
    return blocks[0]


def aggregate_increments(increments, steps: Sequence[int] | None = None) -> np.ndarray:
    """Sum a dyadic block of ``2^r`` fine increments into one coarse increment.

    The sum is taken as a balanced pairwise tree, so aggregating four
    increments is bit-identical to aggregating two pairs and then the pair of
    sums; this is what makes coarse and fine drivers share one Brownian path
    exactly.  When ``steps`` (the fine step indices) is given the block must be
    contiguous and aligned to a multiple of its length.
    """
    blocks = np.asarray(increments)
    count = blocks.shape[0]
    if count == 0 or count & (count - 1):
        raise ValueError("block length must be a power of two")
    if steps is not None:
        steps = np.asarray(steps)
        if steps.shape != (count,) or np.any(np.diff(steps) != 1) or steps[0] % count:
            raise ValueError("fine increments must form a contiguous aligned block")
    return _pairwise_sum(blocks)


def _x_minus_sin(x: np.ndarray) -> np.ndarray:
    """``x - sin(x)`` without cancellation for small ``x``."""
    x = np.asarray(x, dtype=float)
    out = x - np.sin(x)
    small = np.abs(x) < 0.1
    if np.any(small):
        xs = x[small]
        x2 = xs * xs
        # Taylor series to x^13; truncation error < 1e-17 relative for |x| < 0.1
        term = xs * x2 / 6.0
        acc = term.copy()
        for n in range(2, 7):
            term = -term * x2 / ((2 * n) * (2 * n + 1))
            acc += term
        out[small] = acc
    return out


def convolution_covariance(grid: GridSpec, tau: float):
    """Per-mode Ito-isometry integrals ``(a_k, b_k, c_k)`` over one step.

    ``a = int_0^tau cos^2(k^2 s) ds``, ``b = int sin^2``, ``c = int cos sin``.
    """
    k2 = grid.laplacian_symbol
    theta = k2 * tau
    nz = k2 > 0
    b = np.zeros_like(k2)
    c = np.zeros_like(k2)
    b[nz] = _x_minus_sin(2.0 * theta[nz]) / (4.0 * k2[nz])
    c[nz] = np.sin(theta[nz]) ** 2 / (2.0 * k2[nz])
    a = tau - b
    return a, b, c


def convolution_factor(grid: GridSpec, tau: float):
    """Lower Cholesky entries ``(l11, l21, l22)`` of ``[[a, c], [c, b]]``."""
    a, b, c = convolution_covariance(grid, tau)
    l11 = np.sqrt(a)
    l21 = c / l11
    schur = (a * b - c * c) / a
    # degenerate branch: the k = 0 mode, or a Schur complement lost to roundoff
    l22 = np.sqrt(np.where(schur > 0.0, schur, 0.0))
    return l11, l21, l22


def convolution_from_normals(xi: np.ndarray, tau: float, cov: CovarianceSpec, alpha: float,
                             grid: GridSpec, factor=None) -> np.ndarray:
    """Exact one-step stochastic convolution from ``2N`` standard normals."""
    l11, l21, l22 = factor if factor is not None else convolution_factor(grid, tau)
    n = grid.num_modes
    xi1, xi2 = xi[..., :n], xi[..., n:]
    x = l11 * xi1
    y = l21 * xi1 + l22 * xi2
    return -1j * alpha * cov.gamma * (x + 1j * y)


def exact_convolution_increment(stream: NoiseStream, step: int, tau: float, cov: CovarianceSpec,
                                alpha: float, grid: GridSpec) -> np.ndarray:
    """Sample ``-i alpha int_{t_n}^{t_n+1} S(t_{n+1} - t) dW^Q(t)`` exactly.

    ``stream`` must have width ``2 * num_modes`` (two normals per mode).
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if stream.width != 2 * grid.num_modes:
        raise ValueError("convolution stream needs two normals per mode")
    return convolution_from_normals(stream.normals(step)[0], tau, cov, alpha, grid)


class DriverSource:
    """Per-step noise drivers for a batch of samples.

    ``kind="increment"`` yields Q-Wiener increments ``(M, N)`` at step size
    ``tau``; ``kind="convolution"`` yields exact stochastic convolutions
    (already multiplied by ``-i alpha``).  Calling with consecutive steps reads
    the streams in blocks of ``chunk`` steps.
    """

    _BLOCK_BYTES = 1 << 25

    def __init__(self, kind: str, grid: GridSpec, cov: CovarianceSpec, tau: float, seed: int,
                 samples: Sequence[int], alpha: float = 1.0, chunk: int | None = None):
        if kind not in ("increment", "convolution"):
            raise ValueError(f"unknown driver kind {kind!r}")
        self.kind = kind
        self.grid, self.cov, self.tau, self.alpha = grid, cov, tau, alpha
        width = grid.num_modes if kind == "increment" else 2 * grid.num_modes
        channel = INCREMENT_CHANNEL if kind == "increment" else CONVOLUTION_CHANNEL
        self.noise = BatchNoise(seed, samples, width, channel)
        self.chunk = chunk or max(1, self._BLOCK_BYTES // (8 * width * max(1, len(samples))))
        self._factor = convolution_factor(grid, tau) if kind == "convolution" else None
        self._start = None
        self._block = None

    def __call__(self, step: int) -> np.ndarray:
        if self._block is None or not (self._start <= step < self._start + len(self._block)):
            self._start = step
            self._block = self.noise.block(step, self.chunk)
        xi = self._block[step - self._start]
        if self.kind == "increment":
            return increment_from_normals(xi, self.tau, self.cov)
        return convolution_from_normals(xi, self.tau, self.cov, self.alpha, self.grid, self._factor)
