"""Fourier discretisation of the torus [0, 2*pi).

Coefficient arrays are stored against the orthonormal basis
``e_k(x) = exp(i k x) / sqrt(2 pi)`` so that the mass of a field is the plain
sum ``sum_k |c_k|**2``.  Arrays use the numpy FFT ordering of the wavenumber
set ``{-N/2, ..., N/2 - 1}`` along the last axis; any leading axes are batch
axes (independent samples).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * np.pi
SQRT_TWO_PI = np.sqrt(TWO_PI)


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid with ``num_modes`` nodes on the torus of length 2*pi."""

    num_modes: int
    length: float = field(default=TWO_PI, init=False)

    def __post_init__(self):
        n = self.num_modes
        if not isinstance(n, (int, np.integer)) or n < 4 or n & (n - 1):
            raise ValueError(f"num_modes must be a power of two >= 4, got {n!r}")

    @property
    def node_spacing(self) -> float:
        return TWO_PI / self.num_modes

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.arange(self.num_modes) * self.node_spacing

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers in FFT order (``k = -N/2`` is kept)."""
        return np.fft.fftfreq(self.num_modes, d=1.0 / self.num_modes).astype(np.int64)

    @cached_property
    def laplacian_symbol(self) -> np.ndarray:
        """``k**2`` as floats, i.e. the eigenvalue of ``-Laplacian`` on ``e_k``."""
        k = self.wavenumbers.astype(float)
        return k * k

    def sample(self, func) -> np.ndarray:
        """Evaluate ``func`` at the grid nodes as a complex field."""
        return np.asarray(func(self.nodes), dtype=complex)


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} contains non-finite entries")


def to_modes(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Node values -> orthonormal Fourier coefficients.

    ``c_k = (dx / sqrt(2 pi)) * sum_j u(x_j) exp(-i k x_j)``.
    """
    values = np.asarray(values)
    _check_finite(values, "field")
    return np.fft.fft(values, axis=-1) * (SQRT_TWO_PI / grid.num_modes)


def to_nodes(coeffs: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Exact inverse of :func:`to_modes`."""
    coeffs = np.asarray(coeffs)
    _check_finite(coeffs, "coefficients")
    return np.fft.ifft(coeffs, axis=-1) * (grid.num_modes / SQRT_TWO_PI)


# unchecked variants for the time-stepping hot loops (divergence is
# detected there explicitly)
def _modes(values, grid):
    return np.fft.fft(values, axis=-1) * (SQRT_TWO_PI / grid.num_modes)


def _nodes(coeffs, grid):
    return np.fft.ifft(coeffs, axis=-1) * (grid.num_modes / SQRT_TWO_PI)


def semigroup_multiplier(grid: GridSpec, t: float) -> np.ndarray:
    """Mode multipliers of S(t) = exp(-i t Laplacian), i.e. ``exp(i t k^2)``."""
    return np.exp(1j * t * grid.laplacian_symbol)


def apply_semigroup(coeffs: np.ndarray, grid: GridSpec, t: float) -> np.ndarray:
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    coeffs = np.asarray(coeffs)
    _check_finite(coeffs, "coefficients")
    return coeffs * semigroup_multiplier(grid, t)


def sobolev_norm(coeffs: np.ndarray, grid: GridSpec, sigma: int = 0):
    """``(sum_k (1 + k^2)^sigma |c_k|^2)^(1/2)`` over the last axis."""
    if sigma not in (0, 1, 2):
        raise ValueError(f"sigma must be 0, 1 or 2, got {sigma!r}")
    weight = (1.0 + grid.laplacian_symbol) ** sigma
    return np.sqrt(np.sum(weight * np.abs(coeffs) ** 2, axis=-1))


def l2_norm(coeffs: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.abs(coeffs) ** 2, axis=-1))
