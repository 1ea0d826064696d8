"""Nonlinearities ``F(u) = V[u] u`` and the exact flow of ``i du/dt = F(u)``.

All functions act on node values (last axis = grid nodes, leading axes =
samples).  ``V[u]`` is real and depends on ``|u|`` only, so the phase flow
``Phi_t(u) = exp(-i t V[u]) u`` is exact and keeps ``|u|`` pointwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import GridSpec


def _dealias(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Zero the modes ``|k| > N/3`` of a real field (2/3 rule)."""
    spec = np.fft.rfft(values, axis=-1)
    k = np.arange(spec.shape[-1])
    spec[..., k > grid.num_modes // 3] = 0.0
    return np.fft.irfft(spec, n=grid.num_modes, axis=-1)


@dataclass(frozen=True)
class Nonlinearity:
    """Base class; ``V[u] = 0``.

    ``dealias`` applies the 2/3 rule to the potential ``V[u]`` (not to ``u``),
    which keeps the phase flow unitary.
    """

    dealias: bool = field(default=False, kw_only=True)
    name = "zero"

    def _raw_potential(self, u, grid):
        return np.zeros(u.shape)

    def _raw_potential_derivative(self, u, h, grid):
        return np.zeros(u.shape)

    def potential(self, u: np.ndarray, grid: GridSpec) -> np.ndarray:
        v = self._raw_potential(u, grid)
        return _dealias(v, grid) if self.dealias else v

    def potential_derivative(self, u: np.ndarray, h: np.ndarray, grid: GridSpec) -> np.ndarray:
        """Directional derivative ``DV[u].h`` (real field)."""
        dv = self._raw_potential_derivative(u, h, grid)
        return _dealias(dv, grid) if self.dealias else dv


Zero = Nonlinearity


@dataclass(frozen=True, eq=False)
class ExternalPotential(Nonlinearity):
    """``F(u) = V(x) u`` for a fixed real potential."""

    values: np.ndarray
    name = "external"

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1 or np.iscomplexobj(v) or not np.all(np.isfinite(v)):
            raise ValueError("external potential must be a finite real vector")
        object.__setattr__(self, "values", v.astype(float))

    def _raw_potential(self, u, grid):
        return np.broadcast_to(self.values, u.shape)


@dataclass(frozen=True, eq=False)
class NonlocalInteraction(Nonlinearity):
    """``V[u] = V * |u|^2`` (convolution on the torus) for a real kernel."""

    kernel: np.ndarray
    name = "nonlocal"

    def __post_init__(self):
        v = np.asarray(self.kernel)
        if v.ndim != 1 or np.iscomplexobj(v) or not np.all(np.isfinite(v)):
            raise ValueError("interaction kernel must be a finite real vector")
        object.__setattr__(self, "kernel", v.astype(float))
        object.__setattr__(self, "_kernel_hat", np.fft.rfft(v.astype(float)))

    def convolve(self, density: np.ndarray, grid: GridSpec) -> np.ndarray:
        """``(V * rho)(x_j) = dx sum_m V(x_j - x_m) rho(x_m)``, via real FFTs."""
        rho_hat = np.fft.rfft(density, axis=-1)
        return np.fft.irfft(self._kernel_hat * rho_hat, n=grid.num_modes, axis=-1) * grid.node_spacing

    def _raw_potential(self, u, grid):
        return self.convolve(u.real**2 + u.imag**2, grid)

    def _raw_potential_derivative(self, u, h, grid):
        return 2.0 * self.convolve((np.conj(u) * h).real, grid)


@dataclass(frozen=True)
class Cubic(Nonlinearity):
    """``V[u] = sign |u|^2``."""

    sign: int = 1
    name = "cubic"

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    def _raw_potential(self, u, grid):
        return self.sign * (u.real**2 + u.imag**2)

    def _raw_potential_derivative(self, u, h, grid):
        return 2.0 * self.sign * (np.conj(u) * h).real


def external_potential_default(grid: GridSpec, **kw) -> ExternalPotential:
    """``V(x) = 3 / (5 - 4 cos x)``."""
    return ExternalPotential(values=3.0 / (5.0 - 4.0 * np.cos(grid.nodes)), **kw)


def nonlocal_default(grid: GridSpec, **kw) -> NonlocalInteraction:
    """Interaction kernel ``V(x) = cos x``."""
    return NonlocalInteraction(kernel=np.cos(grid.nodes), **kw)


def make_nonlinearity(name: str, grid: GridSpec, dealias: bool = False) -> Nonlinearity:
    name = name.lower()
    if name == "zero":
        return Zero(dealias=dealias)
    if name == "external":
        return external_potential_default(grid, dealias=dealias)
    if name == "nonlocal":
        return nonlocal_default(grid, dealias=dealias)
    if name in ("cubic", "cubic+"):
        return Cubic(sign=1, dealias=dealias)
    if name == "cubic-":
        return Cubic(sign=-1, dealias=dealias)
    raise ValueError(f"unknown nonlinearity {name!r}")


def potential_of(u: np.ndarray, spec: Nonlinearity, grid: GridSpec) -> np.ndarray:
    return spec.potential(np.asarray(u), grid)


def evaluate_F(u: np.ndarray, spec: Nonlinearity, grid: GridSpec) -> np.ndarray:
    u = np.asarray(u)
    return spec.potential(u, grid) * u


def flow_phi(u: np.ndarray, t: float, spec: Nonlinearity, grid: GridSpec) -> np.ndarray:
    """Exact flow ``Phi_t(u) = exp(-i t V[u]) u``."""
    u = np.asarray(u)
    return np.exp(-1j * t * spec.potential(u, grid)) * u


def linearize_flow(u: np.ndarray, h: np.ndarray, t: float, spec: Nonlinearity, grid: GridSpec) -> np.ndarray:
    """``DPhi_t(u).h = exp(-i t V[u]) (h - i t (DV[u].h) u)``."""
    u = np.asarray(u)
    phase = np.exp(-1j * t * spec.potential(u, grid))
    return phase * (h - 1j * t * spec.potential_derivative(u, h, grid) * u)
