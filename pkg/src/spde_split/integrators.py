"""One-step maps for the stochastic Schroedinger equation

    i du = Laplacian(u) dt + F(u) dt + alpha dW^Q.

States are coefficient arrays (see :mod:`spde_split.spectral`), possibly
batched along leading axes.  Every step takes the noise driver for that step:
a Q-Wiener increment for all schemes except ``SPLIT_EXACT``, which takes the
exact one-step stochastic convolution.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .dynamics import Nonlinearity, linearize_flow
from .noise import CovarianceSpec
from .spectral import GridSpec, _modes, _nodes, SQRT_TWO_PI

DIVERGENCE_THRESHOLD = 1e12


class Scheme(str, enum.Enum):
    SPLIT = "split"
    SPLIT_EXACT = "split-exact"
    EM = "em"
    SEM = "sem"
    SEXP = "sexp"
    CN = "cn"

    @property
    def driver_kind(self) -> str:
        return "convolution" if self is Scheme.SPLIT_EXACT else "increment"

    @classmethod
    def parse(cls, name) -> "Scheme":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            raise ValueError(f"unknown scheme {name!r}") from None


@dataclass(frozen=True, eq=False)
class StepContext:
    grid: GridSpec
    tau: float
    alpha: float
    nonlinearity: Nonlinearity = field(default_factory=Nonlinearity)
    covariance: CovarianceSpec | None = None

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")

    @cached_property
    def semigroup(self) -> np.ndarray:
        return np.exp(1j * self.tau * self.grid.laplacian_symbol)

    @cached_property
    def em_multiplier(self) -> np.ndarray:
        return 1.0 + 1j * self.tau * self.grid.laplacian_symbol

    @cached_property
    def sem_inverse(self) -> np.ndarray:
        return 1.0 / (1.0 - 1j * self.tau * self.grid.laplacian_symbol)

    @cached_property
    def cn_inverse(self) -> np.ndarray:
        return 1.0 / (1.0 - 0.5j * self.tau * self.grid.laplacian_symbol)

    @cached_property
    def cn_multiplier(self) -> np.ndarray:
        return (1.0 + 0.5j * self.tau * self.grid.laplacian_symbol) * self.cn_inverse


def _phase_flow_modes(u: np.ndarray, ctx: StepContext) -> np.ndarray:
    """Coefficients of ``Phi_tau(u)`` (nodes -> phase -> modes)."""
    nodes = _nodes(u, ctx.grid)
    potential = ctx.nonlinearity.potential(nodes, ctx.grid)
    return _modes(np.exp(-1j * ctx.tau * potential) * nodes, ctx.grid)


def _nonlinear_modes(u: np.ndarray, ctx: StepContext) -> np.ndarray:
    """Coefficients of ``F(u)``."""
    nodes = _nodes(u, ctx.grid)
    return _modes(ctx.nonlinearity.potential(nodes, ctx.grid) * nodes, ctx.grid)


def step_split(u, dW, ctx: StepContext):
    """``u_{n+1} = S(tau) (Phi_tau(u_n) - i alpha dW_n)``."""
    return ctx.semigroup * (_phase_flow_modes(u, ctx) - 1j * ctx.alpha * dW)


def step_split_exact(u, conv, ctx: StepContext):
    """``u_{n+1} = S(tau) Phi_tau(u_n) + conv_n`` with the exact convolution."""
    return ctx.semigroup * _phase_flow_modes(u, ctx) + conv


def step_em(u, dW, ctx: StepContext):
    return ctx.em_multiplier * u - 1j * ctx.tau * _nonlinear_modes(u, ctx) - 1j * ctx.alpha * dW


def step_sem(u, dW, ctx: StepContext):
    rhs = u - 1j * ctx.tau * _nonlinear_modes(u, ctx) - 1j * ctx.alpha * dW
    return ctx.sem_inverse * rhs


def step_sexp(u, dW, ctx: StepContext):
    return ctx.semigroup * (u - 1j * ctx.tau * _nonlinear_modes(u, ctx) - 1j * ctx.alpha * dW)


def step_cn(u, dW, ctx: StepContext):
    forcing = -1j * ctx.tau * _nonlinear_modes(u, ctx) - 1j * ctx.alpha * dW
    return ctx.cn_multiplier * u + ctx.cn_inverse * forcing


STEPPERS: dict[Scheme, Callable] = {
    Scheme.SPLIT: step_split,
    Scheme.SPLIT_EXACT: step_split_exact,
    Scheme.EM: step_em,
    Scheme.SEM: step_sem,
    Scheme.SEXP: step_sexp,
    Scheme.CN: step_cn,
}


def step(scheme, u, driver, ctx: StepContext):
    return STEPPERS[Scheme.parse(scheme)](u, driver, ctx)


def _split_tangents(base, tangents, ctx: StepContext):
    nodes = _nodes(base, ctx.grid)
    out = []
    for xi in tangents:
        d = linearize_flow(nodes, _nodes(xi, ctx.grid), ctx.tau, ctx.nonlinearity, ctx.grid)
        out.append(ctx.semigroup * _modes(d, ctx.grid))
    return out


def tangent_step_split(base, tangents, dW, ctx: StepContext):
    """Advance ``base`` by the splitting step and each tangent by its linearisation.

    The additive noise does not enter the tangent map:
    ``xi_{n+1} = S(tau) DPhi_tau(u_n).xi_n``.
    """
    return step_split(base, dW, ctx), _split_tangents(base, tangents, ctx)


def _dF_modes(nodes, xi, ctx: StepContext):
    """Coefficients of ``F'(u).xi = V[u] xi + (DV[u].xi) u``."""
    h = _nodes(xi, ctx.grid)
    nl = ctx.nonlinearity
    return _modes(nl.potential(nodes, ctx.grid) * h + nl.potential_derivative(nodes, h, ctx.grid) * nodes,
                  ctx.grid)


def tangent_step(scheme, base, tangents, driver, ctx: StepContext):
    """Advance a base state and its tangent vectors by any scheme."""
    scheme = Scheme.parse(scheme)
    if scheme in (Scheme.SPLIT, Scheme.SPLIT_EXACT):
        return STEPPERS[scheme](base, driver, ctx), _split_tangents(base, tangents, ctx)
    nodes = _nodes(base, ctx.grid)
    new_tangents = []
    for xi in tangents:
        dfx = -1j * ctx.tau * _dF_modes(nodes, xi, ctx)
        if scheme is Scheme.EM:
            new = ctx.em_multiplier * xi + dfx
        elif scheme is Scheme.SEM:
            new = ctx.sem_inverse * (xi + dfx)
        elif scheme is Scheme.SEXP:
            new = ctx.semigroup * (xi + dfx)
        else:
            new = ctx.cn_multiplier * xi + ctx.cn_inverse * dfx
        new_tangents.append(new)
    return STEPPERS[scheme](base, driver, ctx), new_tangents


def diverged_mask(u: np.ndarray) -> np.ndarray:
    """True where a state is non-finite or may exceed the node-modulus threshold.

    ``max_j |u(x_j)| <= sum_k |c_k| / sqrt(2 pi)``, so the bound is checked in
    coefficient space without an extra transform.
    """
    bound = np.sum(np.abs(u), axis=-1) / SQRT_TWO_PI
    return ~np.isfinite(bound) | (bound > DIVERGENCE_THRESHOLD)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray          # (n_saved, *batch, N)
    diverged: np.ndarray        # (*batch,) bool
    diverged_step: np.ndarray   # (*batch,) int, -1 when finite throughout

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def integrate(scheme, u0, ctx: StepContext, n_steps: int, noise, save_stride: int = 1,
              t0: float = 0.0, observer: Callable | None = None, keep_states: bool = True) -> Trajectory:
    """Iterate a one-step map ``n_steps`` times.

    ``noise`` is either an array of drivers indexed by step, or a callable
    ``step -> driver``.  States are saved every ``save_stride`` steps (the
    final state is always saved); ``observer(step, u)`` is called at the same
    points, including step 0.  A diverged sample is flagged and its state set
    to NaN from then on; an unbatched trajectory is truncated instead.
    """
    scheme = Scheme.parse(scheme)
    if n_steps < 0 or save_stride < 1:
        raise ValueError("n_steps must be >= 0 and save_stride >= 1")
    stepper = STEPPERS[scheme]
    get_driver = noise if callable(noise) else (lambda n: noise[n])
    u = np.array(u0, dtype=complex)
    single = u.ndim == 1
    batch_shape = u.shape[:-1]
    diverged = diverged_mask(u)
    diverged_step = np.where(diverged, 0, -1)
    times, states = [t0], [u.copy()]
    if observer is not None:
        observer(0, u)
    with np.errstate(all="ignore"):
        for n in range(n_steps):
            if np.all(diverged):
                break
            u = stepper(u, get_driver(n), ctx)
            fresh = diverged_mask(u) & ~diverged
            if np.any(fresh):
                diverged_step = np.where(fresh, n + 1, diverged_step)
                diverged = diverged | fresh
                u = np.where(diverged[..., None], np.nan, u)
            if single and diverged.any():
                break
            if (n + 1) % save_stride == 0 or n + 1 == n_steps:
                times.append(t0 + (n + 1) * ctx.tau)
                if keep_states:
                    states.append(u.copy())
                if observer is not None:
                    observer(n + 1, u)
    if not keep_states:
        states = [u]
    return Trajectory(
        times=np.asarray(times),
        states=np.stack(states),
        diverged=np.broadcast_to(diverged, batch_shape).copy(),
        diverged_step=np.broadcast_to(diverged_step, batch_shape).copy(),
    )
