"""Coarse and reference trajectories driven by one Brownian path.

The reference runs at ``tau_ref``; a coarse level ``r`` runs at
``2**r * tau_ref`` and is driven by the pairwise-tree sum of the ``2**r`` fine
increments it spans (see :func:`spde_split.noise.aggregate_increments`).  The
sums are built with a binary counter while the fine path is streamed, so
memory does not grow with the number of steps.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..integrators import STEPPERS, Scheme, StepContext, diverged_mask
from ..noise import DriverSource
from ..spectral import l2_norm


@dataclass(frozen=True)
class Level:
    scheme: Scheme
    shift: int  # coarse step = 2**shift fine steps


@dataclass
class CoupledResult:
    levels: list[Level]
    final_errors: np.ndarray          # (n_levels, M), inf where diverged
    max_errors: np.ndarray            # (n_levels, M), max over coarse steps
    diverged: np.ndarray              # (n_levels, M)
    seconds: np.ndarray               # (n_levels,) time spent in step maps
    reference_seconds: float
    reference_diverged: np.ndarray    # (M,)
    reference_final: np.ndarray = field(repr=False, default=None)
    level_finals: list = field(repr=False, default=None)


def dyadic_shift(tau: float, tau_ref: float) -> int:
    ratio = tau / tau_ref
    shift = int(round(np.log2(ratio)))
    if shift < 0 or not np.isclose(ratio, 2.0**shift, rtol=1e-12, atol=0):
        raise ValueError(f"tau={tau} is not a dyadic multiple of tau_ref={tau_ref}")
    return shift


def run_coupled(reference: Scheme, levels: list[Level], u0: np.ndarray, base_ctx: StepContext,
                n_fine: int, seed: int, samples, track_max: bool = False) -> CoupledResult:
    """Advance a reference at ``base_ctx.tau`` and every coarse level together.

    ``u0`` is a single state (broadcast over samples).  Errors are L2
    distances to the reference at coinciding times.  ``SPLIT_EXACT`` levels get
    the stochastic convolution of the same fine path, resolved with left-point
    sums ``-i alpha sum_j S(t_{n+1} - s_j) dW_j`` over the fine steps.
    """
    reference = Scheme.parse(reference)
    grid, tau_ref = base_ctx.grid, base_ctx.tau
    samples = list(samples)
    m = len(samples)
    top = max((l.shift for l in levels), default=0)
    if n_fine % (1 << top):
        raise ValueError("the coarsest step must divide the time horizon")
    ctxs = [StepContext(grid, tau_ref * 2**l.shift, base_ctx.alpha, base_ctx.nonlinearity,
                        base_ctx.covariance) for l in levels]
    need_conv = reference is Scheme.SPLIT_EXACT or any(l.scheme is Scheme.SPLIT_EXACT for l in levels)
    source = DriverSource("increment", grid, base_ctx.covariance, tau_ref, seed, samples)
    fine_semigroup = base_ctx.semigroup
    # semigroup over 2**r fine steps, used to merge convolution sums
    half_semigroups = [np.exp(1j * tau_ref * 2**r * grid.laplacian_symbol) for r in range(top + 1)]

    start = np.broadcast_to(np.asarray(u0, dtype=complex), (m, grid.num_modes))
    u_ref = start.copy()
    states = [start.copy() for _ in levels]
    n_levels = len(levels)
    max_err = np.zeros((n_levels, m))
    div = np.zeros((n_levels, m), dtype=bool)
    ref_div = np.zeros(m, dtype=bool)
    seconds = np.zeros(n_levels)
    ref_seconds = 0.0
    ref_step = STEPPERS[reference]
    slots_inc = [None] * (top + 1)
    slots_conv = [None] * (top + 1)
    by_shift: dict[int, list[int]] = {}
    for i, level in enumerate(levels):
        by_shift.setdefault(level.shift, []).append(i)

    def advance(i, driver_inc, driver_conv):
        level = levels[i]
        driver = driver_conv if level.scheme is Scheme.SPLIT_EXACT else driver_inc
        t0 = time.perf_counter()
        states[i] = STEPPERS[level.scheme](states[i], driver, ctxs[i])
        seconds[i] += time.perf_counter() - t0
        bad = diverged_mask(states[i])
        if bad.any():
            div[i] |= bad
            states[i][bad] = np.nan

    with np.errstate(all="ignore"):
        for n in range(n_fine):
            dw = source(n)
            conv = -1j * base_ctx.alpha * fine_semigroup * dw if need_conv else None
            t0 = time.perf_counter()
            u_ref = ref_step(u_ref, conv if reference is Scheme.SPLIT_EXACT else dw, base_ctx)
            ref_seconds += time.perf_counter() - t0
            bad = diverged_mask(u_ref)
            if bad.any():
                ref_div |= bad
                u_ref[bad] = np.nan

            completed = {0: (dw, conv)}
            carry, carry_conv, r = dw, conv, 0
            while r < top:
                if slots_inc[r] is None:
                    slots_inc[r], slots_conv[r] = carry, carry_conv
                    break
                carry = slots_inc[r] + carry
                if need_conv:
                    carry_conv = half_semigroups[r] * slots_conv[r] + carry_conv
                slots_inc[r] = slots_conv[r] = None
                r += 1
                completed[r] = (carry, carry_conv)
            for shift, (inc, cv) in completed.items():
                for i in by_shift.get(shift, ()):
                    advance(i, inc, cv)
                    if track_max:
                        np.maximum(max_err[i], l2_norm(states[i] - u_ref), out=max_err[i])

    final = np.array([l2_norm(s - u_ref) for s in states]).reshape(n_levels, m)
    final[div] = np.inf
    max_err[div] = np.inf
    final[:, ref_div] = np.nan
    max_err[:, ref_div] = np.nan
    return CoupledResult(levels, final, max_err, div, seconds, ref_seconds, ref_div, u_ref, states)
