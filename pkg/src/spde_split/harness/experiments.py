"""Monte Carlo experiments: trace formula, strong order, order in probability,
cost-versus-accuracy benchmark and single-path simulation.

Samples are processed in chunks.  Every sample owns its random streams, so a
chunk can run on any worker and results are gathered by sample index; the
outputs do not depend on the chunking or on the number of workers.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..integrators import Scheme, StepContext, diverged_mask, integrate, tangent_step
from ..noise import TANGENT_CHANNEL, DriverSource, NoiseStream, trace_q
from ..observables import TraceRecord, mass, mean_and_se, symplectic_form, trace_records
from ..spectral import sobolev_norm
from .config import ExperimentConfig, steps_for
from .coupling import Level, dyadic_shift, run_coupled

log = logging.getLogger(__name__)

TRACE_CHUNK = 1000
COUPLED_CHUNK = 100


def _chunks(n: int, size: int) -> list[range]:
    return [range(i, min(n, i + size)) for i in range(0, n, size)]


def _map_chunks(func, cfg: ExperimentConfig, chunks, *args) -> list:
    if cfg.workers == 1 or len(chunks) == 1:
        return [func(cfg, chunk, *args) for chunk in chunks]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [pool.submit(func, cfg, chunk, *args) for chunk in chunks]
        return [f.result() for f in futures]


def _context(cfg: ExperimentConfig, tau: float) -> StepContext:
    return StepContext(cfg.grid, tau, cfg.alpha, cfg.nonlinearity_spec(), cfg.covariance_spec())


# -- trace formula -------------------------------------------------------------

def save_points(n_steps: int, stride: int) -> np.ndarray:
    """Step indices at which states are recorded (always 0 and the last step)."""
    return np.array([0] + [n for n in range(1, n_steps + 1) if n % stride == 0 or n == n_steps])


def _trace_chunk(cfg: ExperimentConfig, samples: range, scheme: str):
    tau = cfg.taus[0]
    ctx = _context(cfg, tau)
    scheme = Scheme.parse(scheme)
    n_steps = steps_for(cfg.T, tau)
    u0 = np.broadcast_to(cfg.initial_state(), (len(samples), cfg.nx))
    source = DriverSource(scheme.driver_kind, cfg.grid, ctx.covariance, tau, cfg.seed, samples, cfg.alpha)
    points = save_points(n_steps, cfg.save_stride)
    # rows stay NaN past the point where the whole chunk diverged
    history = np.full((points.size, len(samples)), np.nan)
    row_of = {int(n): i for i, n in enumerate(points)}

    def observe(n, u):
        history[row_of[n]] = mass(u)

    traj = integrate(scheme, u0, ctx, n_steps, source, cfg.save_stride, observer=observe, keep_states=False)
    return history, traj.diverged_step


def run_trace(cfg: ExperimentConfig) -> dict[str, list[TraceRecord]]:
    """Sample-mean mass against ``M(u_0) + t alpha^2 Tr(Q)`` for each scheme."""
    if len(cfg.taus) != 1:
        raise ValueError("the trace experiment takes a single time step")
    tau = cfg.taus[0]
    points = save_points(steps_for(cfg.T, tau), cfg.save_stride)
    mass0 = float(mass(cfg.initial_state()))
    trace = trace_q(cfg.covariance_spec())
    out = {}
    for scheme in cfg.schemes:
        parts = _map_chunks(_trace_chunk, cfg, _chunks(cfg.samples, TRACE_CHUNK), scheme)
        masses = np.concatenate([p[0] for p in parts], axis=1)
        div_step = np.concatenate([p[1] for p in parts])
        out[Scheme.parse(scheme).value] = trace_records(points * tau, masses, div_step, mass0, cfg.alpha,
                                                        trace, steps=points)
        log.info("trace %s: %d/%d diverged", scheme, int(np.sum(div_step >= 0)), cfg.samples)
    return out


# -- coupled error experiments ----------------------------------------------

@dataclass(frozen=True)
class StrongErrorRow:
    scheme: str
    tau: float
    mean_error: float
    std_error: float
    n_samples: int
    n_diverged: int


@dataclass(frozen=True)
class ProbOrderRow:
    tau: float
    delta: float
    C: float
    proportion: float
    n_samples: int


@dataclass(frozen=True)
class BenchRow:
    scheme: str
    tau: float
    wall_seconds: float
    mean_final_error: float
    n_diverged: int


def _levels(cfg: ExperimentConfig, schemes) -> list[Level]:
    return [Level(Scheme.parse(s), dyadic_shift(tau, cfg.tau_ref)) for s in schemes for tau in cfg.taus]


def _coupled_chunk(cfg: ExperimentConfig, samples: range, reference: str, schemes, track_max: bool):
    ctx = _context(cfg, cfg.tau_ref)
    res = run_coupled(Scheme.parse(reference), _levels(cfg, schemes), cfg.initial_state(), ctx,
                      steps_for(cfg.T, cfg.tau_ref), cfg.seed, samples, track_max=track_max)
    return res.final_errors, res.max_errors, res.seconds


def _coupled(cfg, reference, schemes, track_max=False):
    parts = _map_chunks(_coupled_chunk, cfg, _chunks(cfg.samples, COUPLED_CHUNK), reference,
                        list(schemes), track_max)
    final = np.concatenate([p[0] for p in parts], axis=1)
    worst = np.concatenate([p[1] for p in parts], axis=1)
    seconds = np.sum([p[2] for p in parts], axis=0)
    return final, worst, seconds


def fit_slope(taus, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(tau)`` over finite points."""
    taus, errors = np.asarray(taus, float), np.asarray(errors, float)
    ok = np.isfinite(errors) & (errors > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(taus[ok]), np.log(errors[ok]), 1)[0])


def _summaries(cfg, schemes, final) -> list[StrongErrorRow]:
    rows = []
    i = 0
    for scheme in schemes:
        for tau in cfg.taus:
            errs = final[i]
            good = np.isfinite(errs)
            mean, se = mean_and_se(errs[good])
            rows.append(StrongErrorRow(Scheme.parse(scheme).value, tau, mean, se, errs.size,
                                       int(np.count_nonzero(~good))))
            i += 1
    return rows


def run_strong_order(cfg: ExperimentConfig) -> tuple[list[StrongErrorRow], dict[str, float]]:
    """Mean final L2 error against a Split reference at ``tau_ref`` on the same path."""
    final, _, _ = _coupled(cfg, "split", cfg.schemes)
    rows = _summaries(cfg, cfg.schemes, final)
    slopes = {}
    for scheme in cfg.schemes:
        name = Scheme.parse(scheme).value
        mine = [r for r in rows if r.scheme == name]
        slopes[name] = fit_slope([r.tau for r in mine], [r.mean_error for r in mine])
    return rows, slopes


def probability_table(taus, max_errors: np.ndarray, deltas, constants) -> list[ProbOrderRow]:
    """Fraction of samples whose max deviation reaches ``C tau^delta``."""
    rows = []
    for i, tau in enumerate(taus):
        errs = max_errors[i]
        for delta in deltas:
            for c in constants:
                p = float(np.mean(errs >= c * tau**delta))
                rows.append(ProbOrderRow(tau, delta, c, p, errs.size))
    return rows


def run_prob_order(cfg: ExperimentConfig) -> list[ProbOrderRow]:
    _, worst, _ = _coupled(cfg, "split", ["split"], track_max=True)
    return probability_table(cfg.taus, worst, cfg.deltas, cfg.constants)


def run_bench(cfg: ExperimentConfig) -> list[BenchRow]:
    """Compute time versus final error; each scheme is its own reference."""
    rows = []
    for scheme in cfg.schemes:
        final, _, seconds = _coupled(cfg, scheme, [scheme])
        for i, tau in enumerate(cfg.taus):
            errs = final[i]
            bad = ~np.isfinite(errs)
            err = float(np.mean(errs)) if not bad.any() else float("inf")
            rows.append(BenchRow(Scheme.parse(scheme).value, tau, float(seconds[i]), err,
                                 int(np.count_nonzero(bad))))
    return rows


def time_at_error(rows: list[BenchRow], scheme: str, target: float) -> float:
    """Compute time needed to reach ``target`` mean error (log-log interpolation).

    Returns ``inf`` when no step size of the scheme gets that accurate.
    """
    mine = sorted((r for r in rows if r.scheme == scheme and np.isfinite(r.mean_final_error)),
                  key=lambda r: r.tau, reverse=True)
    if not mine:
        return float("inf")
    errors = np.array([r.mean_final_error for r in mine])
    times = np.array([r.wall_seconds for r in mine])
    if errors.min() > target:
        return float("inf")
    if errors[0] <= target:
        return float(times[0])
    j = int(np.argmax(errors <= target))
    x0, x1 = np.log(errors[j - 1]), np.log(errors[j])
    y0, y1 = np.log(times[j - 1]), np.log(times[j])
    w = (np.log(target) - x0) / (x1 - x0)
    return float(np.exp(y0 + w * (y1 - y0)))


# -- single path ---------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryRow:
    t: float
    mass: float
    h1_norm: float
    omega: float


def seeded_tangents(cfg: ExperimentConfig, sample: int = 0, count: int = 2) -> list[np.ndarray]:
    stream = NoiseStream(cfg.seed, sample, 2 * cfg.nx, TANGENT_CHANNEL)
    xi = stream.normals(0, count)
    return [x[: cfg.nx] + 1j * x[cfg.nx:] for x in xi]


def run_simulate(cfg: ExperimentConfig, sample: int = 0):
    """One path with its two tangent vectors; returns rows, final state, diverged flag."""
    scheme = Scheme.parse(cfg.schemes[0])
    tau = cfg.taus[0]
    ctx = _context(cfg, tau)
    n_steps = steps_for(cfg.T, tau)
    source = DriverSource(scheme.driver_kind, cfg.grid, ctx.covariance, tau, cfg.seed, [sample], cfg.alpha)
    u = cfg.initial_state()
    tangents = seeded_tangents(cfg, sample)
    grid = cfg.grid

    def row(t, u, tangents):
        return TrajectoryRow(t, float(mass(u)), float(sobolev_norm(u, grid, 1)),
                             float(symplectic_form(tangents[0], tangents[1])))

    rows = [row(0.0, u, tangents)]
    diverged = False
    with np.errstate(all="ignore"):
        for n in range(n_steps):
            u, tangents = tangent_step(scheme, u, tangents, source(n)[0], ctx)
            if diverged_mask(u):
                diverged = True
                break
            if (n + 1) % cfg.save_stride == 0 or n + 1 == n_steps:
                rows.append(row((n + 1) * tau, u, tangents))
    return rows, u, diverged
