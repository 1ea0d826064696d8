"""Scalar diagnostics computed from coefficient arrays."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np


def mass(u: np.ndarray) -> np.ndarray:
    """``M(u) = int |u|^2 dx = sum_k |c_k|^2`` over the last axis."""
    u = np.asarray(u)
    return np.sum(u.real**2 + u.imag**2, axis=-1)


def symplectic_form(xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """``omega(xi, eta) = Im <xi, eta>`` with ``<a, b> = int conj(a) b dx``.

    Writing ``xi = p + i q`` this is ``int (p_xi q_eta - q_xi p_eta) dx``.
    """
    return np.sum(np.conj(xi) * eta, axis=-1).imag


def mean_and_se(values) -> tuple[float, float]:
    """Sample mean and its standard error (unbiased variance)."""
    values = np.asarray(values, dtype=float)
    n = values.size
    if n == 0:
        return float("nan"), float("nan")
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
    return mean, se


@dataclass(frozen=True)
class TraceRecord:
    t: float
    sample_mean_mass: float
    std_error: float
    predicted: float
    n_diverged: int = 0

    def __post_init__(self):
        if self.std_error < 0:  # NaN passes: no surviving samples
            raise ValueError("std_error must be nonnegative")

    @property
    def z_score(self) -> float:
        """Normalised deviation; infinite when nothing survived or SE vanishes."""
        dev = abs(self.sample_mean_mass - self.predicted)
        if np.isnan(dev):
            return float("inf")
        if self.std_error == 0:
            return 0.0 if dev == 0 else float("inf")
        return dev / self.std_error


def predicted_mass(mass0: float, t, alpha: float, trace: float):
    """Trace formula ``E M(u(t)) = M(u_0) + t alpha^2 Tr(Q)``."""
    return mass0 + np.asarray(t) * alpha**2 * trace


def trace_records(times, masses: np.ndarray, diverged_step: np.ndarray, mass0: float,
                  alpha: float, trace: float, steps=None) -> list[TraceRecord]:
    """Build records from per-sample mass histories ``masses[time, sample]``.

    Samples that have diverged by a save time are excluded from its mean.
    """
    records = []
    steps = np.arange(len(times)) if steps is None else np.asarray(steps)
    for i, t in enumerate(times):
        gone = (diverged_step >= 0) & (diverged_step <= steps[i])
        mean, se = mean_and_se(masses[i][~gone])
        records.append(TraceRecord(float(t), mean, se, float(predicted_mass(mass0, t, alpha, trace)),
                                   int(np.count_nonzero(gone))))
    return records


def trace_residual(records: Iterable[TraceRecord]) -> float:
    """``max_n |mean_n - predicted_n| / SE_n``."""
    return max((r.z_score for r in records), default=0.0)


def exp_moment_estimate(squared_norms, mu: float) -> float:
    """Sample mean of ``exp(mu ||u||^2)``; overflow gives ``inf``."""
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    x = np.asarray(squared_norms, dtype=float)
    if mu == 0:
        return 1.0
    with np.errstate(over="ignore"):
        return float(np.mean(np.exp(mu * x)))


def exp_moment_with_se(squared_norms, mu: float) -> tuple[float, float]:
    with np.errstate(over="ignore"):
        return mean_and_se(np.exp(mu * np.asarray(squared_norms, dtype=float)))
