"""CSV writers.  UTF-8, header row, ``.`` decimal separator, full precision."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

TRACE_HEADER = ("scheme", "t", "mean_mass", "std_error", "predicted", "n_diverged")
STRONG_HEADER = ("scheme", "tau", "mean_error", "std_error", "n_samples", "n_diverged")
PROB_HEADER = ("tau", "delta", "C", "proportion", "n_samples")
BENCH_HEADER = ("scheme", "tau", "wall_seconds", "mean_final_error", "n_diverged")
TRAJ_HEADER = ("t", "mass", "h1_norm", "omega")
STATE_HEADER = ("k", "real", "imag")


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def write_trace(path, records_by_scheme) -> Path:
    rows = ((scheme, r.t, r.sample_mean_mass, r.std_error, r.predicted, r.n_diverged)
            for scheme, records in records_by_scheme.items() for r in records)
    return write_rows(path, TRACE_HEADER, rows)


def write_strong(path, rows) -> Path:
    return write_rows(path, STRONG_HEADER, ((r.scheme, r.tau, r.mean_error, r.std_error, r.n_samples,
                                             r.n_diverged) for r in rows))


def write_prob(path, rows) -> Path:
    return write_rows(path, PROB_HEADER, ((r.tau, r.delta, r.C, r.proportion, r.n_samples) for r in rows))


def write_bench(path, rows) -> Path:
    return write_rows(path, BENCH_HEADER, ((r.scheme, r.tau, r.wall_seconds, r.mean_final_error,
                                            r.n_diverged) for r in rows))


def write_trajectory(path, rows) -> Path:
    return write_rows(path, TRAJ_HEADER, ((r.t, r.mass, r.h1_norm, r.omega) for r in rows))


def write_state(path, coeffs: np.ndarray, wavenumbers: np.ndarray) -> Path:
    order = np.argsort(wavenumbers, kind="stable")
    return write_rows(path, STATE_HEADER, ((int(wavenumbers[i]), coeffs[i].real, coeffs[i].imag)
                                           for i in order))


def read_rows(path: str | Path) -> list[dict[str, str]]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
