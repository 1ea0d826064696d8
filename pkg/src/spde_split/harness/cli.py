"""Command line entry point ``spde-split``.

    spde-split <trace|strong-order|prob-order|bench|simulate> [--config FILE]
               [--seed N] [--samples M] [--out DIR] [--paper-scale] [--workers W]

Exit codes: 0 success, 2 configuration error, 3 all samples diverged.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import output
from .config import EXPERIMENTS, ConfigError, load

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3

log = logging.getLogger("spde_split")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spde-split",
                                description="Monte Carlo experiments for stochastic NLS time integrators.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="flat key = value file")
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int)
    p.add_argument("--paper-scale", action="store_true", help="published sample counts and resolutions")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _run(cfg) -> int:
    out = Path(cfg.out)
    if cfg.experiment == "trace":
        records = ex.run_trace(cfg)
        output.write_trace(out / "trace.csv", records)
        for scheme, recs in records.items():
            log.info("%-6s max |mean - predicted| / SE = %.3g", scheme, max(r.z_score for r in recs))
        alive = [r.n_diverged < cfg.samples for recs in records.values() for r in recs[-1:]]
        return EXIT_OK if any(alive) else EXIT_DIVERGED
    if cfg.experiment == "strong-order":
        rows, slopes = ex.run_strong_order(cfg)
        output.write_strong(out / "strong.csv", rows)
        for scheme, slope in slopes.items():
            log.info("%-6s fitted order %.3f", scheme, slope)
        return EXIT_OK if any(r.n_diverged < r.n_samples for r in rows) else EXIT_DIVERGED
    if cfg.experiment == "prob-order":
        rows = ex.run_prob_order(cfg)
        output.write_prob(out / "prob.csv", rows)
        return EXIT_OK
    if cfg.experiment == "bench":
        rows = ex.run_bench(cfg)
        output.write_bench(out / "bench.csv", rows)
        return EXIT_OK if any(np.isfinite(r.mean_final_error) for r in rows) else EXIT_DIVERGED
    rows, final, diverged = ex.run_simulate(cfg)
    output.write_trajectory(out / "traj.csv", rows)
    output.write_state(out / "final_state.csv", final, cfg.grid.wavenumbers)
    return EXIT_DIVERGED if diverged else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args.config, args.experiment, args.paper_scale, seed=args.seed,
                   samples=args.samples, out=args.out, workers=args.workers)
    except ConfigError as exc:
        print(f"spde-split: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return _run(cfg)


if __name__ == "__main__":
    sys.exit(main())
