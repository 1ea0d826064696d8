"""Experiment configuration: defaults, parsing of flat ``key = value`` files."""

from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dynamics import ExternalPotential, NonlocalInteraction, Nonlinearity, make_nonlinearity
from ..integrators import Scheme
from ..noise import CovarianceSpec
from ..spectral import GridSpec, to_modes

EXPERIMENTS = ("trace", "strong-order", "prob-order", "bench", "simulate")
U0_PRESETS = {
    "two-over-two-minus-cos": lambda x: 2.0 / (2.0 - np.cos(x)),
    "one-over-one-plus-sin-squared": lambda x: 1.0 / (1.0 + np.sin(x) ** 2),
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    schemes: list[str] = field(default_factory=lambda: ["split"])
    nx: int = 256
    covariance: str = "power-law-2"
    alpha: float = 1.0
    nonlinearity: str = "nonlocal"
    potential: str = "default"
    u0: str = "two-over-two-minus-cos"
    T: float = 1.0
    taus: list[float] = field(default_factory=lambda: [2.0**-7])
    tau_ref: float = 2.0**-12
    samples: int = 100
    seed: int = 0
    save_stride: int = 1
    dealias: bool = False
    deltas: list[float] = field(default_factory=lambda: [0.4, 0.5, 0.6])
    constants: list[float] = field(default_factory=lambda: [10.0, 100.0, 1000.0])
    workers: int = 1
    out: str = "results"

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        try:
            for s in self.schemes:
                Scheme.parse(s)
            GridSpec(self.nx)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")
        if self.alpha < 0:
            raise ConfigError("alpha must be nonnegative")
        if self.T <= 0:
            raise ConfigError("T must be positive")
        if self.save_stride < 1 or self.workers < 1:
            raise ConfigError("save_stride and workers must be >= 1")
        for tau in [*self.taus, self.tau_ref]:
            if not 0 < tau < 1:
                raise ConfigError(f"time steps must lie in (0, 1), got {tau}")
            steps_for(self.T, tau)
        return self

    # -- derived objects -------------------------------------------------

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.nx)

    def covariance_spec(self) -> CovarianceSpec:
        try:
            return CovarianceSpec.from_name(self.covariance, self.grid)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def nonlinearity_spec(self) -> Nonlinearity:
        grid = self.grid
        try:
            base = make_nonlinearity(self.nonlinearity, grid, dealias=self.dealias)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.potential == "default" or not isinstance(base, (ExternalPotential, NonlocalInteraction)):
            return base
        values = _node_values(self.potential, grid).real
        if isinstance(base, ExternalPotential):
            return ExternalPotential(values, dealias=self.dealias)
        return NonlocalInteraction(values, dealias=self.dealias)

    def initial_state(self) -> np.ndarray:
        return to_modes(_node_values(self.u0, self.grid), self.grid)


def _node_values(spec: str, grid: GridSpec) -> np.ndarray:
    """A preset name, ``constant:<c>``, or a text file of node values."""
    if spec in U0_PRESETS:
        return grid.sample(U0_PRESETS[spec])
    if spec.startswith("constant:"):
        return np.full(grid.num_modes, complex(spec.split(":", 1)[1]))
    path = Path(spec)
    if not path.is_file():
        raise ConfigError(f"unknown preset or missing file {spec!r}")
    values = np.array([complex(tok) for tok in path.read_text().replace(",", " ").split()])
    if values.size != grid.num_modes:
        raise ConfigError(f"{spec}: expected {grid.num_modes} node values, got {values.size}")
    return values


def steps_for(T: float, tau: float) -> int:
    n = int(round(T / tau))
    if n < 1 or abs(n * tau - T) > 1e-9 * T:
        raise ConfigError(f"tau={tau} does not divide T={T}")
    return n


_POW2 = re.compile(r"^2\^(-?\d+)$")


def parse_number(text: str) -> float:
    text = text.strip()
    m = _POW2.match(text)
    if m:
        return 2.0 ** int(m.group(1))
    return float(text)


def parse_list(text: str) -> list[float]:
    """Comma list; ``2^a..2^b`` expands to every power of two in between."""
    out: list[float] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = (p.strip() for p in part.split(".."))
            a, b = _POW2.match(lo), _POW2.match(hi)
            if not (a and b):
                raise ConfigError(f"range {part!r} must be of the form 2^a..2^b")
            a, b = int(a.group(1)), int(b.group(1))
            step = 1 if b >= a else -1
            out.extend(2.0**e for e in range(a, b + step, step))
        else:
            out.append(parse_number(part))
    return out


def defaults(experiment: str, paper_scale: bool = False) -> ExperimentConfig:
    """Desk-scale defaults per experiment; ``paper_scale`` restores published sizes."""
    if experiment == "trace":
        cfg = ExperimentConfig(experiment, schemes=["split", "em", "sem", "sexp", "cn"], alpha=1.0,
                               nonlinearity="external", u0="two-over-two-minus-cos", T=1.0,
                               taus=[0.1], samples=5000)
        if paper_scale:
            cfg.samples = 75000
    elif experiment == "strong-order":
        cfg = ExperimentConfig(experiment, schemes=["split"], alpha=1.5, nonlinearity="nonlocal",
                               u0="one-over-one-plus-sin-squared", T=1.0,
                               taus=parse_list("2^-4..2^-9"), tau_ref=2.0**-12, samples=100)
        if paper_scale:
            cfg.nx, cfg.samples, cfg.tau_ref = 1024, 250, 2.0**-16
    elif experiment == "prob-order":
        cfg = ExperimentConfig(experiment, schemes=["split"], alpha=1.5, nonlinearity="nonlocal",
                               u0="two-over-two-minus-cos", T=1.0, taus=parse_list("2^-6..2^-12"),
                               tau_ref=2.0**-14, samples=50)
        if paper_scale:
            cfg.taus, cfg.tau_ref = parse_list("2^-6..2^-14"), 2.0**-16
    elif experiment == "bench":
        cfg = ExperimentConfig(experiment, schemes=["split", "sem", "sexp", "cn"], alpha=1.5,
                               nonlinearity="nonlocal", u0="one-over-one-plus-sin-squared", T=2.0,
                               taus=parse_list("2^-3..2^-10"), tau_ref=2.0**-13, samples=100)
        if paper_scale:
            cfg.nx = 1024
    elif experiment == "simulate":
        cfg = ExperimentConfig(experiment, schemes=["split"], alpha=1.0, nonlinearity="nonlocal",
                               u0="two-over-two-minus-cos", T=1.0, taus=[2.0**-7], samples=1)
    else:
        raise ConfigError(f"unknown experiment {experiment!r}")
    return cfg


# config-file key -> (field name, parser)
_KEYS = {
    "experiment": ("experiment", str),
    "scheme": ("schemes", lambda s: [p.strip() for p in s.split(",") if p.strip()]),
    "schemes": ("schemes", lambda s: [p.strip() for p in s.split(",") if p.strip()]),
    "nx": ("nx", lambda s: int(parse_number(s))),
    "covariance": ("covariance", str),
    "alpha": ("alpha", parse_number),
    "nonlinearity": ("nonlinearity", str),
    "potential": ("potential", str),
    "u0": ("u0", str),
    "t": ("T", parse_number),
    "tau": ("taus", parse_list),
    "taus": ("taus", parse_list),
    "tau_ref": ("tau_ref", parse_number),
    "samples": ("samples", int),
    "seed": ("seed", int),
    "save_stride": ("save_stride", int),
    "dealias": ("dealias", lambda s: s.strip().lower() in ("1", "true", "yes", "on")),
    "delta": ("deltas", parse_list),
    "deltas": ("deltas", parse_list),
    "c": ("constants", parse_list),
    "constants": ("constants", parse_list),
    "workers": ("workers", int),
    "out": ("out", str),
}


def read_pairs(path: str | Path) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str.lower
    try:
        parser.read_string("[run]\n" + Path(path).read_text(encoding="utf-8"))
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return dict(parser["run"])


def from_pairs(pairs: dict[str, str], experiment: str | None = None,
               paper_scale: bool = False) -> ExperimentConfig:
    """Overlay ``pairs`` on the defaults of the chosen experiment."""
    pairs = {k.lower(): v for k, v in pairs.items()}
    name = experiment or pairs.get("experiment")
    if not name:
        raise ConfigError("experiment not given")
    if pairs.get("experiment") not in (None, name):
        raise ConfigError(f"config is for {pairs['experiment']!r}, command is {name!r}")
    cfg = defaults(name, paper_scale)
    if name == "trace" and "nonlinearity" in pairs and "t" not in pairs:
        cfg.T = 1.0 if pairs["nonlinearity"].strip().lower() == "external" else 25.0
    if name in ("strong-order", "bench") and "nonlinearity" in pairs and "u0" not in pairs:
        cfg.u0 = ("two-over-two-minus-cos" if pairs["nonlinearity"].strip().lower() == "external"
                  else "one-over-one-plus-sin-squared")
    for key, raw in pairs.items():
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        name_, parse = _KEYS[key]
        try:
            setattr(cfg, name_, parse(raw))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None
    return cfg.validate()


def load(path: str | Path | None, experiment: str, paper_scale: bool = False, **overrides) -> ExperimentConfig:
    pairs = read_pairs(path) if path else {}
    cfg = from_pairs(pairs, experiment, paper_scale)
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg.validate()


def as_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)
