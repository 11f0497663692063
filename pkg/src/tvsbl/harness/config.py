"""Experiment configuration: presets, TOML loading and validation.

A config file mirrors :class:`ExperimentConfig` section by section::

    experiment_id = "slice-snr6.4"
    out_dir = "results"
    offset = "noise"
    solvers = ["analysis", "sbl-em"]

    [phantom]
    name = "shepp-logan-slice"
    size = 128

    [noise]
    snr_db = 6.4
    seeds = [0, 1, 2]

Keys that are not fields of the corresponding section are rejected.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import tomli

from ..errors import ConfigError
from ..map_solvers import SolverOptions
from ..model import SynthesisModel
from ..sbl import SblConfig

__all__ = [
    "PhantomSpec",
    "NoiseSpec",
    "ShiftSpec",
    "LambdaGrid",
    "OutputSpec",
    "ExperimentConfig",
    "SOLVERS",
    "preset",
    "load_config",
    "parse_seeds",
]

SOLVERS = ("analysis", "synthesis", "sbl-em", "sbl-fast")
PHANTOMS = ("shepp-logan-slice", "shepp-logan", "piecewise-constant")
SHIFTS = ("noisy-mean", "known-mean", "zero-region", "fourier")


@dataclass
class PhantomSpec:
    name: str = "shepp-logan-slice"
    size: int = 128
    variant: str = "original"  # intensity table: "original" | "modified"
    row: Optional[int] = None  # slice row; None means size // 2
    edges: int = 3  # piecewise-constant only
    seed: int = 0  # piecewise-constant only

    @property
    def ndim(self) -> int:
        return 2 if self.name == "shepp-logan" else 1


@dataclass
class NoiseSpec:
    snr_db: float = 6.4
    seeds: list = field(default_factory=lambda: list(range(20)))
    noiseless: bool = False


@dataclass
class ShiftSpec:
    strategy: str = "noisy-mean"
    # indices known to be zero, for "zero-region"; empty means the first sample
    zero_region: list = field(default_factory=list)


@dataclass
class LambdaGrid:
    """Oracle sweep grid, ``[lo, hi] * ||Phi^T b||_inf`` with ``per_decade`` points."""

    per_decade: int = 30
    lo: float = 1e-4
    hi: float = 1e1


@dataclass
class OutputSpec:
    save_restorations: bool = True
    save_curves: bool = False  # lambda vs RE for the MAP sweeps
    svg: bool = False
    record_wall_time: bool = False  # wall_ms breaks byte-identical output


@dataclass
class ExperimentConfig:
    experiment_id: str = "denoise1d"
    out_dir: str = "results"
    solvers: list = field(default_factory=lambda: ["analysis", "sbl-em"])
    offset: str = "noise"
    workers: int = 1
    phantom: PhantomSpec = field(default_factory=PhantomSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    shift: ShiftSpec = field(default_factory=ShiftSpec)
    lambda_grid: LambdaGrid = field(default_factory=LambdaGrid)
    map: SolverOptions = field(default_factory=SolverOptions)
    sbl: SblConfig = field(default_factory=SblConfig)
    output: OutputSpec = field(default_factory=OutputSpec)

    def validate(self) -> "ExperimentConfig":
        if not self.solvers:
            raise ConfigError("at least one solver is required")
        bad = [s for s in self.solvers if s not in SOLVERS]
        if bad:
            raise ConfigError(f"unknown solver(s) {bad}; choose from {SOLVERS}")
        if len(set(self.solvers)) != len(self.solvers):
            raise ConfigError(f"duplicate solvers in {self.solvers}")
        if not self.noise.seeds:
            raise ConfigError("at least one seed is required")
        if not all(isinstance(s, (int, np.integer)) and s >= 0 for s in self.noise.seeds):
            raise ConfigError(f"seeds must be non-negative integers, got {self.noise.seeds}")
        if not self.noise.noiseless and not np.isfinite(self.noise.snr_db):
            raise ConfigError(f"SNR must be finite, got {self.noise.snr_db}")
        if self.offset not in SynthesisModel.OFFSETS:
            raise ConfigError(f"offset must be one of {SynthesisModel.OFFSETS}")
        if self.phantom.name not in PHANTOMS:
            raise ConfigError(f"unknown phantom {self.phantom.name!r}; choose from {PHANTOMS}")
        if self.phantom.variant not in ("original", "modified"):
            raise ConfigError(f"unknown phantom variant {self.phantom.variant!r}")
        if self.shift.strategy not in SHIFTS:
            raise ConfigError(f"unknown shift strategy {self.shift.strategy!r}; choose from {SHIFTS}")
        g = self.lambda_grid
        if g.per_decade < 1 or not 0 < g.lo < g.hi:
            raise ConfigError(f"invalid lambda grid {g}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self


def preset(kind: str) -> ExperimentConfig:
    """Defaults for the ``denoise1d`` and ``denoise2d`` experiments."""
    if kind == "denoise1d":
        return ExperimentConfig()
    if kind == "denoise2d":
        return ExperimentConfig(
            experiment_id="denoise2d",
            solvers=["analysis", "sbl-fast"],
            phantom=PhantomSpec(name="shepp-logan", size=64),
            noise=NoiseSpec(snr_db=8.5, seeds=[0]),
            # each 2D analysis solve takes seconds, so the grid is coarse
            lambda_grid=LambdaGrid(per_decade=6, lo=1e-3, hi=1.0),
            sbl=SblConfig(algorithm="fast", beta_update_interval=10),
        )
    raise ConfigError(f"unknown preset {kind!r}")


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"[{where}] must be a table")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{where}]: {exc}") from exc


_SECTIONS = {
    "phantom": PhantomSpec,
    "noise": NoiseSpec,
    "shift": ShiftSpec,
    "lambda_grid": LambdaGrid,
    "map": SolverOptions,
    "sbl": SblConfig,
    "output": OutputSpec,
}


def config_from_dict(data: dict, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Overlay ``data`` on ``base`` (a preset); unknown keys raise ConfigError."""
    base = base or ExperimentConfig()
    top = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    updates = {}
    for key, value in data.items():
        if key in _SECTIONS:
            merged = {**dataclasses.asdict(getattr(base, key)), **value} if isinstance(value, dict) else value
            updates[key] = _build(_SECTIONS[key], merged, key)
        else:
            updates[key] = value
    return dataclasses.replace(base, **updates).validate()


def load_config(path, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data, base)


def parse_seeds(text: str) -> list[int]:
    """``"0-4,7"`` -> ``[0, 1, 2, 3, 4, 7]``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                lo, hi = part.split("-", 1)
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise ConfigError(f"cannot parse seeds {text!r}") from None
    if not seeds:
        raise ConfigError(f"no seeds in {text!r}")
    return seeds
