"""Seeded denoising trials: build the phantom, add noise, run each solver,
score it and persist rows, restorations and curves."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import ConfigError
from ..linops import (
    BandedOperator,
    KnownMean,
    NoisyDataMean,
    ZeroRegion,
    ZerothFourierCoefficient,
    build_tv_1d,
    build_tv_2d,
    estimate_shift,
)
from ..map_solvers import MapProblem, default_lambda_grid, lambda_sweep
from ..model import SynthesisModel
from ..noise_metrics import NoisyObservation, add_noise, relative_error
from ..phantoms import piecewise_constant, shepp_logan_2d, shepp_logan_slice, slice_row
from ..sbl import Restoration, sbl_em, sbl_fast, synthesize
from .config import ExperimentConfig
from .output import ResultWriter, svg_heatmap, svg_lines, write_curve, write_signal

__all__ = ["Trial", "make_truth", "run_denoise_1d", "run_denoise_2d", "run_experiment", "run_sweep"]

log = logging.getLogger(__name__)


@dataclass(eq=False)
class Trial:
    seed: int
    solver: str
    restoration: Restoration
    curve: Optional[list] = None  # [(lambda, RE)] for MAP sweeps
    error: Optional[str] = None


def make_truth(config: ExperimentConfig) -> np.ndarray:
    """Ground truth as a 1D signal or a 2D image."""
    p = config.phantom
    if p.name == "shepp-logan":
        return shepp_logan_2d(p.size, p.variant).pixels
    if p.name == "shepp-logan-slice":
        if p.row is None or p.row == slice_row(p.size):
            return shepp_logan_slice(p.size, p.variant).samples
        if not 0 <= p.row < p.size:
            raise ConfigError(f"slice row {p.row} outside 0..{p.size - 1}")
        return shepp_logan_2d(p.size, p.variant).pixels[p.row].copy()
    return piecewise_constant(p.size, p.edges, p.seed).samples


def _vec(x):
    return x.ravel(order="F") if x.ndim == 2 else x


def _shift_strategy(config, truth_vec, data):
    s = config.shift
    if s.strategy == "noisy-mean":
        return NoisyDataMean(data)
    if s.strategy == "known-mean":
        return KnownMean(float(truth_vec.mean()))
    if s.strategy == "fourier":
        return ZerothFourierCoefficient(float(truth_vec.sum()))
    return ZeroRegion(s.zero_region or [0])


def _observe(config, truth_vec, seed) -> NoisyObservation:
    if config.noise.noiseless:
        return NoisyObservation(truth_vec.copy(), truth_vec, np.zeros_like(truth_vec), float("inf"), seed)
    return add_noise(truth_vec, config.noise.snr_db, seed)


def _run_map(solver, config, model, obs, truth_vec):
    problem = MapProblem(obs.data, model, config.map)
    g = config.lambda_grid
    grid = default_lambda_grid(model, obs.data, g.per_decade, g.lo, g.hi)
    sweep = lambda_sweep(solver, problem, grid, truth_vec)
    sol = sweep.solution
    # the analysis solver estimates x directly, so no shift is applied
    shift = sol.shift if solver == "synthesis" else None
    r = Restoration(x=sol.restoration, solver=solver, shift=shift, iterations=sol.iterations,
                    converged=sol.converged, lam=sol.lam)
    return r, sweep.table


def _run_sbl(solver, config, model, obs):
    fn = sbl_fast if solver == "sbl-fast" else sbl_em
    post = fn(model, obs.data, config.sbl)
    v = model.synthesis.matrix @ post.mean
    shift = estimate_shift(v, model.shift)
    r = synthesize(post, model.synthesis, shift)
    r.meta["active"] = int(post.active.size)
    r.meta["beta"] = float(post.hyper.beta)
    return r


def _effective_solver(solver, config, op):
    if solver == "sbl-em" and op.rows > config.sbl.fast_threshold:
        log.warning("dictionary has %d columns; running sbl-fast instead of sbl-em", op.rows)
        return "sbl-fast"
    return solver


def _trial(config, op: BandedOperator, truth_vec, seed, solver) -> Trial:
    obs = _observe(config, truth_vec, seed)
    model = SynthesisModel(op, _shift_strategy(config, truth_vec, obs.data), offset=config.offset)
    start = time.perf_counter()
    curve = None
    error = None
    try:
        if solver in ("analysis", "synthesis"):
            r, curve = _run_map(solver, config, model, obs, truth_vec)
        else:
            r = _run_sbl(solver, config, model, obs)
        r.relative_error = relative_error(r.x, truth_vec)
    except Exception as exc:  # a failed trial is recorded, the run continues
        log.error("seed %d solver %s failed: %s", seed, solver, exc)
        error = f"{type(exc).__name__}: {exc}"
        r = Restoration(x=np.full_like(truth_vec, np.nan), solver=solver, shift=None,
                        relative_error=float("nan"), converged=False, meta={"error": error})
    elapsed = (time.perf_counter() - start) * 1e3
    r.snr_achieved = obs.achieved_snr
    r.wall_ms = elapsed if config.output.record_wall_time else None
    r.meta.update(seed=seed, experiment_id=config.experiment_id, data=obs.data)
    return Trial(seed, solver, r, curve, error)


def _row(config, trial: Trial) -> dict:
    r = trial.restoration
    return {
        "experiment_id": config.experiment_id,
        "seed": trial.seed,
        "solver": trial.solver,
        "snr_target_db": None if config.noise.noiseless else float(config.noise.snr_db),
        "snr_achieved_db": r.snr_achieved,
        "lambda": r.lam,
        "iterations": r.iterations,
        "converged": r.converged,
        "shift": r.shift,
        "relative_error": r.relative_error,
        "wall_ms": r.wall_ms,
    }


def _persist(config, out: Path, trial: Trial, shape):
    o = config.output
    if o.save_restorations:
        write_signal(out / "signals" / f"{trial.solver}_seed{trial.seed}.csv",
                     trial.restoration.x.reshape(shape, order="F"))
    if o.save_curves and trial.curve:
        lams, res = zip(*trial.curve)
        write_curve(out / "curves" / f"{trial.solver}_seed{trial.seed}.csv", lams, res)


def _svg(out: Path, truth, trials, data_by_seed):
    svg_dir = out / "svg"
    svg_dir.mkdir(parents=True, exist_ok=True)
    for seed in sorted(data_by_seed):
        mine = [t for t in trials if t.seed == seed and t.error is None]
        if truth.ndim == 1:
            curves = {"true": truth, "noisy": data_by_seed[seed]}
            curves.update({t.solver: t.restoration.x for t in mine})
            svg_lines(svg_dir / f"seed{seed}.svg", curves, title=f"seed {seed}")
            errs = {t.solver: t.restoration.x - truth for t in mine}
            if errs:
                svg_lines(svg_dir / f"seed{seed}_log_error.svg", errs, title="log10 |error|", log_y=True)
        else:
            shape = truth.shape
            svg_heatmap(svg_dir / f"seed{seed}_noisy.svg", data_by_seed[seed].reshape(shape, order="F"),
                        "noisy", vmin=0.0, vmax=1.0)
            for t in mine:
                svg_heatmap(svg_dir / f"seed{seed}_{t.solver}.svg", t.restoration.x.reshape(shape, order="F"),
                            t.solver, vmin=0.0, vmax=1.0)


def run_experiment(config: ExperimentConfig, out_dir=None) -> list[Restoration]:
    """Run every (seed, solver) trial and write the result files.

    Returns the restorations sorted by ``(seed, solver)``; each carries
    ``meta["seed"]``.
    """
    config.validate()
    truth = make_truth(config)
    truth_vec = _vec(truth)
    op = build_tv_2d(truth.shape[0]) if truth.ndim == 2 else build_tv_1d(truth.size)
    jobs = [(seed, _effective_solver(s, config, op))
            for seed in sorted(set(config.noise.seeds)) for s in config.solvers]
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_signal(out / "truth.csv", truth)
    if truth.ndim == 2:
        op.synthesis  # factor once before any threads start

    trials: list[Trial] = []
    data_by_seed = {}
    with ResultWriter(out / "results.csv") as writer:
        def finish(trial):
            writer.write(_row(config, trial))
            _persist(config, out, trial, truth.shape)
            return trial

        def work(job):
            return finish(_trial(config, op, truth_vec, *job))

        if config.workers > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                trials = list(pool.map(work, jobs))
        else:
            trials = [work(job) for job in jobs]
        for t in trials:
            data_by_seed.setdefault(t.seed, t.restoration.meta["data"])
    if config.output.save_restorations:
        for seed, data in sorted(data_by_seed.items()):
            write_signal(out / "signals" / f"noisy_seed{seed}.csv", data.reshape(truth.shape, order="F"))
    if config.output.svg:
        _svg(out, truth, trials, data_by_seed)

    trials.sort(key=lambda t: (t.seed, t.solver))
    return [t.restoration for t in trials]


def run_denoise_1d(config: ExperimentConfig, out_dir=None) -> list[Restoration]:
    if config.phantom.ndim != 1:
        raise ConfigError(f"denoise1d needs a 1D phantom, got {config.phantom.name!r}")
    return run_experiment(config, out_dir)


def run_denoise_2d(config: ExperimentConfig, out_dir=None) -> list[Restoration]:
    if config.phantom.ndim != 2:
        raise ConfigError(f"denoise2d needs a 2D phantom, got {config.phantom.name!r}")
    return run_experiment(config, out_dir)


def run_sweep(config: ExperimentConfig, out_dir=None) -> list[Restoration]:
    """Lambda grid study: the MAP solvers only, with every curve saved."""
    solvers = [s for s in config.solvers if s in ("analysis", "synthesis")] or ["analysis", "synthesis"]
    config = replace(config, solvers=solvers, output=replace(config.output, save_curves=True))
    return run_experiment(config, out_dir)
