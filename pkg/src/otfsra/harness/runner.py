"""Preset execution: deterministic per-(seed, trial) Monte Carlo fan-out."""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..access_pipeline import build_scenario
from .config import ConfigError, ExperimentConfig, serialize_config
from .presets import (PRESET_SPECS, _SCHEME_RUNNERS, access_scenario_base,
                      apply_sweep, benchmark_base, benchmark_solver_config,
                      make_benchmark_fixture, pipeline_solvers,
                      run_benchmark_algorithm)

from dataclasses import replace


def run_id_for(cfg: ExperimentConfig) -> str:
    """Deterministic run identifier from the result-affecting configuration.

    Scheduling and output knobs (workers, out) do not change results and
    are excluded, so a re-run under any parallelism reproduces the id.
    """
    canonical = replace(cfg, workers=1, out=None)
    digest = hashlib.sha256(
        serialize_config(canonical).encode()).hexdigest()[:10]
    return f"{cfg.preset}-{cfg.seed}-{digest}"


def _benchmark_trial(cfg, spec, run_id, trial):
    rows = []
    bench0 = benchmark_base(cfg)
    solver_cfg = benchmark_solver_config(cfg.solver)
    values = cfg.sweep if cfg.sweep is not None else spec.sweep_values
    for value in values:
        if spec.sweep_name == "snr_db":
            bench = replace(bench0, snr_db=float(value))
        elif spec.sweep_name == "j_dim":
            bench = replace(bench0, j_dim=int(value))
        elif spec.sweep_name == "n_blocks":
            bench = replace(bench0, n_blocks=int(value))
        else:
            raise ConfigError(f"unknown benchmark sweep {spec.sweep_name!r}")
        a, y, x_true, _ = make_benchmark_fixture(cfg.seed, trial, bench)
        for algorithm in spec.algorithms:
            t0 = time.perf_counter()
            nmse, iters, macs, _, diverged = run_benchmark_algorithm(
                algorithm, a, y, x_true, solver_cfg)
            rows.append(dict(
                run_id=run_id, preset=cfg.preset, seed=cfg.seed, trial=trial,
                sweep_name=spec.sweep_name, sweep_value=value,
                algorithm=algorithm, der=None, den=None, nmse_db=nmse,
                sinr_db=None, iterations=iters,
                wall_ms=1e3 * (time.perf_counter() - t0), macs=macs,
                _diverged=diverged))
    return rows


def _convergence_trial(cfg, spec, run_id, trial):
    rows = []
    bench = benchmark_base(cfg)
    solver_cfg = benchmark_solver_config(cfg.solver)
    a, y, x_true, _ = make_benchmark_fixture(cfg.seed, trial, bench)
    for algorithm in spec.algorithms:
        t0 = time.perf_counter()
        _, iters, macs, trace, diverged = run_benchmark_algorithm(
            algorithm, a, y, x_true, solver_cfg)
        wall = 1e3 * (time.perf_counter() - t0)
        for it, err in enumerate(trace, start=1):
            rows.append(dict(
                run_id=run_id, preset=cfg.preset, seed=cfg.seed, trial=trial,
                sweep_name="iteration", sweep_value=it, algorithm=algorithm,
                der=None, den=None,
                nmse_db=float(10.0 * np.log10(max(err, 1e-30))),
                sinr_db=None, iterations=iters, wall_ms=wall, macs=macs,
                _diverged=diverged))
    return rows


def _access_trial(cfg, spec, run_id, trial):
    rows = []
    base = access_scenario_base(cfg)
    solvers = pipeline_solvers(cfg.solver)
    values = cfg.sweep if cfg.sweep is not None else spec.sweep_values
    for value in values:
        scen_cfg = apply_sweep(cfg, base, spec.sweep_name, value)
        scenario = build_scenario(scen_cfg, cfg.seed, trial)
        for scheme in spec.schemes:
            record = _SCHEME_RUNNERS[scheme](scenario, solvers)
            rows.append(dict(
                run_id=run_id, preset=cfg.preset, seed=cfg.seed, trial=trial,
                sweep_name=spec.sweep_name, sweep_value=value,
                algorithm=scheme, der=record.der, den=record.den,
                nmse_db=record.nmse_db, sinr_db=record.sinr_db,
                iterations=record.iterations, wall_ms=record.wall_ms,
                macs=record.macs, _diverged=record.diverged))
    return rows


_TRIAL_RUNNERS = {
    "benchmark": _benchmark_trial,
    "convergence": _convergence_trial,
    "access": _access_trial,
}


def run_trial(cfg: ExperimentConfig, trial: int):
    """All rows of one trial (deterministic in (cfg, trial))."""
    spec = PRESET_SPECS[cfg.preset]
    return _TRIAL_RUNNERS[spec.kind](cfg, spec, run_id_for(cfg), trial)


def run_preset(cfg: ExperimentConfig, progress=None):
    """Run every trial of the preset; returns (rows, divergence_fraction).

    Trials are independent; with workers > 1 they fan out over processes.
    Rows are produced identically regardless of schedule (the CSV writer
    sorts them before emission).
    """
    rows = []
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(run_trial, cfg, t)
                       for t in range(cfg.trials)]
            for t, fut in enumerate(futures):
                rows.extend(fut.result())
                if progress:
                    progress(t + 1, cfg.trials)
    else:
        for t in range(cfg.trials):
            rows.extend(run_trial(cfg, t))
            if progress:
                progress(t + 1, cfg.trials)
    solves = [r for r in rows if "_diverged" in r]
    frac = (sum(bool(r["_diverged"]) for r in solves) / len(solves)
            if solves else 0.0)
    return rows, frac
