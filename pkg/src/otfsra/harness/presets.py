"""Experiment presets: solver recovery benchmarks on DCT-block-sparse
fixtures and end-to-end access scenarios at desk scale."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..access_pipeline import (GampChannelSolver, PipelineSolvers,
                               ScenarioConfig, run_embedded, run_hybrid,
                               run_superimposed)
from ..sparse_solver import (GampConfig, gamp_pcsbl_gs, gamp_pcsbl_la,
                             gamp_sbl, gen_dct_block_sparse, omp, realify)
from .config import ConfigError, ExperimentConfig, scenario_from_config


@dataclass(frozen=True)
class BenchmarkConfig:
    """Dimensions of the block-sparse recovery fixture."""

    i_dim: int = 256
    l_dim: int = 64
    j_dim: int = 64
    n_blocks: int = 5
    block_rows: int = 12
    block_cols: int = 8
    snr_db: float = 12.5


def benchmark_solver_config(overrides: dict | None = None) -> GampConfig:
    """Solver settings for the recovery benchmarks (undamped runs fastest
    and is stable on i.i.d. Gaussian measurement matrices)."""
    cfg = GampConfig(max_iter=50, damping=1.0, em_damping=1.0)
    if overrides:
        allowed = {k: v for k, v in overrides.items()
                   if k in ("eta", "gamma_shape", "gamma_scale", "max_iter",
                            "tol", "damping", "em_damping")}
        cfg = replace(cfg, **allowed)
    return cfg


def make_benchmark_fixture(seed, trial, bench: BenchmarkConfig):
    """Complex block-sparse system: shared-support real/imag DCT patches,
    CN(0, 1/L) sensing matrix, noise set by the target SNR.

    Returns (a, y, x_true, noise_var_per_complex_element).
    """
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=(int(seed), int(trial), 7)))
    dims = (bench.block_rows, bench.block_cols)
    x_re, support, origins = gen_dct_block_sparse(
        rng, bench.i_dim, bench.j_dim, bench.n_blocks, dims)
    x_im, _, _ = gen_dct_block_sparse(
        rng, bench.i_dim, bench.j_dim, bench.n_blocks, dims, origins=origins)
    x = x_re + 1j * x_im
    a = (rng.standard_normal((bench.l_dim, bench.i_dim))
         + 1j * rng.standard_normal((bench.l_dim, bench.i_dim))) \
        / np.sqrt(2.0 * bench.l_dim)
    z = a @ x
    noise_var = float(np.mean(np.abs(z) ** 2)) * 10.0 ** (-bench.snr_db / 10.0)
    noise = np.sqrt(noise_var / 2.0) * (
        rng.standard_normal(z.shape) + 1j * rng.standard_normal(z.shape))
    return a, z + noise, x, noise_var


BENCHMARK_ALGORITHMS = ("gamp-pcsbl-la", "gamp-pcsbl-gs", "gamp-sbl", "omp")

_GAMP_RUNNERS = {
    "gamp-pcsbl-la": gamp_pcsbl_la,
    "gamp-pcsbl-gs": gamp_pcsbl_gs,
    "gamp-sbl": gamp_sbl,
}


def run_benchmark_algorithm(algorithm, a, y, x_true, solver_cfg: GampConfig):
    """One recovery run: (nmse_db, iterations, macs, error_trace, diverged)."""
    system = realify(y, a)
    if algorithm == "omp":
        budget = max(1, system.y.shape[0] // 4)   # L/2 complex selections
        x_hat = omp(system, budget)
        macs = budget * a.shape[0] * a.shape[1] * y.shape[1]
        trace = []
        iters = budget
        diverged = False
    else:
        rep = _GAMP_RUNNERS[algorithm](system, solver_cfg, x_true=x_true)
        x_hat, macs, iters, trace, diverged = (
            rep.x_hat, rep.macs, rep.iterations, rep.error_trace,
            rep.diverged)
    err = np.linalg.norm(x_hat - x_true) ** 2 / np.linalg.norm(x_true) ** 2
    nmse = float(10.0 * np.log10(max(err, 1e-30)))
    return nmse, iters, macs, trace, diverged


def pipeline_solvers(overrides: dict | None = None) -> PipelineSolvers:
    """Per-stage pipeline solvers with optional [solver] overrides."""
    overrides = dict(overrides or {})
    th_rough = overrides.pop("threshold_rough", 0.01)
    th_acc = overrides.pop("threshold_accurate", 0.05)
    rough_iter = overrides.pop("rough_max_iter", 15)
    common = {k: v for k, v in overrides.items()
              if k in ("eta", "gamma_shape", "gamma_scale", "tol",
                       "damping", "em_damping")}
    rough_cfg = GampConfig(max_iter=int(rough_iter), damping=0.9,
                           em_damping=0.5, gamma_scale=1e-4)
    acc_cfg = GampConfig(max_iter=int(overrides.get("max_iter", 50)),
                         damping=0.9, em_damping=0.8, gamma_scale=1e-4)
    rough_cfg = replace(rough_cfg, **{k: v for k, v in common.items()
                                      if k != "damping"})
    acc_cfg = replace(acc_cfg, **common)
    return PipelineSolvers(
        rough=GampChannelSolver(rough_cfg),
        accurate=GampChannelSolver(acc_cfg),
        threshold_rough=float(th_rough),
        threshold_accurate=float(th_acc))


# ----------------------------------------------------------------------------
# Preset definitions
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class PresetSpec:
    """How a preset sweeps and which runners it invokes."""

    name: str
    kind: str                     # "benchmark", "convergence" or "access"
    sweep_name: str
    sweep_values: tuple
    algorithms: tuple
    schemes: tuple = ()


PRESET_SPECS = {
    "recover-snr": PresetSpec(
        name="recover-snr", kind="benchmark", sweep_name="snr_db",
        sweep_values=(7.5, 10.0, 12.5, 15.0),
        algorithms=BENCHMARK_ALGORITHMS),
    "recover-cols": PresetSpec(
        name="recover-cols", kind="benchmark", sweep_name="j_dim",
        sweep_values=(16, 32, 64, 96),
        algorithms=BENCHMARK_ALGORITHMS),
    "recover-blocks": PresetSpec(
        name="recover-blocks", kind="benchmark", sweep_name="n_blocks",
        sweep_values=(1, 3, 5, 7),
        algorithms=BENCHMARK_ALGORITHMS),
    "convergence": PresetSpec(
        name="convergence", kind="convergence", sweep_name="iteration",
        sweep_values=(),
        algorithms=("gamp-pcsbl-la", "gamp-pcsbl-gs", "gamp-sbl")),
    "power-sweep": PresetSpec(
        name="power-sweep", kind="access", sweep_name="sigma_p2",
        sweep_values=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
        algorithms=("hybrid",), schemes=("hybrid",)),
    "access-vs-U": PresetSpec(
        name="access-vs-U", kind="access", sweep_name="n_ue",
        sweep_values=(50, 100, 150),
        algorithms=("hybrid", "superimposed", "embedded"),
        schemes=("hybrid", "superimposed", "embedded")),
    "access-vs-antennas": PresetSpec(
        name="access-vs-antennas", kind="access", sweep_name="upa",
        sweep_values=(2, 4, 6),
        algorithms=("hybrid", "superimposed", "embedded"),
        schemes=("hybrid", "superimposed", "embedded")),
    "access-vs-active": PresetSpec(
        name="access-vs-active", kind="access", sweep_name="n_active",
        sweep_values=(3, 5, 8, 12),
        algorithms=("hybrid", "superimposed", "embedded"),
        schemes=("hybrid", "superimposed", "embedded")),
}

_SCHEME_RUNNERS = {
    "hybrid": run_hybrid,
    "superimposed": run_superimposed,
    "embedded": run_embedded,
}


def apply_sweep(cfg: ExperimentConfig, base: ScenarioConfig, sweep_name,
                value) -> ScenarioConfig:
    if sweep_name == "sigma_p2":
        return replace(base, power_split=float(value))
    if sweep_name == "n_ue":
        return replace(base, n_ue=int(value))
    if sweep_name == "upa":
        return replace(base, upa_y=int(value), upa_z=int(value))
    if sweep_name == "n_active":
        return replace(base, n_active=int(value))
    raise ConfigError(f"unknown access sweep {sweep_name!r}")


def access_scenario_base(cfg: ExperimentConfig) -> ScenarioConfig:
    base = scenario_from_config(cfg)
    if cfg.preset == "power-sweep":
        # SINR operating point: single AP, the criterion's desk setting
        base = replace(base, n_ap=cfg.scenario.get("n_ap", 1))
    return base


def benchmark_base(cfg: ExperimentConfig) -> BenchmarkConfig:
    return BenchmarkConfig(**cfg.benchmark)
