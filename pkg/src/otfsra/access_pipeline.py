"""Two-stage grant-free access pipeline: per-AP rough detection from the
superimposed preamble, CPU union, joint accurate detection and channel
estimation from the embedded preamble, interference cancellation and the
DER/DEN/NMSE/SINR metrics.

Scenario state is derived deterministically from (seed, trial) through named
SeedSequence streams, so trials reproduce under any execution order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .channel_model import (ConfigurationError, PathSet, PhysicalPath,
                            UpaConfig, build_ground_truth,
                            large_scale_fading_db, quantized_taps,
                            sample_paths)
from .dd_core import DdFrame, OtfsGrid, isfft
from .frame_builder import (FramePlan, MeasurementSystem, apply_tap_channel,
                            assemble_frame, design_layout, extract_y_p1,
                            extract_y_p2, frame_x1, frame_x2, gen_preambles,
                            measurement_p1, measurement_p2,
                            synthesize_observation)
from .sparse_solver import GampConfig, SolverReport, gamp_pcsbl_la, realify


# ----------------------------------------------------------------------------
# Scenario configuration and construction
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    """Desk-scale end-to-end scenario; every field has a scaled default."""

    n_doppler: int = 32
    m_delay: int = 64
    subcarrier_hz: float = 15e3
    n_rough: int = 16
    m_rough: int = 4
    k_p: int = 8
    l_p: int = 4
    kp_dim: int = 8
    lp_dim: int = 8
    power_split: float = 0.3
    halo: int = 1
    halo_rough: int = 1
    synth_halo: int | None = None      # defaults to the model halo
    tau_max_bins: float = 2.0          # tau_max * M * df
    nu_max_bins: float = 2.4           # nu_max * N * T
    n_ue: int = 100
    n_active: int = 5
    n_ap: int = 2
    upa_y: int = 4
    upa_z: int = 4
    n_paths: int = 6
    path_mode: str = "uniform"
    one_sided_doppler: bool = True
    tx_power_dbm: float = 0.0
    noise_dbm_hz: float = -174.0
    distance_km: tuple = (0.08, 0.22)
    noiseless: bool = False

    def grid(self) -> OtfsGrid:
        return OtfsGrid(self.n_doppler, self.m_delay, self.subcarrier_hz)

    def upa(self) -> UpaConfig:
        return UpaConfig(self.upa_y, self.upa_z)

    def layout(self):
        grid = self.grid()
        return design_layout(
            grid,
            tau_max_s=self.tau_max_bins / grid.bandwidth_hz,
            nu_max_hz=self.nu_max_bins / grid.duration_s,
            n_rough=self.n_rough, m_rough=self.m_rough,
            k_p=self.k_p, l_p=self.l_p, kp_dim=self.kp_dim,
            lp_dim=self.lp_dim, power_split=self.power_split,
            halo=self.halo, halo_rough=self.halo_rough)

    def noise_var_mw(self) -> float:
        if self.noiseless:
            return 0.0
        grid = self.grid()
        return 10.0 ** ((self.noise_dbm_hz
                         + 10.0 * np.log10(grid.bandwidth_hz)) / 10.0)

    def tx_power_mw(self) -> float:
        return 10.0 ** (self.tx_power_dbm / 10.0)


def _stream(seed, trial, *tags) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=(int(seed), int(trial)) + tuple(tags)))


def _snap_delays(ps: PathSet, grid: OtfsGrid) -> PathSet:
    res = grid.delay_resolution_s
    paths = tuple(
        PhysicalPath(p.gain, round(p.delay_s / res) * res, p.doppler_hz,
                     p.elevation, p.azimuth) for p in ps.paths)
    return PathSet(ps.ue_id, ps.ap_id, paths, ps.large_scale)


@dataclass
class Scenario:
    """Materialized trial: truth, frames and per-AP received fields."""

    cfg: ScenarioConfig
    layout: object
    truth_active: set
    plans: dict                 # ue -> FramePlan (unit-average power)
    pathsets: dict              # (ue, ap) -> PathSet (active UEs only)
    ground_truth: object        # GroundTruthChannel over active UEs
    fields: list                # per-AP (N, M, J) received DD fields
    tx_scale: float


def build_scenario(cfg: ScenarioConfig, seed, trial) -> Scenario:
    """Draw one reproducible scenario and synthesize the received fields.

    Delays are snapped to the fine delay grid (the integer-delay channel
    assumption); Doppler stays continuous and fractional.  Frames carry the
    configured transmit power; path gains carry the distance-law large-scale
    fading, and per-element noise is the background density over the signal
    bandwidth.
    """
    grid = cfg.grid()
    layout = cfg.layout()
    upa = cfg.upa()
    tau_max = cfg.tau_max_bins / grid.bandwidth_hz
    nu_max = cfg.nu_max_bins / grid.duration_s

    rng0 = _stream(seed, trial, 0)
    active = set(map(int, rng0.choice(cfg.n_ue, size=cfg.n_active,
                                      replace=False)))
    distances = rng0.uniform(cfg.distance_km[0], cfg.distance_km[1],
                             size=(cfg.n_ue, cfg.n_ap))

    plans = {}
    for ue in range(cfg.n_ue):
        plans[ue] = gen_preambles(_stream(seed, trial, 2, ue), layout)

    pathsets = {}
    for ue in sorted(active):
        for ap in range(cfg.n_ap):
            lam = 10.0 ** (large_scale_fading_db(distances[ue, ap]) / 10.0)
            ps = sample_paths(
                _stream(seed, trial, 1, ue, ap), grid, cfg.n_paths,
                tau_max, nu_max, mode=cfg.path_mode, large_scale=lam,
                one_sided_doppler=cfg.one_sided_doppler, ue_id=ue, ap_id=ap)
            pathsets[(ue, ap)] = _snap_delays(ps, grid)

    gt = build_ground_truth(grid, layout, list(pathsets.values()), upa)

    tx_scale = np.sqrt(cfg.tx_power_mw())
    synth_halo = cfg.synth_halo if cfg.synth_halo is not None else cfg.halo
    noise_var = cfg.noise_var_mw()
    fields = []
    for ap in range(cfg.n_ap):
        frames = {ue: DdFrame(grid, tx_scale * assemble_frame(plans[ue]).symbols)
                  for ue in sorted(active)}
        taps = {ue: quantized_taps(grid, pathsets[(ue, ap)], upa)
                for ue in sorted(active)}
        fields.append(synthesize_observation(
            frames, taps, synth_halo, upa.size, noise_var=noise_var,
            rng=_stream(seed, trial, 3, ap)))
    return Scenario(cfg=cfg, layout=layout, truth_active=active, plans=plans,
                    pathsets=pathsets, ground_truth=gt, fields=fields,
                    tx_scale=tx_scale)


# ----------------------------------------------------------------------------
# Detection and solver plumbing
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class AccessSets:
    """Active-UE sets produced along the pipeline."""

    truth_active: frozenset
    rough_per_ap: tuple
    rough_union: frozenset
    final_active: frozenset

    def __post_init__(self):
        if not self.final_active <= self.rough_union:
            raise ConfigurationError("final set must refine the rough union")


def detect_active(h_estimate, column_map, threshold_rel=0.1,
                  threshold_abs=None, noise_var=None,
                  threshold_median=None, median_min_candidates=20):
    """UEs whose estimated rows carry non-negligible energy.

    Relative rule (default): UE passes if its row energy is at least
    ``threshold_rel`` times the strongest UE's.  Absolute rule: row energy
    at least ``threshold_abs * noise_var * row_count``.

    ``threshold_median`` adds a noise-floor gate on top of the relative
    rule: with most UEs silent, the median candidate energy estimates the
    solver's per-UE noise-fit level, and a failed solve (flat landscape)
    then detects nothing instead of everything.  Skipped when there are
    fewer than ``median_min_candidates`` candidates (silent UEs no longer
    dominate the median).
    """
    h = np.asarray(h_estimate)
    if h.size == 0 or not column_map:
        return set()
    ues = np.array([c[0] for c in column_map])
    energy = {int(u): float(np.sum(np.abs(h[ues == u]) ** 2))
              for u in np.unique(ues)}
    if threshold_abs is not None:
        if noise_var is None:
            raise ConfigurationError("absolute rule needs the noise variance")
        rows = {int(u): int(np.sum(ues == u)) for u in np.unique(ues)}
        return {u for u, e in energy.items()
                if e >= threshold_abs * noise_var * rows[u]}
    peak = max(energy.values())
    if peak <= 0.0:
        return set()
    detected = {u for u, e in energy.items() if e >= threshold_rel * peak}
    if threshold_median is not None and len(energy) >= median_min_candidates:
        floor = threshold_median * float(np.median(list(energy.values())))
        detected = {u for u in detected if energy[u] >= floor}
    return detected


@dataclass
class GampChannelSolver:
    """Normalizing wrapper: realify, scale to unit RMS, run GAMP, unscale."""

    cfg: GampConfig = field(default_factory=GampConfig)
    solver: callable = gamp_pcsbl_la

    def solve(self, a_c, y_c):
        c_a = np.sqrt(np.mean(np.sum(np.abs(a_c) ** 2, axis=0)))
        c_y = np.sqrt(np.mean(np.abs(y_c) ** 2))
        if c_a == 0.0 or c_y == 0.0:
            rep = SolverReport(x_hat=np.zeros((a_c.shape[1], y_c.shape[1]),
                                              dtype=complex),
                               iterations=0, residuals=[], converged=True,
                               diverged=False, gamma_trace=[], macs=0)
            return rep
        system = realify(y_c / c_y, a_c / c_a)
        rep = self.solver(system, self.cfg)
        rep.x_hat = rep.x_hat * (c_y / c_a)
        return rep


def default_rough_solver() -> GampChannelSolver:
    """Stage-1 candidate filter: early-stopped, low-precision-floor GAMP.

    The rough stage only generates candidates for the accurate stage, so it
    runs fewer iterations (the EM sparsification would otherwise suppress
    weak UEs entirely) with a low precision cap.
    """
    return GampChannelSolver(GampConfig(
        max_iter=15, damping=0.9, em_damping=0.5, gamma_scale=1e-4))


def default_accurate_solver() -> GampChannelSolver:
    """Stage-2 estimator: full-depth GAMP with a low precision floor to
    accommodate the large-scale-fading dynamic range between UEs."""
    return GampChannelSolver(GampConfig(
        max_iter=50, damping=0.9, em_damping=0.8, gamma_scale=1e-4))


@dataclass
class PipelineSolvers:
    """Per-stage solvers and detection thresholds for the access schemes.

    The rough threshold is recall-oriented (candidates only); the accurate
    threshold is the final activity decision.
    """

    rough: object = field(default_factory=default_rough_solver)
    accurate: object = field(default_factory=default_accurate_solver)
    threshold_rough: float = 0.01
    threshold_accurate: float = 0.05
    median_gate: float | None = 3.0

    @classmethod
    def oracle(cls, scenario) -> "PipelineSolvers":
        """Truth-injected solvers: silent UEs estimate to exactly zero, so
        detection can threshold at numerical noise."""
        solver = OracleChannelSolver(scenario)
        return cls(rough=solver, accurate=solver,
                   threshold_rough=1e-9, threshold_accurate=1e-9)


class OracleChannelSolver:
    """Returns the stacked ground-truth channel; isolates pipeline logic."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario

    def solve_for(self, system: MeasurementSystem, ap: int) -> SolverReport:
        gt = self.scenario.ground_truth
        rough = system.stage == "rough"
        source = gt.h1 if rough else gt.h2
        rows = gt.rough_rows if rough else gt.accurate_rows
        ues = sorted({c[0] for c in system.column_map})
        scale = self.scenario.tx_scale
        blocks = []
        for u in ues:
            key = (u, ap)
            blocks.append(scale * source[key] if key in source
                          else np.zeros((rows, gt.n_beams), dtype=complex))
        x = np.vstack(blocks)
        return SolverReport(x_hat=x, iterations=0, residuals=[],
                            converged=True, diverged=False, gamma_trace=[],
                            macs=0)


# ----------------------------------------------------------------------------
# Pipeline stages
# ----------------------------------------------------------------------------

def rough_aud(scenario: Scenario, solver, threshold_rel=0.1,
              median_gate=None):
    """Per-AP stage-1 recovery and detection, then the CPU union.

    A diverged AP solve contributes an empty detection set (flagged in the
    returned report list) rather than aborting the trial.
    """
    layout = scenario.layout
    system = measurement_p1(scenario.plans, layout)
    per_ap, reports = [], []
    for ap, fld in enumerate(scenario.fields):
        tf = np.stack([isfft(fld[:, :, j]) for j in range(fld.shape[2])],
                      axis=2)
        y1 = extract_y_p1(tf, layout)
        if isinstance(solver, OracleChannelSolver):
            rep = solver.solve_for(replace_y(system, y1), ap)
        else:
            rep = solver.solve(system.a_matrix, y1)
        reports.append(rep)
        detected = set() if rep.diverged else detect_active(
            rep.x_hat, system.column_map, threshold_rel,
            threshold_median=median_gate)
        per_ap.append(frozenset(detected))
    union = frozenset().union(*per_ap) if per_ap else frozenset()
    return per_ap, union, reports


def replace_y(system: MeasurementSystem, y) -> MeasurementSystem:
    return MeasurementSystem(a_matrix=system.a_matrix, y_matrix=y,
                             column_map=system.column_map, stage=system.stage)


def accurate_aud_ce(scenario: Scenario, candidates, solver,
                    threshold_rel=0.1, median_gate=None):
    """Joint stage-2 detection and channel estimation over the candidates.

    Builds the embedded-preamble system only over the candidate UEs (the
    dimensionality reduction the hybrid scheme exists for), solves per AP,
    re-thresholds per AP and unions the detections.
    """
    layout = scenario.layout
    if not candidates:
        return [], frozenset(), [], None
    system = measurement_p2(scenario.plans, layout, candidates)
    estimates, per_ap, reports = [], [], []
    for ap, fld in enumerate(scenario.fields):
        y2 = extract_y_p2(fld, layout)
        if isinstance(solver, OracleChannelSolver):
            rep = solver.solve_for(replace_y(system, y2), ap)
        else:
            rep = solver.solve(system.a_matrix, y2)
        reports.append(rep)
        estimates.append(rep.x_hat)
        detected = set() if rep.diverged else detect_active(
            rep.x_hat, system.column_map, threshold_rel,
            threshold_median=median_gate)
        per_ap.append(frozenset(detected))
    final = frozenset().union(*per_ap) if per_ap else frozenset()
    return estimates, final, reports, system


def sic_preamble1(scenario: Scenario, estimates, candidates):
    """Remove the reconstructed preamble1 contribution from each AP field.

    Returns (residuals, x2_references): residual fields after cancelling
    S(X1, H_hat) and the reconstructed S(X2, H_hat) reference fields used by
    the SINR metric.
    """
    layout = scenario.layout
    rows = scenario.ground_truth.accurate_rows
    cand = sorted(candidates)
    residuals, refs = [], []
    for ap, fld in enumerate(scenario.fields):
        cancel = np.zeros_like(fld)
        ref = np.zeros_like(fld)
        h = estimates[ap]
        for i, ue in enumerate(cand):
            block = h[i * rows:(i + 1) * rows]
            x1 = scenario.tx_scale * frame_x1(scenario.plans[ue])
            x2 = scenario.tx_scale * frame_x2(scenario.plans[ue])
            cancel += apply_tap_channel(x1, block, layout)
            ref += apply_tap_channel(x2, block, layout)
        residuals.append(fld - cancel)
        refs.append(ref)
    return residuals, refs


# ----------------------------------------------------------------------------
# Metrics
# ----------------------------------------------------------------------------

@dataclass
class MetricsRecord:
    """Per-trial outcome of one scheme."""

    der: float
    den: float
    nmse_db: float
    sinr_db: float
    iterations: int
    macs: int
    wall_ms: float
    diverged: bool
    sets: AccessSets | None = None
    per_ap_nmse_db: list = field(default_factory=list)


def channel_nmse_db(scenario: Scenario, estimates, candidates, stage="accurate"):
    """NMSE of the stacked estimates against ground truth, over all APs.

    The comparison lattice covers candidates plus every truly active UE, so
    UEs missed by detection still count their full channel energy as error.
    """
    gt = scenario.ground_truth
    source = gt.h2 if stage == "accurate" else gt.h1
    rows = gt.accurate_rows if stage == "accurate" else gt.rough_rows
    cand = sorted(candidates)
    lattice = sorted(set(cand) | scenario.truth_active)
    scale = scenario.tx_scale
    num = den = 0.0
    per_ap = []
    for ap in range(len(scenario.fields)):
        n_ap = d_ap = 0.0
        for ue in lattice:
            key = (ue, ap)
            truth = scale * source[key] if key in source else 0.0
            if ue in cand and estimates is not None:
                est = estimates[ap][cand.index(ue) * rows:
                                    (cand.index(ue) + 1) * rows]
            else:
                est = np.zeros((rows, gt.n_beams), dtype=complex)
            n_ap += float(np.sum(np.abs(est - truth) ** 2))
            d_ap += float(np.sum(np.abs(truth) ** 2))
        num += n_ap
        den += d_ap
        per_ap.append(10.0 * np.log10(n_ap / d_ap) if n_ap > 0 and d_ap > 0
                      else -100.0)
    if den == 0.0:
        return np.nan, per_ap
    return max(10.0 * np.log10(num / den) if num > 0 else -100.0, -100.0), per_ap


def detection_metrics(truth: set, detected: set, n_ue: int):
    missed = len(truth - detected)
    false = len(detected - truth)
    return (missed + false) / n_ue, float(missed + false)


def sinr_db(residuals, refs):
    sig = sum(float(np.sum(np.abs(r) ** 2)) for r in refs)
    inter = sum(float(np.sum(np.abs(res - ref) ** 2))
                for res, ref in zip(residuals, refs))
    if sig <= 0.0 or inter <= 0.0:
        return np.nan
    return 10.0 * np.log10(sig / inter)


# ----------------------------------------------------------------------------
# Scheme runners
# ----------------------------------------------------------------------------

def run_hybrid(scenario: Scenario, solvers: PipelineSolvers | None = None,
               with_sic=True) -> MetricsRecord:
    """Full two-stage pipeline (Algorithm-1 flow)."""
    solvers = solvers or PipelineSolvers()
    t0 = time.perf_counter()
    per_ap1, union, reps1 = rough_aud(scenario, solvers.rough,
                                      solvers.threshold_rough,
                                      solvers.median_gate)
    estimates, final, reps2, _ = accurate_aud_ce(
        scenario, union, solvers.accurate, solvers.threshold_accurate,
        solvers.median_gate)
    sets = AccessSets(truth_active=frozenset(scenario.truth_active),
                      rough_per_ap=tuple(per_ap1), rough_union=union,
                      final_active=final)
    der, den = detection_metrics(scenario.truth_active, set(final),
                                 scenario.cfg.n_ue)
    nmse, per_ap_nmse = channel_nmse_db(scenario, estimates or None,
                                        union, "accurate")
    sinr = np.nan
    if with_sic and estimates:
        residuals, refs = sic_preamble1(scenario, estimates, union)
        sinr = sinr_db(residuals, refs)
    reports = reps1 + reps2
    return MetricsRecord(
        der=der, den=den, nmse_db=nmse, sinr_db=sinr,
        iterations=max((r.iterations for r in reports), default=0),
        macs=sum(r.macs for r in reports),
        wall_ms=1e3 * (time.perf_counter() - t0),
        diverged=any(r.diverged for r in reports),
        sets=sets, per_ap_nmse_db=per_ap_nmse)


def run_superimposed(scenario: Scenario,
                     solvers: PipelineSolvers | None = None) -> MetricsRecord:
    """Stage-1-only baseline: detection and coarse CE from preamble1."""
    solvers = solvers or PipelineSolvers()
    solver = solvers.accurate    # standalone scheme: full-depth solve
    threshold_rel = solvers.threshold_accurate
    t0 = time.perf_counter()
    layout = scenario.layout
    system = measurement_p1(scenario.plans, layout)
    per_ap, estimates, reports = [], [], []
    for ap, fld in enumerate(scenario.fields):
        tf = np.stack([isfft(fld[:, :, j]) for j in range(fld.shape[2])],
                      axis=2)
        y1 = extract_y_p1(tf, layout)
        if isinstance(solver, OracleChannelSolver):
            rep = solver.solve_for(replace_y(system, y1), ap)
        else:
            rep = solver.solve(system.a_matrix, y1)
        reports.append(rep)
        estimates.append(rep.x_hat)
        per_ap.append(frozenset(() if rep.diverged else detect_active(
            rep.x_hat, system.column_map, threshold_rel,
            threshold_median=solvers.median_gate)))
    final = frozenset().union(*per_ap) if per_ap else frozenset()
    der, den = detection_metrics(scenario.truth_active, set(final),
                                 scenario.cfg.n_ue)
    nmse, per_ap_nmse = channel_nmse_db(
        scenario, estimates, range(scenario.cfg.n_ue), "rough")
    return MetricsRecord(
        der=der, den=den, nmse_db=nmse, sinr_db=np.nan,
        iterations=max((r.iterations for r in reports), default=0),
        macs=sum(r.macs for r in reports),
        wall_ms=1e3 * (time.perf_counter() - t0),
        diverged=any(r.diverged for r in reports),
        sets=AccessSets(frozenset(scenario.truth_active), tuple(per_ap),
                        final, final),
        per_ap_nmse_db=per_ap_nmse)


def run_embedded(scenario: Scenario,
                 solvers: PipelineSolvers | None = None) -> MetricsRecord:
    """Stage-2-only baseline: all UEs compete in one embedded-preamble solve."""
    solvers = solvers or PipelineSolvers()
    t0 = time.perf_counter()
    all_ues = range(scenario.cfg.n_ue)
    estimates, final, reports, _ = accurate_aud_ce(
        scenario, all_ues, solvers.accurate, solvers.threshold_accurate,
        solvers.median_gate)
    der, den = detection_metrics(scenario.truth_active, set(final),
                                 scenario.cfg.n_ue)
    nmse, per_ap_nmse = channel_nmse_db(scenario, estimates or None,
                                        all_ues, "accurate")
    return MetricsRecord(
        der=der, den=den, nmse_db=nmse, sinr_db=np.nan,
        iterations=max((r.iterations for r in reports), default=0),
        macs=sum(r.macs for r in reports),
        wall_ms=1e3 * (time.perf_counter() - t0),
        diverged=any(r.diverged for r in reports),
        sets=AccessSets(frozenset(scenario.truth_active),
                        (frozenset(final),), frozenset(all_ues), final),
        per_ap_nmse_db=per_ap_nmse)


SCHEMES = {
    "hybrid": run_hybrid,
    "superimposed": run_superimposed,
    "embedded": run_embedded,
}
