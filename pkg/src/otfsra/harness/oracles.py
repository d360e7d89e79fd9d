"""Independent-oracle suites: every approximation in the model chain gets
measured against a brute-force or closed-form reference and reported.

These checks are the package's ground-truth ledger: the DD operator against
the sample-level pipeline, the leakage kernel against its geometric sum, the
scalar posterior moments against adaptive quadrature, and both measurement
factorizations against their stage forward models.
"""

from __future__ import annotations

import numpy as np

from ..access_pipeline import ScenarioConfig
from ..channel_model import (PathSet, PhysicalPath, build_ground_truth,
                             quantized_taps, sample_paths)
from ..dd_core import (DdFrame, OtfsGrid, dd_forward, isfft, nmse_db, psi,
                       time_domain_oracle)
from ..frame_builder import (assemble_frame, build_a_p1, build_a_p2,
                             extract_y_p1, extract_y_p2, frame_x1,
                             gen_preambles, halo_column_values, p2_slice,
                             stage1_forward)
from ..sparse_solver import _laplace_moments, laplace_posterior_quadrature
from ..dd_core import halo_shifts


def psi_oracle(seed=0, lengths=(4, 8, 16, 64), per_length=100):
    """Worst |psi - geometric sum| over random and limit-case arguments."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in lengths:
        xs = np.concatenate([rng.uniform(-n, n, per_length - 4),
                             [0.0, 1.0, float(n), 2.5]])
        ys = np.concatenate([rng.uniform(-n, n, per_length - 4),
                             [0.0, float(n), float(n), 2.5]])
        for x, y in zip(xs, ys):
            brute = np.mean(np.exp(-2j * np.pi * np.arange(n) * (y - x) / n))
            worst = max(worst, abs(psi(n, x, y) - brute))
    return worst


def scalar_estimator_oracle(points=10):
    """Worst relative error of the Laplacian posterior closed forms against
    adaptive quadrature over a log-spaced parameter grid."""
    rs = np.concatenate([-np.logspace(-2, 1, points // 2),
                         np.logspace(-2, 1, points - points // 2)])
    us = np.logspace(-4, 1, points)
    taus = np.logspace(-3, 3, points)
    worst = 0.0
    for r in rs:
        for u in us:
            for tau in taus:
                got = _laplace_moments(r, u, tau)
                ref = laplace_posterior_quadrature(r, u, tau)
                for g, f in zip(got, ref):
                    worst = max(worst, abs(g - f) / max(abs(f), 1e-300))
    return worst


def dd_operator_oracle(seed=0, oversample=8):
    """dd_forward against the sample-level pipeline (desk-scale grid).

    Returns a dict of NMSE figures: exact integer taps, fractional-Doppler
    halo truncation at increasing halos, the integer-delay assumption error
    for an off-grid delay, and the matched-filter receive-sampling gap.
    """
    rng = np.random.default_rng(seed)
    grid = OtfsGrid(32, 64, 15e3)
    frame = DdFrame(grid, rng.standard_normal(grid.shape)
                    + 1j * rng.standard_normal(grid.shape))
    d_res, v_res = grid.delay_resolution_s, grid.doppler_resolution_hz
    out = {}

    y = time_domain_oracle(frame, [(1 + 0.3j, 2 * d_res, 2 * v_res)],
                           oversample)
    m = dd_forward(frame, [(1 + 0.3j, 2, 2, 0.0, 1.0)], halo=0)
    out["integer_taps_db"] = nmse_db(m, y)

    y = time_domain_oracle(frame, [(1.0, 2 * d_res, 0.3 * v_res)], oversample)
    for halo in (1, 2, 4, 8):
        m = dd_forward(frame, [(1.0, 2, 0, 0.3, 1.0)], halo=halo)
        out[f"frac_doppler_halo{halo}_db"] = nmse_db(m, y)

    y = time_domain_oracle(frame, [(1.0, 1.5 * d_res, 0.0)], oversample)
    m = dd_forward(frame, [(1.0, 2, 0, 0.0, 1.0)], halo=0)
    out["fractional_delay_vs_integer_db"] = nmse_db(m, y)

    y = time_domain_oracle(frame, [(1.0, 2 * d_res, 2 * v_res)], oversample,
                           receiver="matched-filter")
    m = dd_forward(frame, [(1.0, 2, 2, 0.0, 1.0)], halo=0)
    out["matched_filter_gap_db"] = nmse_db(m, y)
    return out


def _snap_delays(ps, grid):
    res = grid.delay_resolution_s
    return PathSet(ps.ue_id, ps.ap_id, tuple(
        PhysicalPath(p.gain, round(p.delay_s / res) * res, p.doppler_hz,
                     p.elevation, p.azimuth) for p in ps.paths),
        ps.large_scale)


def stage1_lattice_forward(plan, pathset, layout, upa, grid):
    """Stage-1 observation from the quantized tap lattice.

    Independent bookkeeping path for the A^p1 H^DD1 factorization: builds
    the observation path-by-path with explicit shifts, wrap rows, leakage
    weights and the per-column Doppler ramps (never forming A or H), so it
    cross-checks every indexing convention of the matrix builders.
    """
    npr, mpr = layout.n_rough, layout.m_rough
    x = plan.p1_symbols
    j = upa.size
    cols = halo_column_values(npr, layout.kp_max, layout.halo_rough)
    shifts = halo_shifts(layout.kp_max, layout.halo_rough)
    col_of_shift = {int(s): int(c) for s, c in zip(shifts, cols)}
    out = np.zeros((npr, mpr, j), dtype=complex)
    for path in pathset.paths:
        nu_norm = path.doppler_hz * grid.n_doppler * grid.symbol_s
        kp_int = int(np.floor(nu_norm + 0.5))
        kp_frac = nu_norm - kp_int
        lp_frac = path.delay_s * mpr * grid.subcarrier_hz
        gain = (path.gain * psi(mpr, -lp_frac, 0)
                * np.exp(-2j * np.pi * lp_frac * nu_norm / (npr * mpr)))
        from ..channel_model import beam_for_path
        beam = np.atleast_1d(np.asarray(beam_for_path(upa, path),
                                        dtype=complex))
        for t in range(-layout.halo_rough, layout.halo_rough + 1):
            shift = kp_int + t
            w = psi(npr, kp_frac, t)
            if w == 0:
                continue
            ramp = np.exp(2j * np.pi * np.arange(mpr) * col_of_shift[shift]
                          / (npr * mpr))
            field = np.roll(x, shift, axis=0) * ramp[None, :]
            out += gain * w * field[:, :, None] * beam[None, None, :]
    return out.transpose(1, 0, 2).reshape(mpr * npr, j)


def consistency_suite(n_scenarios=20, seed=100, cfg: ScenarioConfig | None = None,
                      integer_doppler=False):
    """Model-consistency measurements for both stages on random single-UE
    noiseless scenarios.

    Stage 2 ties the measurement factorization A^p2 H^DD2 to the full-grid
    DD channel operator (slice of dd_forward output).  Stage 1 reports three
    figures: the tie to the quantized tap-lattice operator (the measurement
    equation itself), the tie to the exact-ramp decimated forward model
    (quantifying the per-column ramp factorization), and the tie to the
    physically decimated full-grid field (additionally including the
    time-decimation approximation).
    """
    cfg = cfg or ScenarioConfig(halo=2, halo_rough=2)
    grid = cfg.grid()
    layout = cfg.layout()
    upa = cfg.upa()
    tau_max = cfg.tau_max_bins / grid.bandwidth_hz
    nu_max = cfg.nu_max_bins / grid.duration_s
    rows = {"p2_physical_db": [], "p1_lattice_db": [],
            "p1_exact_ramp_db": [], "p1_decimated_db": []}
    for k in range(n_scenarios):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=(seed, k, 11)))
        ps = sample_paths(rng, grid, cfg.n_paths, tau_max, nu_max,
                          one_sided_doppler=True)
        ps = _snap_delays(ps, grid)
        if integer_doppler:
            ps = PathSet(0, 0, tuple(
                PhysicalPath(p.gain, p.delay_s,
                             round(p.doppler_hz / grid.doppler_resolution_hz)
                             * grid.doppler_resolution_hz,
                             p.elevation, p.azimuth)
                for p in ps.paths), 1.0)
        plan = gen_preambles(rng, layout)
        frame = assemble_frame(plan)
        taps = quantized_taps(grid, ps, upa)
        gt = build_ground_truth(grid, layout, [ps], upa)

        field = dd_forward(frame, taps, halo=layout.halo)
        if field.ndim == 2:
            field = field[:, :, None]
        a2 = build_a_p2(p2_slice(plan), layout)
        rows["p2_physical_db"].append(
            nmse_db(a2 @ gt.h2[(0, 0)], extract_y_p2(field, layout)))

        a1 = build_a_p1(plan.p1_symbols, layout.kp_max, layout.halo_rough)
        model = a1 @ gt.h1[(0, 0)]
        rows["p1_lattice_db"].append(nmse_db(
            model, stage1_lattice_forward(plan, ps, layout, upa, grid)))
        beams = {0: [t[4] for t in taps]}
        rows["p1_exact_ramp_db"].append(nmse_db(
            model, stage1_forward({0: plan}, {0: ps}, layout, beams=beams,
                                  n_beams=upa.size)))
        x1 = DdFrame(grid, frame_x1(plan))
        f1 = dd_forward(x1, taps, halo=layout.halo)
        if f1.ndim == 2:
            f1 = f1[:, :, None]
        tf = np.stack([isfft(f1[:, :, j]) for j in range(f1.shape[2])],
                      axis=2)
        rows["p1_decimated_db"].append(
            nmse_db(model, extract_y_p1(tf, layout)))
    return {k: np.array(v) for k, v in rows.items()}


def format_report(name, values):
    v = np.asarray(values, dtype=float)
    return (f"{name:28s} median {np.median(v):8.2f}  "
            f"worst {np.max(v):8.2f}  best {np.min(v):8.2f} dB")
