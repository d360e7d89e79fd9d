"""Physical path generation, UPA beam vectors and ground-truth sparse
DD-beam channel matrices for both preamble stages.

The ground-truth builders place each quantized path into the block-sparse
tap lattices used by the measurement models:

* stage-1 (rough): one block of k'_max + 2*eps' + 1 Doppler rows per
  (UE, AP); wrapped rows at the end hold negative halo offsets.
* stage-2 (accurate): l_max + 1 delay blocks of k_max + 2*eps + 1 rows each.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dd_core import OtfsGrid, halo_shifts, psi


class ConfigurationError(ValueError):
    """Scenario parameters violate a tap or layout budget."""


# 3GPP extended vehicular A power-delay profile: 9 taps, 2.51 us max delay.
# Only the delay column is used here; gains follow the scenario gain law.
EVA_DELAYS_S = np.array([0, 30, 150, 310, 370, 710, 1090, 1730, 2510]) * 1e-9


@dataclass(frozen=True)
class UpaConfig:
    """Uniform planar array: n_y x n_z elements at half-wavelength spacing."""

    n_y: int
    n_z: int

    def __post_init__(self):
        if self.n_y < 1 or self.n_z < 1:
            raise ConfigurationError("UPA dimensions must be >= 1")

    @property
    def size(self) -> int:
        return self.n_y * self.n_z


@dataclass(frozen=True)
class PhysicalPath:
    """One propagation path: complex gain, delay, Doppler and arrival angles."""

    gain: complex
    delay_s: float
    doppler_hz: float
    elevation: float = np.pi / 2
    azimuth: float = 0.0


@dataclass(frozen=True)
class PathSet:
    """All paths of one (UE, AP) link plus its large-scale fading (linear)."""

    ue_id: int
    ap_id: int
    paths: tuple
    large_scale: float


def large_scale_fading_db(distance_km: float) -> float:
    """Distance law -128 - 37.6 log10(d) in dB (d in km)."""
    return -128.0 - 37.6 * np.log10(distance_km)


def quantize_delay_doppler(grid: OtfsGrid, path: PhysicalPath):
    """Quantize a path onto the full grid: (l_int, k_int, k_frac).

    Delays are assumed on-grid (integer-delay model); Doppler splits into
    the nearest integer bin and a fractional remainder in [-0.5, 0.5).
    """
    l_int = int(round(path.delay_s * grid.m_delay * grid.subcarrier_hz))
    nu_norm = path.doppler_hz * grid.n_doppler * grid.symbol_s
    k_int = int(np.floor(nu_norm + 0.5))
    return l_int, k_int, nu_norm - k_int


def sample_paths(rng, grid, p, tau_max_s, nu_max_hz, mode="uniform",
                 large_scale=1.0, one_sided_doppler=False,
                 ue_id=0, ap_id=0, normalize_power=False) -> PathSet:
    """Draw a PathSet with gains CN(0, large_scale / p^2).

    mode="uniform": delays ~ U(0, tau_max), Doppler ~ U(-nu_max, nu_max)
    (or U(0, nu_max) with ``one_sided_doppler``).  mode="eva": delays from
    the 3GPP EVA tap table (p <= 9).  ``normalize_power`` switches the gain
    variance to large_scale / p so total path power equals large_scale.
    """
    if p < 1:
        raise ConfigurationError("need at least one path")
    if mode == "uniform":
        delays = rng.uniform(0.0, tau_max_s, size=p)
    elif mode == "eva":
        if p > EVA_DELAYS_S.size:
            raise ConfigurationError(f"EVA profile has {EVA_DELAYS_S.size} taps")
        delays = EVA_DELAYS_S[:p].copy()
    else:
        raise ConfigurationError(f"unknown path mode {mode!r}")

    if one_sided_doppler:
        dopplers = rng.uniform(0.0, nu_max_hz, size=p)
    else:
        dopplers = rng.uniform(-nu_max_hz, nu_max_hz, size=p)

    var = large_scale / (p if normalize_power else p * p)
    gains = np.sqrt(var / 2.0) * (rng.standard_normal(p) + 1j * rng.standard_normal(p))
    elevations = rng.uniform(0.0, np.pi, size=p)
    azimuths = rng.uniform(-np.pi / 2, np.pi / 2, size=p)

    paths = tuple(
        PhysicalPath(complex(gains[i]), float(delays[i]), float(dopplers[i]),
                     float(elevations[i]), float(azimuths[i]))
        for i in range(p))
    return PathSet(ue_id=ue_id, ap_id=ap_id, paths=paths, large_scale=large_scale)


# ----------------------------------------------------------------------------
# UPA steering and beam-domain vectors
# ----------------------------------------------------------------------------

def steering_vector(n, rho):
    """(1/sqrt(n)) [1, e^{j pi rho}, ..., e^{j pi (n-1) rho}]."""
    return np.exp(1j * np.pi * rho * np.arange(n)) / np.sqrt(n)


def upa_beam(cfg: UpaConfig, elevation, azimuth):
    """Beam-domain response a = W^H (a_{Ny}(rho_y) kron a_{Nz}(rho_z)).

    W is the Kronecker product of unitary DFT matrices, so the result has
    unit norm and is concentrated on a single block for on-grid angles.
    """
    rho_y = np.cos(elevation) * np.cos(azimuth)
    rho_z = np.sin(elevation)
    a_s = np.kron(steering_vector(cfg.n_y, rho_y), steering_vector(cfg.n_z, rho_z))
    # W^H a_s with unitary W = D_Ny kron D_Nz: apply per-axis DFT conjugates.
    grid = a_s.reshape(cfg.n_y, cfg.n_z)
    out = np.fft.fft(np.fft.fft(grid, axis=0), axis=1) / np.sqrt(cfg.size)
    return out.reshape(-1)


def beam_for_path(cfg: UpaConfig | None, path: PhysicalPath):
    """Beam vector of a path, or scalar 1 for single-antenna APs."""
    if cfg is None or cfg.size == 1:
        return 1.0
    return upa_beam(cfg, path.elevation, path.azimuth)


def quantized_taps(grid: OtfsGrid, pathset: PathSet, upa: UpaConfig | None = None):
    """Quantized (gain, l_int, k_int, k_frac, beam) taps for dd_forward."""
    taps = []
    for path in pathset.paths:
        l_int, k_int, k_frac = quantize_delay_doppler(grid, path)
        taps.append((path.gain, l_int, k_int, k_frac, beam_for_path(upa, path)))
    return taps


# ----------------------------------------------------------------------------
# Ground-truth block-sparse channel matrices
# ----------------------------------------------------------------------------

def _halo_row(k_pp, n_rows):
    """Row of a Doppler halo block for signed offset k'' (wrap negatives)."""
    return k_pp if k_pp >= 0 else n_rows + k_pp


@dataclass(frozen=True)
class GroundTruthChannel:
    """Per-(UE, AP) ground-truth tap matrices for both stages.

    h1[(ue, ap)] has k'_max + 2 eps' + 1 rows; h2[(ue, ap)] has
    (l_max + 1)(k_max + 2 eps + 1) rows; both have n_beams columns.
    tap_index_map lists (delay_tap, signed_doppler_offset) per h2 row.
    """

    h1: dict
    h2: dict
    tap_index_map: tuple
    rough_rows: int
    accurate_rows: int
    n_beams: int


def stage2_tap_lattice(k_max, l_max, halo):
    """(delay_tap, signed shift) of every stage-2 row, in row order."""
    block = halo_shifts(k_max, halo)
    return tuple((d, int(s)) for d in range(l_max + 1) for s in block)


def build_ground_truth(grid: OtfsGrid, layout, pathsets, upa=None) -> GroundTruthChannel:
    """Place quantized paths into the stage-1/stage-2 tap lattices.

    ``layout`` provides budgets (k'_max, k_max, l_max), the halos
    (eps, eps') and the rough grid dims (N', M').  Paths quantizing outside
    [0, k_max] x [0, l_max] raise ConfigurationError: the halo-wrapped
    lattice only represents non-negative-integer Doppler bins.
    """
    n, m = grid.shape
    n_rough, m_rough = layout.n_rough, layout.m_rough
    eps, eps_p = layout.halo, layout.halo_rough
    k1 = layout.kp_max + 2 * eps_p + 1
    k2 = layout.k_max + 2 * eps + 1
    rows2 = (layout.l_max + 1) * k2
    j = upa.size if upa is not None else 1

    h1 = {}
    h2 = {}
    t_rough = np.arange(-eps_p, eps_p + 1)
    t_fine = np.arange(-eps, eps + 1)
    for ps in pathsets:
        m1 = np.zeros((k1, j), dtype=complex)
        m2 = np.zeros((rows2, j), dtype=complex)
        for path in ps.paths:
            l_int, k_int, k_frac = quantize_delay_doppler(grid, path)
            if not 0 <= l_int <= layout.l_max:
                raise ConfigurationError(
                    f"delay tap {l_int} exceeds budget l_max={layout.l_max}")
            if not 0 <= k_int <= layout.k_max:
                raise ConfigurationError(
                    f"Doppler tap {k_int} outside [0, k_max={layout.k_max}]")
            beam = beam_for_path(upa, path)
            bvec = np.atleast_1d(np.asarray(beam, dtype=complex))

            # Rough stage: Doppler quantized at the decimated rate (the
            # 1/alpha time compression keeps the product nu*N*T), delay
            # collapses to a fractional offset on the coarse delay grid.
            nu_norm = path.doppler_hz * grid.n_doppler * grid.symbol_s
            kp_int = int(np.floor(nu_norm + 0.5))
            kp_frac = nu_norm - kp_int
            if not 0 <= kp_int <= layout.kp_max:
                raise ConfigurationError(
                    f"rough Doppler tap {kp_int} outside [0, {layout.kp_max}]")
            lp_frac = path.delay_s * m_rough * grid.subcarrier_hz
            h_rough = (path.gain * psi(m_rough, -lp_frac, 0)
                       * np.exp(-2j * np.pi * lp_frac * (kp_int + kp_frac)
                                / (n_rough * m_rough)))
            for t in t_rough:
                row = _halo_row(kp_int + t, k1)
                m1[row] += h_rough * psi(n_rough, kp_frac, t) * bvec

            # Accurate stage: fine-grid placement, one delay block per tap.
            h_fine = path.gain * np.exp(
                -2j * np.pi * l_int * (k_int + k_frac) / (n * m))
            base = l_int * k2
            for t in t_fine:
                row = base + _halo_row(k_int + t, k2)
                m2[row] += h_fine * psi(n, k_frac, t) * bvec
        key = (ps.ue_id, ps.ap_id)
        h1[key] = m1
        h2[key] = m2

    return GroundTruthChannel(
        h1=h1, h2=h2,
        tap_index_map=stage2_tap_lattice(layout.k_max, layout.l_max, eps),
        rough_rows=k1, accurate_rows=rows2, n_beams=j)
