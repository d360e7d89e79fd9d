"""Hybrid transmission frames and the two-stage measurement models.

A frame superimposes a low-power-ratio-configurable preamble1 (sparse delay
columns, dense Doppler) on top of an embedded preamble2 plus guard region
plus data placeholders.  This module builds the per-UE measurement matrices
for both stages, extracts the matching observations from received fields,
and provides forward operators used for synthesis and interference
cancellation.

Row convention for vectorized observations: delay-major, row = l * N + k.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel_model import ConfigurationError
from .dd_core import (CyclicShiftSpec, DdFrame, OtfsGrid, cyclic_columns,
                      dd_forward, halo_shifts, psi,
                      truncated_cyclic_columns)


class LayoutError(ConfigurationError):
    """Preamble layout violates a guard or dimension invariant."""


def halo_column_values(n_total, max_shift, halo):
    """0-based F-matrix column per halo position: [0..k+halo] + [n-halo..n-1].

    These are the printed 1-based closed ranges [1:k+halo+1] u [n-halo+1:n]
    shifted down by one; wrapped (negative) shifts map to the trailing block.
    """
    return np.array(
        list(range(max_shift + halo + 1)) +
        list(range(n_total - halo, n_total)), dtype=int)


# ----------------------------------------------------------------------------
# Layout
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class PreambleLayout:
    """Hybrid preamble geometry, power split and tap budgets.

    n_rough/m_rough are the decimated stage-1 grid dims (alpha*N, beta*M);
    (k_p, l_p) is the preamble2 origin, (kp_dim, lp_dim) its dims.  Budgets
    k_max/l_max bound the fine-grid taps and kp_max the rough Doppler taps.
    halo/halo_rough are the fractional-Doppler neighborhood sizes.
    """

    grid: OtfsGrid
    n_rough: int
    m_rough: int
    k_p: int
    l_p: int
    kp_dim: int
    lp_dim: int
    power_split: float
    k_max: int
    l_max: int
    kp_max: int
    halo: int = 1
    halo_rough: int = 1

    def __post_init__(self):
        n, m = self.grid.shape
        if n % self.n_rough or m % self.m_rough:
            raise LayoutError("rough dims must divide the grid dims")
        if self.n_rough > n // 2:
            raise LayoutError("stage-1 Doppler dimension must satisfy N' <= N/2")
        if not 0.0 < self.power_split < 1.0:
            raise LayoutError("power split must lie in (0, 1)")
        if self.halo < 0 or self.halo_rough < 0:
            raise LayoutError("halos must be non-negative")
        if self.l_p - self.l_max < self.l_max:
            raise LayoutError("preamble2 needs l_p - l_max >= l_max")
        if self.l_p + self.lp_dim >= m:
            raise LayoutError("preamble2 exceeds the delay axis")
        if self.k_p < self.k_max + self.halo:
            raise LayoutError("preamble2 needs k_p >= k_max + halo")
        if self.k_p + self.n_p + self.halo > n:
            raise LayoutError("preamble2 slice exceeds the Doppler axis")
        if self.kp_max + 2 * self.halo_rough + 1 > self.n_rough:
            raise LayoutError("rough halo block exceeds N'")
        if self.k_max + 2 * self.halo + 1 > self.n_p:
            raise LayoutError("accurate halo block exceeds N_p")
        pg_lo, pg_hi = self.pg_delay_span
        for c in self.p1_delay_columns:
            if pg_lo <= c <= pg_hi:
                raise LayoutError(
                    f"preamble1 delay column {c} intersects the PG area")

    @property
    def alpha(self) -> float:
        return self.n_rough / self.grid.n_doppler

    @property
    def beta(self) -> float:
        return self.m_rough / self.grid.m_delay

    @property
    def n_p(self) -> int:
        return self.kp_dim + self.k_max

    @property
    def m_p(self) -> int:
        return self.lp_dim + self.l_max

    @property
    def p1_delay_columns(self) -> np.ndarray:
        stride = self.grid.m_delay // self.m_rough
        return np.arange(self.m_rough) * stride

    @property
    def pg_delay_span(self) -> tuple[int, int]:
        return (self.l_p - self.l_max, self.l_p + self.m_p - 1)

    @property
    def pg_doppler_span(self) -> tuple[int, int]:
        return (self.k_p - self.k_max - self.halo,
                self.k_p + self.n_p + self.halo - 1)

    @property
    def rough_block_rows(self) -> int:
        return self.kp_max + 2 * self.halo_rough + 1

    @property
    def accurate_block_rows(self) -> int:
        return (self.l_max + 1) * (self.k_max + 2 * self.halo + 1)

    def data_mask(self) -> np.ndarray:
        """Cells where data placeholders may be placed (outside the PG area)."""
        n, m = self.grid.shape
        mask = np.ones((n, m), dtype=bool)
        k_lo, k_hi = self.pg_doppler_span
        l_lo, l_hi = self.pg_delay_span
        mask[k_lo:k_hi + 1, l_lo:l_hi + 1] = False
        return mask


def design_layout(grid, tau_max_s, nu_max_hz, n_rough, m_rough, k_p, l_p,
                  kp_dim, lp_dim, power_split, halo=1, halo_rough=1):
    """Derive tap budgets from the channel ranges and validate the layout.

    l_max uses the ceiling of tau_max * M * df so that the guard interval
    still covers the largest quantized delay; k_max uses the floor of
    nu_max * N * T and kp_max the rounded value (the stage-1 observation is
    a time-decimated view, so its Doppler quantization keeps the full-frame
    product nu * N * T).
    """
    l_max = int(np.ceil(tau_max_s * grid.m_delay * grid.subcarrier_hz - 1e-12))
    k_max = int(np.floor(nu_max_hz * grid.n_doppler * grid.symbol_s + 1e-12))
    kp_max = int(np.floor(nu_max_hz * grid.n_doppler * grid.symbol_s + 0.5))
    return PreambleLayout(
        grid=grid, n_rough=n_rough, m_rough=m_rough, k_p=k_p, l_p=l_p,
        kp_dim=kp_dim, lp_dim=lp_dim, power_split=power_split,
        k_max=k_max, l_max=l_max, kp_max=kp_max,
        halo=halo, halo_rough=halo_rough)


# ----------------------------------------------------------------------------
# Frame assembly
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class FramePlan:
    """Per-UE transmit plan: scaled preambles plus data placeholders."""

    layout: PreambleLayout
    p1_symbols: np.ndarray
    p2_symbols: np.ndarray
    data_symbols: np.ndarray
    data_mask: np.ndarray


def qpsk(rng, shape):
    """Unit-average-power QPSK symbols."""
    return (rng.choice((-1.0, 1.0), size=shape)
            + 1j * rng.choice((-1.0, 1.0), size=shape)) / np.sqrt(2.0)


def gen_preambles(rng, layout, gaussian=False, fill_data=True):
    """Draw and power-scale preamble1/preamble2 (and data placeholders).

    Total frame energy is N*M (unit average cell power); a fraction
    ``power_split`` goes to preamble1 and the rest to preamble2 plus data.
    """
    n, m = layout.grid.shape
    draw = ((lambda shape: (rng.standard_normal(shape)
                            + 1j * rng.standard_normal(shape)) / np.sqrt(2.0))
            if gaussian else (lambda shape: qpsk(rng, shape)))

    p1 = draw((layout.n_rough, layout.m_rough))
    p2 = draw((layout.kp_dim, layout.lp_dim))
    mask = layout.data_mask()
    n_data = int(mask.sum()) if fill_data else 0
    n_x2 = layout.kp_dim * layout.lp_dim + n_data

    e_total = n * m
    g1 = np.sqrt(layout.power_split * e_total / p1.size)
    g2 = np.sqrt((1.0 - layout.power_split) * e_total / n_x2)

    data = np.zeros((n, m), dtype=complex)
    if fill_data:
        data[mask] = g2 * draw(n_data)
    return FramePlan(layout=layout, p1_symbols=g1 * p1, p2_symbols=g2 * p2,
                     data_symbols=data, data_mask=mask)


def frame_x1(plan: FramePlan) -> np.ndarray:
    """Superimposed component: preamble1 on its sparse delay columns."""
    layout = plan.layout
    x1 = np.zeros(layout.grid.shape, dtype=complex)
    x1[np.ix_(np.arange(layout.n_rough), layout.p1_delay_columns)] = plan.p1_symbols
    return x1


def frame_x2(plan: FramePlan) -> np.ndarray:
    """Block component: embedded preamble2, zero guards, data elsewhere."""
    layout = plan.layout
    x2 = plan.data_symbols.copy()
    x2[layout.k_p:layout.k_p + layout.kp_dim,
       layout.l_p:layout.l_p + layout.lp_dim] = plan.p2_symbols
    return x2


def assemble_frame(plan: FramePlan) -> DdFrame:
    """Full transmit frame X = X1 + X2."""
    return DdFrame(plan.layout.grid, frame_x1(plan) + frame_x2(plan))


def p2_slice(plan: FramePlan) -> np.ndarray:
    """Known transmit slice X[k_p : k_p+N_p+halo, l_p : l_p+M_p] feeding A^p2.

    Guard geometry makes every preamble1 cell in this slice zero, so the
    slice of the full frame equals the slice of X2.
    """
    layout = plan.layout
    x = frame_x1(plan) + frame_x2(plan)
    return x[layout.k_p:layout.k_p + layout.n_p + layout.halo,
             layout.l_p:layout.l_p + layout.m_p]


# ----------------------------------------------------------------------------
# Measurement matrices
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasurementSystem:
    """Stacked (A, Y) pair with a column -> (ue, delay tap, shift) map."""

    a_matrix: np.ndarray
    y_matrix: np.ndarray
    column_map: tuple
    stage: str

    @property
    def n_columns(self) -> int:
        return self.a_matrix.shape[1]


def build_a_p1(p1_symbols, kp_max, halo_rough):
    """Per-UE stage-1 measurement block (N'M' x kp_max + 2 halo' + 1).

    Stacks cyclic-shift matrices of each preamble1 delay column and applies
    the per-delay Doppler phase ramp selected by the halo column values.
    """
    p1 = np.asarray(p1_symbols, dtype=complex)
    npr, mpr = p1.shape
    if kp_max + 2 * halo_rough + 1 > npr:
        raise LayoutError("halo block exceeds the rough Doppler dimension")
    blocks = [cyclic_columns(CyclicShiftSpec(p1[:, l], kp_max, halo_rough))
              for l in range(mpr)]
    xp1 = np.vstack(blocks)
    cols = halo_column_values(npr, kp_max, halo_rough)
    f_sel = np.exp(2j * np.pi * np.outer(np.arange(mpr), cols) / (mpr * npr))
    return xp1 * np.repeat(f_sel, npr, axis=0)


def build_a_p2(x_slice, layout: PreambleLayout):
    """Per-UE stage-2 measurement block (N_p M_p x (k_max+2halo+1)(l_max+1)).

    Column-block d holds the delay-rotated (by d) truncated cyclic-shift
    expansion of the transmit slice; the Hadamard phase tiles one ramp block
    per delay tap, with rows indexed by absolute delay l_p..l_p+M_p-1.
    """
    x = np.asarray(x_slice, dtype=complex)
    n_p, m_p = layout.n_p, layout.m_p
    if x.shape != (n_p + layout.halo, m_p):
        raise LayoutError(
            f"transmit slice shape {x.shape} != {(n_p + layout.halo, m_p)}")
    n, m = layout.grid.shape

    trunc = [truncated_cyclic_columns(
        CyclicShiftSpec(x[:, c], layout.k_max, layout.halo))
        for c in range(m_p)]
    col_blocks = [np.vstack([trunc[(r - d) % m_p] for r in range(m_p)])
                  for d in range(layout.l_max + 1)]
    xp2 = np.hstack(col_blocks)

    cols = halo_column_values(n_p, layout.k_max, layout.halo)
    rows = np.arange(layout.l_p, layout.l_p + m_p)
    f_sel = np.exp(2j * np.pi * np.outer(rows, cols) / (m * n))
    phi = np.tile(np.repeat(f_sel, n_p, axis=0), (1, layout.l_max + 1))
    return xp2 * phi


def measurement_p1(plans: dict, layout: PreambleLayout, y_matrix=None):
    """Stack per-UE stage-1 blocks over all UEs (sorted by id)."""
    ues = sorted(plans)
    blocks = [build_a_p1(plans[u].p1_symbols, layout.kp_max, layout.halo_rough)
              for u in ues]
    shifts = halo_shifts(layout.kp_max, layout.halo_rough)
    cmap = tuple((u, 0, int(s)) for u in ues for s in shifts)
    return MeasurementSystem(
        a_matrix=np.hstack(blocks), y_matrix=y_matrix,
        column_map=cmap, stage="rough")


def measurement_p2(plans: dict, layout: PreambleLayout, ues, y_matrix=None):
    """Stack per-UE stage-2 blocks over the candidate UE set (sorted)."""
    ues = sorted(ues)
    blocks = [build_a_p2(p2_slice(plans[u]), layout) for u in ues]
    shifts = halo_shifts(layout.k_max, layout.halo)
    cmap = tuple((u, d, int(s))
                 for u in ues for d in range(layout.l_max + 1) for s in shifts)
    return MeasurementSystem(
        a_matrix=np.hstack(blocks), y_matrix=y_matrix,
        column_map=cmap, stage="accurate")


# ----------------------------------------------------------------------------
# Observation extraction
# ----------------------------------------------------------------------------

def _as_field(field):
    f = np.asarray(field, dtype=complex)
    if f.ndim == 2:
        f = f[:, :, None]
    return f


def extract_y_p1(tf_field, layout: PreambleLayout):
    """Stage-1 observation: decimate the received TF field and SFFT.

    Takes every (1/alpha)-th TF row and the first M' TF columns, rescales by
    1/sqrt(alpha beta) so amplitudes match the standalone N' x M' preamble1
    system, applies an N' x M' SFFT per beam and vectorizes delay-major.
    Returns (N'M', J).
    """
    f = _as_field(tf_field)
    n, m, j = f.shape
    if f.shape[:2] != layout.grid.shape:
        raise LayoutError("received TF field does not match the grid")
    stride = n // layout.n_rough
    small = f[::stride, :layout.m_rough, :] / \
        np.sqrt(layout.alpha * layout.beta)
    dd = np.fft.fft(np.fft.ifft(small, axis=1), axis=0) * \
        np.sqrt(layout.m_rough / layout.n_rough)
    return dd.transpose(1, 0, 2).reshape(layout.m_rough * layout.n_rough, j)


def extract_y_p2(dd_field, layout: PreambleLayout):
    """Stage-2 observation: vectorized DD slice rows [k_p, k_p+N_p) x
    cols [l_p, l_p+M_p), delay-major.  Returns (N_p M_p, J)."""
    f = _as_field(dd_field)
    if f.shape[:2] != layout.grid.shape:
        raise LayoutError("received DD field does not match the grid")
    sl = f[layout.k_p:layout.k_p + layout.n_p,
           layout.l_p:layout.l_p + layout.m_p, :]
    return sl.transpose(1, 0, 2).reshape(layout.n_p * layout.m_p, f.shape[2])


# ----------------------------------------------------------------------------
# Forward synthesis
# ----------------------------------------------------------------------------

def synthesize_observation(frames: dict, taps: dict, halo, n_beams,
                           noise_var=0.0, rng=None):
    """Per-AP received DD field: sum of dd_forward over UEs plus CN noise.

    ``frames`` maps ue -> DdFrame and ``taps`` maps ue -> quantized tap list
    for this AP.  Returns (N, M, n_beams).
    """
    shapes = {frames[u].grid.shape for u in frames}
    if len(shapes) != 1:
        raise ConfigurationError("all frames must share one grid")
    n, m = shapes.pop()
    out = np.zeros((n, m, n_beams), dtype=complex)
    for u, frame in frames.items():
        field = dd_forward(frame, taps[u], halo)
        out += field[:, :, None] if field.ndim == 2 else field
    if noise_var > 0.0:
        if rng is None:
            raise ConfigurationError("noise synthesis needs an rng")
        out += np.sqrt(noise_var / 2.0) * (
            rng.standard_normal(out.shape) + 1j * rng.standard_normal(out.shape))
    return out


def stage1_forward(plans: dict, pathsets: dict, layout: PreambleLayout,
                   beams: dict | None = None, n_beams=1):
    """Stage-1 observation synthesized directly from the decimated model.

    Evaluates the small-system reception per path: Doppler leakage over the
    halo around the rough-quantized bin, the coarse-delay gain/phase factor,
    and the exact per-delay-column Doppler ramp.  This is the stage-1
    measurement equation before its matrix factorization, so it isolates the
    bookkeeping of A^p1/H^DD1 from the time-decimation approximation (which
    the oracle suite quantifies separately).  Returns (N'M', J).
    """
    npr, mpr = layout.n_rough, layout.m_rough
    grid = layout.grid
    out = np.zeros((npr, mpr, n_beams), dtype=complex)
    for u, plan in plans.items():
        x = plan.p1_symbols
        for idx, path in enumerate(pathsets[u].paths):
            nu_norm = path.doppler_hz * grid.n_doppler * grid.symbol_s
            kp_int = int(np.floor(nu_norm + 0.5))
            kp_frac = nu_norm - kp_int
            lp_frac = path.delay_s * mpr * grid.subcarrier_hz
            gain = (path.gain * psi(mpr, -lp_frac, 0)
                    * np.exp(-2j * np.pi * lp_frac * nu_norm / (npr * mpr)))
            ramp = np.exp(2j * np.pi * np.arange(mpr) * nu_norm / (npr * mpr))
            field = np.zeros((npr, mpr), dtype=complex)
            for t in range(-layout.halo_rough, layout.halo_rough + 1):
                w = psi(npr, kp_frac, t)
                if w != 0:
                    field += w * np.roll(x, kp_int + t, axis=0)
            field *= gain * ramp[None, :]
            b = np.ones(n_beams, dtype=complex)
            if beams is not None:
                b = np.atleast_1d(np.asarray(beams[u][idx], dtype=complex))
            out += field[:, :, None] * b[None, None, :]
    return out.transpose(1, 0, 2).reshape(mpr * npr, n_beams)


def apply_tap_channel(frame, tap_matrix, layout: PreambleLayout):
    """Forward operator S(X, H): full-frame field from a stage-2 tap matrix.

    Mirrors the stage-2 measurement model on the whole grid: row (d, s) of
    the tap matrix shifts the frame by (s, d), applies the model's Doppler
    phase ramp for its halo column, and the wrapped-delay phase on columns
    l < d.  Used for SIC and SINR bookkeeping.  Returns (N, M, J).
    """
    x = frame.symbols if isinstance(frame, DdFrame) else np.asarray(frame)
    n, m = layout.grid.shape
    h = np.asarray(tap_matrix, dtype=complex)
    j = h.shape[1]
    cols = halo_column_values(layout.n_p, layout.k_max, layout.halo)
    lattice = [(d, int(s))
               for d in range(layout.l_max + 1)
               for s in halo_shifts(layout.k_max, layout.halo)]
    out = np.zeros((n, m, j), dtype=complex)
    rows_k = np.arange(n)[:, None]
    for r, (d, s) in enumerate(lattice):
        v = h[r]
        if not np.any(v):
            continue
        col_val = cols[r % len(cols)]
        ramp = np.exp(2j * np.pi * np.arange(m) * col_val / (n * m))
        field = np.roll(x, (s, d), axis=(0, 1)) * ramp[None, :]
        if d > 0:
            field[:, :d] *= np.exp(-2j * np.pi * (rows_k - s) / n)
        out += field[:, :, None] * v[None, None, :]
    return out
