"""Delay-Doppler core: grid geometry, symplectic transforms, the Doppler
leakage kernel, cyclic-shift column builders, the truncated DD channel
operator and a sample-level time-domain reference pipeline.

Conventions used throughout the package:

* DD frames are (N, M) complex arrays: row index k is the Doppler bin,
  column index l is the delay bin.
* ``circ(x, i)[n] = x[(n - i) mod len(x)]`` (downward circular shift), so
  that column k'' of a cyclic-shift matrix multiplies X[k - k'', :].
* Received fields with a beam dimension are (N, M, J) arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class FrameError(ValueError):
    """Grid or frame parameters violate an invariant."""


class TapError(ValueError):
    """Channel tap outside the grid or halo budget."""


class ResolutionError(ValueError):
    """Oversampling factor too small for the time-domain pipeline."""


# ----------------------------------------------------------------------------
# Grid and frame containers
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class OtfsGrid:
    """OTFS grid geometry: N Doppler bins, M delay bins, subcarrier spacing.

    The symbol duration is tied to the subcarrier spacing by T * df = 1;
    delay resolution is 1/(M df) and Doppler resolution 1/(N T).
    """

    n_doppler: int
    m_delay: int
    subcarrier_hz: float
    symbol_s: float | None = None

    def __post_init__(self):
        if self.n_doppler < 1 or self.m_delay < 1:
            raise FrameError("grid dimensions must be >= 1")
        if self.subcarrier_hz <= 0:
            raise FrameError("subcarrier spacing must be positive")
        if self.symbol_s is None:
            object.__setattr__(self, "symbol_s", 1.0 / self.subcarrier_hz)
        elif abs(self.symbol_s * self.subcarrier_hz - 1.0) > 1e-12:
            raise FrameError("symbol duration must satisfy T * df = 1")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_doppler, self.m_delay)

    @property
    def delay_resolution_s(self) -> float:
        return 1.0 / (self.m_delay * self.subcarrier_hz)

    @property
    def doppler_resolution_hz(self) -> float:
        return 1.0 / (self.n_doppler * self.symbol_s)

    @property
    def bandwidth_hz(self) -> float:
        return self.m_delay * self.subcarrier_hz

    @property
    def duration_s(self) -> float:
        return self.n_doppler * self.symbol_s


@dataclass(frozen=True)
class DdFrame:
    """A DD-domain symbol frame bound to its grid."""

    grid: OtfsGrid
    symbols: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.symbols, dtype=complex)
        if s.shape != self.grid.shape:
            raise FrameError(
                f"frame shape {s.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(s)):
            raise FrameError("frame contains non-finite symbols")
        object.__setattr__(self, "symbols", s)


def _as_symbols(frame, grid=None):
    if isinstance(frame, DdFrame):
        return frame.symbols
    x = np.asarray(frame, dtype=complex)
    if x.ndim != 2:
        raise FrameError("expected a 2-D symbol matrix")
    if grid is not None and x.shape != grid.shape:
        raise FrameError(f"frame shape {x.shape} does not match grid {grid.shape}")
    return x


# ----------------------------------------------------------------------------
# Symplectic transforms
# ----------------------------------------------------------------------------

def isfft(frame, grid=None):
    """Inverse symplectic FFT: DD frame -> TF frame (unitary).

    X_tf[n, m] = (1/sqrt(NM)) sum_{k,l} X_dd[k, l] exp(-2j pi (m l / M - n k / N))
    """
    x = _as_symbols(frame, grid)
    n, m = x.shape
    return np.fft.fft(np.fft.ifft(x, axis=0), axis=1) * np.sqrt(n / m)


def sfft(frame, grid=None):
    """Symplectic FFT: TF frame -> DD frame; exact inverse of :func:`isfft`."""
    y = _as_symbols(frame, grid)
    n, m = y.shape
    return np.fft.fft(np.fft.ifft(y, axis=1), axis=0) * np.sqrt(m / n)


# ----------------------------------------------------------------------------
# Doppler leakage kernel
# ----------------------------------------------------------------------------

def psi(n, x, y):
    """Length-n normalized geometric sum (1/n) sum_m exp(-2j pi m (y-x)/n).

    This is the fractional-Doppler leakage weight: for integer y it reduces
    to the closed form (1/n)(1 - e^{2j pi x}) / (1 - e^{-2j pi (y-x)/n}).
    Degenerate denominators are resolved by the analytic limit, so the
    function is total: 1 when (y-x) is a multiple of n, 0 when (y-x) is any
    other integer.
    """
    if n < 1:
        raise FrameError("psi kernel length must be >= 1")
    d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    scalar = d.ndim == 0
    d = np.atleast_1d(d)

    ratio = d / n
    aligned = np.abs(ratio - np.round(ratio)) < 1e-12    # (y-x) multiple of n
    integer = np.abs(d - np.round(d)) < 1e-12            # any other integer

    # half-angle form of (1 - e^{-2j pi d}) / (n (1 - e^{-2j pi d/n})):
    # cancellation-free for small offsets
    den = n * np.sin(np.pi * np.where(aligned, 0.5, ratio))
    out = (np.sin(np.pi * d) / den) * \
        np.exp(-1j * np.pi * d * (1.0 - 1.0 / n))
    out = np.where(integer & ~aligned, 0.0, out)
    out = np.where(aligned, 1.0 + 0.0j, out)
    return complex(out[0]) if scalar else out


# ----------------------------------------------------------------------------
# Cyclic-shift column builders
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class CyclicShiftSpec:
    """Column plan for a cyclic-shift matrix: shifts 0..k+halo then -halo..-1."""

    base: np.ndarray
    max_shift: int
    halo: int

    def __post_init__(self):
        b = np.asarray(self.base, dtype=complex)
        if b.ndim != 1:
            raise FrameError("base must be a vector")
        if self.max_shift < 0 or self.halo < 0:
            raise FrameError("max_shift and halo must be non-negative")
        if self.max_shift + 2 * self.halo + 1 > b.size:
            raise FrameError(
                f"{self.max_shift + 2 * self.halo + 1} shifted columns exceed "
                f"base length {b.size}")
        object.__setattr__(self, "base", b)

    @property
    def shifts(self) -> list[int]:
        return list(range(self.max_shift + self.halo + 1)) + \
            list(range(-self.halo, 0))


def halo_shifts(max_shift, halo):
    """Signed shift of each column of a cyclic-shift matrix, in column order."""
    return np.array(
        list(range(max_shift + halo + 1)) + list(range(-halo, 0)), dtype=int)


def cyclic_columns(spec: CyclicShiftSpec) -> np.ndarray:
    """Stack circularly shifted copies of the base vector as columns.

    Column order follows the halo plan [0, 1, ..., k+halo, -halo, ..., -1]
    with circ(x, i)[n] = x[(n - i) mod len(x)].
    """
    x = spec.base
    n = x.size
    idx = (np.arange(n)[:, None] - halo_shifts(spec.max_shift, spec.halo)[None, :]) % n
    return x[idx]


def truncated_cyclic_columns(spec: CyclicShiftSpec) -> np.ndarray:
    """:func:`cyclic_columns` with the last ``halo`` rows removed."""
    full = cyclic_columns(spec)
    n = spec.base.size
    return full[: n - spec.halo, :]


# ----------------------------------------------------------------------------
# DD channel operator (truncated-halo model) and time-domain reference
# ----------------------------------------------------------------------------

def _tap_beam(beam):
    if beam is None or np.isscalar(beam):
        return None if beam is None or beam == 1 else complex(beam)
    b = np.asarray(beam, dtype=complex)
    if b.ndim != 1:
        raise TapError("beam vector must be 1-D")
    return b


def dd_forward(frame, taps, halo):
    """Received DD field of one frame through quantized channel taps.

    Each tap is (gain, l_int, k_int, k_frac, beam).  The contribution of a
    tap sums over Doppler offsets k'' in [k_int - halo, k_int + halo] with
    leakage weights psi(N, k_int + k_frac, k''), a per-delay phase ramp
    exp(2j pi (l - l_int)(k_int + k_frac)/(NM)), and on wrapped delay
    columns l < l_int an extra phase exp(-2j pi (k - k'')/N).

    Returns an (N, M) field when every tap beam is scalar, else (N, M, J).
    """
    x = _as_symbols(frame)
    n, m = x.shape
    if halo < 0:
        raise TapError("halo must be non-negative")

    beams = [_tap_beam(t[4]) if len(t) > 4 else None for t in taps]
    j_dims = {b.size for b in beams if isinstance(b, np.ndarray)}
    if len(j_dims) > 1:
        raise TapError("all beam vectors must share one length")
    j = j_dims.pop() if j_dims else 0

    out = np.zeros((n, m, j) if j else (n, m), dtype=complex)
    rows = np.arange(n)[:, None]
    cols = np.arange(m)

    for tap, beam in zip(taps, beams):
        gain, l_int, k_int, k_frac = tap[0], int(tap[1]), int(tap[2]), float(tap[3])
        if not 0 <= l_int < m:
            raise TapError(f"delay tap {l_int} outside [0, {m})")
        if abs(k_frac) > 0.5 + 1e-9:
            raise TapError(f"fractional Doppler {k_frac} outside [-0.5, 0.5]")
        if gain == 0:
            continue
        ramp = np.exp(2j * np.pi * (cols - l_int) * (k_int + k_frac) / (n * m))
        field = np.zeros((n, m), dtype=complex)
        for t in range(-halo, halo + 1):
            kpp = k_int + t
            w = psi(n, k_int + k_frac, kpp)
            if w == 0:
                continue
            shifted = np.roll(x, (kpp, l_int), axis=(0, 1))
            contrib = w * shifted
            if l_int > 0:
                contrib[:, :l_int] *= np.exp(-2j * np.pi * (rows - kpp) / n)
            field += contrib
        field *= gain * ramp[None, :]
        if j:
            b = beam if isinstance(beam, np.ndarray) else \
                np.full(j, 1.0 if beam is None else beam, dtype=complex)
            out += field[:, :, None] * b[None, None, :]
        else:
            out += field if beam is None else field * beam
    return out


def time_domain_oracle(frame, paths, oversample=8, receiver="symbol-rate"):
    """Brute-force sample-level pipeline: Heisenberg -> channel -> Wigner -> SFFT.

    ``paths`` is a list of (gain, delay_s, doppler_hz) physical taps applied
    to the oversampled time signal; rectangular transmit/receive pulses of
    duration T.  Delays are rounded to the oversampled grid and the frame is
    treated as cyclic (one-frame CP), matching the quasi-periodic DD model.

    receiver="symbol-rate" decimates the channel output to M samples per
    symbol before the Wigner DFT (the standard discrete OTFS receiver, and
    the model the DD input-output relation discretizes);
    receiver="matched-filter" integrates the full oversampled stream and so
    additionally exposes the receive-side sampling approximation.
    """
    if oversample < 2:
        raise ResolutionError("oversample must be >= 2")
    if receiver not in ("symbol-rate", "matched-filter"):
        raise FrameError(f"unknown receiver mode {receiver!r}")
    if isinstance(frame, DdFrame):
        grid, x = frame.grid, frame.symbols
    else:
        raise FrameError("time_domain_oracle requires a DdFrame (needs grid timing)")
    n, m = grid.shape
    s_per_sym = oversample * m
    fs = s_per_sym * grid.subcarrier_hz

    x_tf = isfft(x)
    padded = np.zeros((n, s_per_sym), dtype=complex)
    padded[:, :m] = x_tf
    s = (np.fft.ifft(padded, axis=1) * s_per_sym).reshape(-1)

    t = np.arange(n * s_per_sym) / fs
    r = np.zeros_like(s)
    for gain, delay_s, doppler_hz in paths:
        if not 0 <= delay_s < grid.symbol_s:
            raise TapError("path delay must lie in [0, T)")
        shift = int(round(delay_s * fs))
        r += gain * np.roll(s, shift) * np.exp(2j * np.pi * doppler_hz * (t - delay_s))

    if receiver == "symbol-rate":
        r = r[::oversample].reshape(n, m)
        y_tf = np.fft.fft(r, axis=1) / m
    else:
        y_tf = np.fft.fft(r.reshape(n, s_per_sym), axis=1)[:, :m] / s_per_sym
    return sfft(y_tf)


def nmse_db(estimate, reference, floor_db=-100.0):
    """10 log10(||est - ref||^2 / ||ref||^2), clamped below at ``floor_db``."""
    ref = np.asarray(reference)
    err = np.asarray(estimate) - ref
    den = np.linalg.norm(ref) ** 2
    if den == 0:
        return np.nan
    ratio = np.linalg.norm(err) ** 2 / den
    if ratio <= 10.0 ** (floor_db / 10.0):
        return floor_db
    return float(10.0 * np.log10(ratio))
