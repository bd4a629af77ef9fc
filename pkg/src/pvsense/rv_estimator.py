"""Delay-Doppler spectrum estimation and peak-based range/velocity readout.

The spectrum is the zero-padded 2D-DFT of the *real part* of the stacked
antenna row Gamma_m.  Working on the real part halves the arithmetic at
the cost of a conjugate-mirrored copy of every lobe, which is why peak
search is restricted to the first quarter of the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .scenario import SPEED_OF_LIGHT
from .waveform import OfdmConfig

WINDOWS = ("rectangular", "hamming")

# blind-mode detection threshold above the median quarter-plane magnitude
BLIND_THRESHOLD_DB = 12.0


class PeakDetectionError(RuntimeError):
    """Fewer usable local maxima than requested peaks."""


@dataclass
class DelayDopplerSpectrum:
    """Zero-padded 2D-DFT grid with axis metadata.

    grid:       (K * G_eff) x (K_r * N_sub) complex spectrum.
    k_doppler:  padding factor K along the symbol (Doppler) axis.
    k_range:    padding factor K_r along the subcarrier (delay) axis.
    f_r:        Doppler bin width in Hz, 1 / (K * G_eff * T_sym).
    t_r:        delay bin width in seconds, T_s / K_r.
    """

    grid: np.ndarray
    k_doppler: int
    k_range: int
    window_kind: str = "rectangular"
    f_r: float | None = None
    t_r: float | None = None
    cfg: OfdmConfig | None = field(default=None, repr=False)
    n_rows_full: int | None = None

    def __post_init__(self):
        if self.n_rows_full is None:
            self.n_rows_full = self.grid.shape[0]

    @property
    def is_half(self) -> bool:
        return self.grid.shape[0] != self.n_rows_full

    @property
    def n_rows_data(self) -> int:
        return self.n_rows_full // self.k_doppler

    @property
    def n_cols_data(self) -> int:
        return self.grid.shape[1] // self.k_range


@dataclass
class PeakSet:
    """Quarter-plane peak coordinates, strongest first.

    ``rows``/``cols`` are 0-based bin indices into the padded grid;
    padding factors and the data row count are carried along so the
    physical mapping does not need the originating spectrum object.
    """

    rows: np.ndarray
    cols: np.ndarray
    magnitudes: np.ndarray
    k_doppler: int
    k_range: int
    n_rows_data: int


def window_taper(kind, length) -> np.ndarray:
    if kind == "rectangular":
        return np.ones(length)
    if kind == "hamming":
        return np.hamming(length)
    raise ValueError(f"unknown window {kind!r}; pick one of {WINDOWS}")


def padded_fft2(data, k_doppler, k_range, max_rows=None) -> np.ndarray:
    """2D-DFT of ``data`` zero padded to (K*rows, K_r*cols).

    Runs the symbol-axis transform first so an optional ``max_rows``
    restriction skips most of the work of the larger delay-axis pass.
    """
    rows, cols = data.shape
    stage = np.fft.fft(data, n=k_doppler * rows, axis=0)
    if max_rows is not None:
        stage = stage[:max_rows]
    return np.fft.fft(stage, n=k_range * cols, axis=1)


def spectrum(gamma_m, k_doppler=5, k_range=25, window_kind="rectangular",
             cfg: OfdmConfig | None = None, half_rows=False) -> DelayDopplerSpectrum:
    """Real-part 2D-DFT spectrum of the stacked antenna row.

    ``gamma_m`` is the (G_eff x N_sub) complex matrix; the transform acts
    on window * Re(gamma_m).  ``cfg`` fills in the physical bin widths.
    With ``half_rows`` only the nonnegative-Doppler row half is computed
    (rows 0 .. R/2); peak search and synchronization never look beyond
    it, and skipping the mirrored half roughly halves the transform cost.
    """
    if k_doppler < 1 or k_range < 1:
        raise ValueError("padding factors must be >= 1")
    g_eff, n_sub = gamma_m.shape
    taper = np.outer(window_taper(window_kind, g_eff),
                     window_taper(window_kind, n_sub))
    n_rows_full = k_doppler * g_eff
    max_rows = n_rows_full // 2 + 1 if half_rows else None
    grid = padded_fft2(taper * np.real(gamma_m), k_doppler, k_range,
                       max_rows=max_rows)
    f_r = t_r = None
    if cfg is not None:
        f_r = 1.0 / (k_doppler * g_eff * cfg.symbol_duration_s)
        t_r = cfg.sample_period_s / k_range
    return DelayDopplerSpectrum(grid=grid, k_doppler=k_doppler,
                                k_range=k_range, window_kind=window_kind,
                                f_r=f_r, t_r=t_r, cfg=cfg,
                                n_rows_full=n_rows_full)


def find_peaks(spec: DelayDopplerSpectrum, n_expected=None) -> PeakSet:
    """Strongest local maxima in the quarter-plane of |grid|.

    A guard of one mainlobe width (k_doppler rows x k_range columns on
    each side) suppresses sidelobe and shoulder re-detection around every
    accepted peak.  With ``n_expected`` set, raises
    :class:`PeakDetectionError` when fewer usable maxima exist; without
    it, keeps every maximum at least 12 dB above the median magnitude.
    """
    rows, cols = spec.n_rows_full, spec.grid.shape[1]
    quarter = np.abs(spec.grid[: rows // 2 + 1, : cols // 2 + 1])
    is_max = ndimage.maximum_filter(quarter, size=3, mode="nearest") == quarter
    floor = np.median(quarter)
    if n_expected is None:
        threshold = floor * 10.0 ** (BLIND_THRESHOLD_DB / 20.0)
    else:
        threshold = floor
    cand_r, cand_c = np.nonzero(is_max & (quarter > threshold))
    if cand_r.size == 0:
        raise PeakDetectionError("no local maxima above the noise floor")
    mags = quarter[cand_r, cand_c]
    order = np.argsort(mags)[::-1]

    guard_r, guard_c = spec.k_doppler, spec.k_range
    taken_r, taken_c, taken_m = [], [], []
    want = n_expected if n_expected is not None else cand_r.size
    for idx in order:
        r, c = cand_r[idx], cand_c[idx]
        if any(abs(r - tr) <= guard_r and abs(c - tc) <= guard_c
               for tr, tc in zip(taken_r, taken_c)):
            continue
        taken_r.append(r)
        taken_c.append(c)
        taken_m.append(mags[idx])
        if len(taken_r) == want:
            break
    if n_expected is not None and len(taken_r) < n_expected:
        raise PeakDetectionError(
            f"found {len(taken_r)} peaks, expected {n_expected}")
    return PeakSet(rows=np.array(taken_r), cols=np.array(taken_c),
                   magnitudes=np.array(taken_m), k_doppler=spec.k_doppler,
                   k_range=spec.k_range, n_rows_data=spec.n_rows_data)


def range_resolution(cfg: OfdmConfig) -> float:
    """Unpadded range bin width R_u = c / (N_sub * delta_f)."""
    return SPEED_OF_LIGHT / (cfg.n_subcarriers * cfg.subcarrier_spacing_hz)


def velocity_resolution(cfg: OfdmConfig, g_eff) -> float:
    """Unpadded velocity bin width V_u = c / (f_c * T_sym * G_eff)."""
    return SPEED_OF_LIGHT / (cfg.carrier_hz * cfg.symbol_duration_s * g_eff)


def map_to_physical(peaks: PeakSet, cfg: OfdmConfig):
    """Convert peak bins to (range m, velocity m/s) pairs.

    Ranges are bistatic path sums UT->target->RRU.  Velocities follow the
    delay-Doppler reading v = c f_D / f_c, i.e. twice the radial speed of
    an approaching target; halve to compare against physical speeds.
    """
    r_u = range_resolution(cfg) / peaks.k_range
    v_u = velocity_resolution(cfg, peaks.n_rows_data) / peaks.k_doppler
    return [(float(c * r_u), float(r * v_u))
            for r, c in zip(peaks.rows, peaks.cols)]


def export_spectrum_csv(spec: DelayDopplerSpectrum, filename,
                        quarter_only=True) -> None:
    """Dump (row, col, magnitude) triples for surface plotting."""
    grid = spec.grid
    if quarter_only:
        grid = grid[: grid.shape[0] // 2 + 1, : grid.shape[1] // 2 + 1]
    with open(filename, "w") as fh:
        fh.write("row,col,magnitude\n")
        mags = np.abs(grid)
        for r in range(grid.shape[0]):
            row = mags[r]
            fh.write("\n".join(f"{r},{c},{row[c]:.8e}"
                               for c in range(grid.shape[1])))
            fh.write("\n")
