"""Fingerprint-spectrum CFO/TO estimation.

Echoes off long-term static objects draw a stable ridge in the
delay-Doppler spectrum: its row position tracks the carrier frequency
offset and its delay profile tracks the timing offset.  Treating that
ridge slice as an environment fingerprint, an offset drift turns into a
circular shift of the fingerprint, so the drift is recovered by locating
the shift that maximises the cross-correlation against a calibration
capture.

Two estimators are provided: the joint 2-D search over (row, lag), and a
decomposed variant that first matches the fingerprint's total power to a
row (CFO), then runs a single 1-D lag correlation on it (TO).  Both run
on the compensated stack *before* clutter suppression, since the static
echoes are exactly what they feed on.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np

from .rv_estimator import DelayDopplerSpectrum
from .scenario import SPEED_OF_LIGHT
from .waveform import OfdmConfig


class FingerprintError(RuntimeError):
    """No usable static ridge (clutter too weak or absent)."""


@dataclass
class Fingerprint:
    """Calibration slice of the delay-Doppler spectrum.

    ``zeta`` holds the first Q_B = floor(K_r N_sub / 2) bins of the ridge
    row ``k_c``; the padding factors and full grid geometry are kept so a
    later capture can be checked for compatibility.
    """

    zeta: np.ndarray
    k_c: int
    k_doppler: int
    k_range: int
    n_rows_full: int
    captured_at: float = field(default_factory=time.time)

    @property
    def q_b(self) -> int:
        return self.zeta.shape[0]

    def numerology_hash(self) -> str:
        text = f"{self.k_doppler},{self.k_range},{self.n_rows_full},{self.q_b}"
        return hashlib.md5(text.encode()).hexdigest()[:12]


@dataclass
class SyncEstimate:
    """Estimated offset drift since calibration.

    d_xi is the normalized CFO change (Hz change / subcarrier spacing),
    d_tau the timing change in seconds, score the winning correlation
    magnitude.
    """

    d_xi: float
    d_tau: float
    score: float
    row_shift: int = 0
    lag: int = 0


def _search_bands(spec: DelayDopplerSpectrum):
    """(K_B, Q_B): row and lag search extents, half the padded grid."""
    return spec.n_rows_full // 2, spec.grid.shape[1] // 2


def _require_metadata(spec: DelayDopplerSpectrum) -> OfdmConfig:
    if spec.cfg is None or spec.f_r is None or spec.t_r is None:
        raise ValueError("spectrum must be built with its OfdmConfig to "
                         "convert bins to physical offsets")
    return spec.cfg


def capture_fingerprint(spec: DelayDopplerSpectrum) -> Fingerprint:
    """Extract the static-clutter ridge as the environment fingerprint.

    The ridge row is detected as the maximal-power row of the searched
    half grid; the spectrum must come from the compensated stack without
    clutter suppression, otherwise the ridge has been cancelled away.
    Raises :class:`FingerprintError` when the best row is less than 3 dB
    above the median row power.
    """
    k_b, q_b = _search_bands(spec)
    band = spec.grid[:k_b, :q_b]
    row_power = np.sum(np.abs(band) ** 2, axis=1)
    k_c = int(np.argmax(row_power))
    if row_power[k_c] < 2.0 * np.median(row_power):
        raise FingerprintError("maximal row is under 3 dB above the median; "
                               "no static ridge to fingerprint")
    return Fingerprint(zeta=band[k_c].copy(), k_c=k_c,
                       k_doppler=spec.k_doppler, k_range=spec.k_range,
                       n_rows_full=spec.n_rows_full)


def _check_compatible(fp: Fingerprint, spec: DelayDopplerSpectrum):
    k_b, q_b = _search_bands(spec)
    if (fp.k_doppler != spec.k_doppler or fp.k_range != spec.k_range
            or fp.n_rows_full != spec.n_rows_full or fp.q_b != q_b):
        raise ValueError("fingerprint and spectrum numerologies differ")


def _circular_scores(rows, zeta) -> np.ndarray:
    """|sum_i rows[k, (q+i) mod Q_B] * conj(zeta[i])| for all k, q."""
    f_rows = np.fft.fft(rows, axis=1)
    f_zeta = np.conj(np.fft.fft(zeta))
    return np.abs(np.fft.ifft(f_rows * f_zeta[None, :], axis=1))


def _signed_lag(q, q_b) -> int:
    return q - q_b if q > q_b // 2 else q


def _to_estimate(fp, spec, row, lag_raw, score) -> SyncEstimate:
    cfg = _require_metadata(spec)
    _, q_b = _search_bands(spec)
    lag = _signed_lag(int(lag_raw), q_b)
    row_shift = int(row) - fp.k_c
    d_xi = row_shift * spec.f_r / cfg.subcarrier_spacing_hz
    d_tau = lag * spec.t_r
    return SyncEstimate(d_xi=float(d_xi), d_tau=float(d_tau),
                        score=float(score), row_shift=row_shift, lag=lag)


def cmcc_estimate(fp: Fingerprint, updated: DelayDopplerSpectrum) -> SyncEstimate:
    """Joint 2-D maximum-likelihood search over (ridge row, circular lag)."""
    _check_compatible(fp, updated)
    k_b, q_b = _search_bands(updated)
    scores = _circular_scores(updated.grid[:k_b, :q_b], fp.zeta)
    row, lag = np.unravel_index(np.argmax(scores), scores.shape)
    return _to_estimate(fp, updated, row, lag, scores[row, lag])


def scmcc_estimate(fp: Fingerprint, updated: DelayDopplerSpectrum) -> SyncEstimate:
    """Decomposed search: power-match the row first, then correlate once.

    The CFO stage picks the row whose energy over the fingerprint support
    is closest to ||zeta||^2 (ties break toward the lower row index);
    the TO stage is the 1-D circular correlation on that row alone.
    """
    _check_compatible(fp, updated)
    k_b, q_b = _search_bands(updated)
    band = updated.grid[:k_b, :q_b]
    target = float(np.sum(np.abs(fp.zeta) ** 2))
    row_power = np.sum(np.abs(band) ** 2, axis=1)
    row = int(np.argmin(np.abs(row_power - target)))
    scores = _circular_scores(band[row:row + 1], fp.zeta)[0]
    lag = int(np.argmax(scores))
    return _to_estimate(fp, updated, row, lag, scores[lag])


def apply_sync(estimates, sync: SyncEstimate, cfg: OfdmConfig):
    """Remove the estimated offset drift from (range, velocity) pairs.

    Ranges drop c * d_tau; velocities (physical m/s convention) drop the
    CFO-equivalent speed c * d_xi * delta_f / (2 f_c).
    """
    dr = SPEED_OF_LIGHT * sync.d_tau
    dv = SPEED_OF_LIGHT * sync.d_xi * cfg.subcarrier_spacing_hz / (2.0 * cfg.carrier_hz)
    return [(r - dr, v - dv) for r, v in estimates]


# ---------------------------------------------------------------------------
# fingerprint persistence: CSV of (index, re, im) with a metadata header
# ---------------------------------------------------------------------------

def save_fingerprint(filename, fp: Fingerprint) -> None:
    with open(filename, "w") as fh:
        fh.write(f"# k_c={fp.k_c} k_doppler={fp.k_doppler} "
                 f"k_range={fp.k_range} n_rows_full={fp.n_rows_full} "
                 f"captured_at={fp.captured_at!r} hash={fp.numerology_hash()}\n")
        fh.write("index,re,im\n")
        for i, z in enumerate(fp.zeta):
            fh.write(f"{i},{float(z.real)!r},{float(z.imag)!r}\n")


def load_fingerprint(filename) -> Fingerprint:
    with open(filename) as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError("missing fingerprint header line")
        meta = dict(item.split("=", 1) for item in header[1:].split())
        fh.readline()  # column names
        values = [complex(float(r), float(im))
                  for _, r, im in (line.strip().split(",") for line in fh if line.strip())]
    fp = Fingerprint(zeta=np.array(values), k_c=int(meta["k_c"]),
                     k_doppler=int(meta["k_doppler"]),
                     k_range=int(meta["k_range"]),
                     n_rows_full=int(meta["n_rows_full"]),
                     captured_at=float(meta["captured_at"]))
    if meta.get("hash") not in (None, fp.numerology_hash()):
        raise ValueError("fingerprint numerology hash mismatch")
    return fp
