"""MUSIC direction finding and DOA-to-peak association.

Estimated arrival angles are matched to delay-Doppler peaks by spatial
filtering: beamform the clutter-suppressed stack toward each candidate
angle, transform the filtered signal back to the delay-Doppler domain,
and read off which angle keeps the most energy at each peak's bin.  The
full variant filters the whole stack; the delay- and Doppler-domain
variants filter a single best symbol or subcarrier and use a 1-D
transform, trading a little accuracy for a large complexity cut.

Note on the ULA convention: steering depends on sin(angle), so an angle
and its mirror pi - angle are indistinguishable.  MUSIC collapses such
mirror duplicates and reports one representative; association is
unaffected because the spatial filter is identical for both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .preprocess import MtiStack
from .rv_estimator import PeakSet, window_taper
from .waveform import steering_vector


class DoaEstimationError(RuntimeError):
    """Pseudo-spectrum does not expose the requested number of sources."""


@dataclass
class DoaEstimate:
    """Angles (radians, strongest peak first) and the scanned spectrum."""

    angles: np.ndarray
    pseudo_spectrum: np.ndarray
    grid: np.ndarray


@dataclass
class AssociationResult:
    """pairs[l] = (peak index l, associated DOA index, winning score)."""

    pairs: list[tuple[int, int, float]]

    def doa_index_for_peak(self, l) -> int:
        return self.pairs[l][1]


def estimate_doa(mti: MtiStack, n_sources, grid_step=math.radians(0.1),
                 d_over_lambda=0.5, max_snapshots=8192) -> DoaEstimate:
    """MUSIC over spatial snapshots drawn from the (symbol, subcarrier)
    cells of the clutter-suppressed stack.

    When the stack holds more than ``max_snapshots`` cells they are
    subsampled evenly; the covariance stays massively over-determined
    either way and the scan cost drops accordingly.
    """
    g_eff, m_r, n_sub = mti.breve_y.shape
    if not 1 <= n_sources < m_r:
        raise ValueError("need 1 <= n_sources < n_rx_antennas")

    snapshots = mti.breve_y.transpose(1, 0, 2).reshape(m_r, g_eff * n_sub)
    if snapshots.shape[1] > max_snapshots:
        stride = int(np.ceil(snapshots.shape[1] / max_snapshots))
        snapshots = snapshots[:, ::stride]
    cov = snapshots @ snapshots.conj().T / snapshots.shape[1]
    eigvals, eigvecs = np.linalg.eigh(cov)
    rank = int(np.sum(eigvals > max(eigvals[-1], 0.0) * 1e-10))
    if rank < n_sources:
        raise DoaEstimationError(
            f"snapshot covariance rank {rank} cannot carry {n_sources} "
            "sources (coherent or missing signals)")
    noise_space = eigvecs[:, : m_r - n_sources]

    n_grid = int(round(math.pi / grid_step)) + 1
    grid = np.linspace(0.0, math.pi, n_grid)
    m = np.arange(m_r)[:, None]
    steer = np.exp(-2j * np.pi * m * d_over_lambda * np.sin(grid)[None, :])
    denom = np.sum(np.abs(noise_space.conj().T @ steer) ** 2, axis=0)
    pseudo = 1.0 / np.maximum(denom, 1e-30)

    angles = _top_peaks(grid, pseudo, n_sources)
    return DoaEstimate(angles=angles, pseudo_spectrum=pseudo, grid=grid)


def _top_peaks(grid, pseudo, n_sources) -> np.ndarray:
    """Largest pseudo-spectrum local maxima with mirror duplicates removed."""
    interior = (pseudo[1:-1] >= pseudo[:-2]) & (pseudo[1:-1] >= pseudo[2:])
    idx = np.nonzero(interior)[0] + 1
    if pseudo[0] > pseudo[1]:
        idx = np.append(idx, 0)
    if pseudo[-1] > pseudo[-2]:
        idx = np.append(idx, len(pseudo) - 1)
    if idx.size == 0:
        raise DoaEstimationError("pseudo-spectrum has no local maxima")

    order = idx[np.argsort(pseudo[idx])[::-1]]
    step = grid[1] - grid[0]
    chosen = []
    for i in order:
        if any(abs(math.sin(grid[i]) - math.sin(grid[j])) < step for j in chosen):
            continue  # mirror or sub-resolution duplicate
        chosen.append(i)
        if len(chosen) == n_sources:
            break
    if len(chosen) < n_sources:
        raise DoaEstimationError(
            f"only {len(chosen)} resolvable sources, requested {n_sources} "
            "(rank-deficient or coherent snapshot covariance)")
    return grid[np.array(chosen)]


def _beamformers(angles, m_r, d_over_lambda) -> np.ndarray:
    """Conjugate steering rows; w_i @ a(M_R, phi)^T peaks at phi = angle_i."""
    return np.stack([np.conj(steering_vector(m_r, a, d_over_lambda))
                     for a in angles])


def _dft_values(data, row_bins, col_bins, n_rows_padded, n_cols_padded):
    """Entries of the zero-padded 2D-DFT of ``data`` at selected bins.

    Identical to fft2(data, s=(R, C))[row_bins, col_bins], evaluated
    directly since only a handful of bins are needed.
    """
    g = np.arange(data.shape[0])[:, None]
    u = np.arange(data.shape[1])[:, None]
    e_rows = np.exp(-2j * np.pi * g * np.asarray(row_bins)[None, :] / n_rows_padded)
    e_cols = np.exp(-2j * np.pi * u * np.asarray(col_bins)[None, :] / n_cols_padded)
    return np.einsum("gu,gp,up->p", data, e_rows, e_cols, optimize=True)


def _dft_values_1d(vec, bins, n_padded):
    n = np.arange(vec.shape[0])[:, None]
    e = np.exp(-2j * np.pi * n * np.asarray(bins)[None, :] / n_padded)
    return vec @ e


def _pick_pairs(scores) -> list[tuple[int, int, float]]:
    """scores[i, l] -> per-peak argmax over candidate angles."""
    pairs = []
    for l in range(scores.shape[1]):
        i = int(np.argmax(scores[:, l]))
        pairs.append((l, i, float(scores[i, l])))
    return pairs


def associate_full(mti: MtiStack, doas: DoaEstimate, peaks: PeakSet,
                   window_kind="rectangular", d_over_lambda=0.5) -> AssociationResult:
    """Full 2-D association: spatially filter the whole stack toward each
    candidate angle and score |Pi_i| at every peak's (row, col) bin."""
    if len(doas.angles) == 0 or peaks.rows.size == 0:
        raise ValueError("need at least one DOA estimate and one peak")
    g_eff, m_r, n_sub = mti.breve_y.shape
    beams = _beamformers(doas.angles, m_r, d_over_lambda)
    taper = np.outer(window_taper(window_kind, g_eff),
                     window_taper(window_kind, n_sub))
    n_rows = peaks.k_doppler * g_eff
    n_cols = peaks.k_range * n_sub

    scores = np.empty((len(doas.angles), peaks.rows.size))
    for i, w in enumerate(beams):
        filtered = np.einsum("m,gmu->gu", w, mti.breve_y)
        scores[i] = np.abs(_dft_values(taper * np.real(filtered),
                                       peaks.rows, peaks.cols,
                                       n_rows, n_cols))
    return AssociationResult(pairs=_pick_pairs(scores))


def associate_delay_domain(mti: MtiStack, doas: DoaEstimate, peaks: PeakSet,
                           window_kind="rectangular",
                           d_over_lambda=0.5) -> AssociationResult:
    """Reduced association on the strongest symbol's delay spectrum."""
    g_eff, m_r, n_sub = mti.breve_y.shape
    g_best = int(np.argmax(np.sum(np.abs(mti.breve_y) ** 2, axis=(1, 2))))
    beams = _beamformers(doas.angles, m_r, d_over_lambda)
    taper = window_taper(window_kind, n_sub)
    n_cols = peaks.k_range * n_sub

    scores = np.empty((len(doas.angles), peaks.cols.size))
    for i, w in enumerate(beams):
        s = np.real(w @ mti.breve_y[g_best]) * taper
        scores[i] = np.abs(_dft_values_1d(s, peaks.cols, n_cols))
    return AssociationResult(pairs=_pick_pairs(scores))


def associate_doppler_domain(mti: MtiStack, doas: DoaEstimate, peaks: PeakSet,
                             window_kind="rectangular",
                             d_over_lambda=0.5) -> AssociationResult:
    """Reduced association on the strongest subcarrier's Doppler spectrum."""
    g_eff, m_r, n_sub = mti.breve_y.shape
    n_best = int(np.argmax(np.sum(np.abs(mti.breve_y) ** 2, axis=(0, 1))))
    beams = _beamformers(doas.angles, m_r, d_over_lambda)
    taper = window_taper(window_kind, g_eff)
    n_rows = peaks.k_doppler * g_eff

    scores = np.empty((len(doas.angles), peaks.rows.size))
    for i, w in enumerate(beams):
        s = np.real(w @ mti.breve_y[:, :, n_best].T) * taper
        scores[i] = np.abs(_dft_values_1d(s, peaks.rows, n_rows))
    return AssociationResult(pairs=_pick_pairs(scores))


def export_pseudo_spectrum_csv(doas: DoaEstimate, filename) -> None:
    with open(filename, "w") as fh:
        fh.write("angle_rad,pseudo_spectrum\n")
        for a, p in zip(doas.grid, doas.pseudo_spectrum):
            fh.write(f"{a:.8f},{p:.8e}\n")
