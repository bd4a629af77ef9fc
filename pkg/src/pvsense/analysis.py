"""Estimation-theoretic analysis: range-velocity CRLB under clutter
cancellation, the theoretical MSE of the fingerprint synchronizer, and
the clutter suppression ratio metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .preprocess import CompensatedStack, MtiStack
from .scenario import OffsetState, SPEED_OF_LIGHT
from .sync import _circular_scores
from .waveform import (OfdmConfig, equivalent_channel, noise_variance,
                       path_terms, steering_vector)


class SingularFisherError(RuntimeError):
    """Fisher information matrix is not invertible."""


class CovarianceError(RuntimeError):
    """Correlation covariance is not positive definite."""


@dataclass
class CrlbResult:
    """CRLB of the paired (frequency, delay) parameters of every path.

    ``j_matrix`` is the 2L x 2L bound matrix ordered
    [xi_1 .. xi_L, tau_1 .. tau_L]; ``per_path_bounds`` converts the
    diagonal to physical units, one (velocity variance (m/s)^2,
    range variance m^2) pair per path.
    """

    j_matrix: np.ndarray
    per_path_bounds: list[tuple[float, float]]


@dataclass
class SyncMseBound:
    """Windowed lag-error distribution and resulting range MSE (m^2)."""

    chi: np.ndarray
    lags: np.ndarray
    mse: float


def beta_for_antenna(cfg: OfdmConfig, paths, offsets, antenna,
                     precoder=None) -> np.ndarray:
    """Per-path complex amplitude seen by one receive element."""
    _, _, amp = path_terms(cfg, paths, offsets, precoder)
    phases = np.array([steering_vector(cfg.n_rx_antennas, p.doa,
                                       cfg.antenna_spacing)[antenna]
                       for p in paths])
    return amp * phases


def _model_vectors(xi, g_d, rows, p_ratio, q_ratio):
    """Canceller response xi-vector and its frequency derivative.

    rows are 0-based symbol indices; g_d = 0 selects the plain
    (no-canceller) exponential model.
    """
    a = rows * p_ratio + q_ratio
    lead = np.exp(-2j * np.pi * xi * a)
    if g_d == 0:
        return lead, -2j * np.pi * a * lead
    trail = np.exp(-2j * np.pi * xi * (a - g_d * p_ratio))
    vec = lead - trail
    dvec = -2j * np.pi * (a * lead - (a - g_d * p_ratio) * trail)
    return vec, dvec


def crlb(paths, beta, cfg: OfdmConfig, g_d, noise_var,
         offsets: OffsetState | None = None,
         symbol_indices=None) -> CrlbResult:
    """CRLB matrix for joint estimation of all paths' (xi_l, tau_l).

    The Fisher information treats the complex amplitudes ``beta`` as
    known and the post-cancellation noise as white with power
    ``noise_var`` (pass twice the raw noise power for MTI output; the
    differencing doubles it).  ``symbol_indices`` overrides the default
    row set range(g_d, G), which is how a clutter-free reference over a
    shifted or shortened window is evaluated.
    """
    if offsets is None:
        offsets = OffsetState()
    n_paths = len(paths)
    if n_paths < 1:
        raise ValueError("need at least one path")
    beta = np.asarray(beta, dtype=complex)
    if beta.shape != (n_paths,):
        raise ValueError("beta must hold one amplitude per path")
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")

    p_ratio = cfg.n_samples_per_symbol / cfg.n_subcarriers
    q_ratio = cfg.n_cyclic_prefix / cfg.n_subcarriers
    if symbol_indices is None:
        symbol_indices = np.arange(g_d, cfg.n_symbols)
    rows = np.asarray(symbol_indices, dtype=float)

    xi = np.array([cfg.normalized_cfo(p.doppler + offsets.cfo_hz) for p in paths])
    tau = np.array([p.delay + offsets.to_s for p in paths])

    xivec = np.empty((n_paths, rows.size), dtype=complex)
    dxivec = np.empty_like(xivec)
    for l in range(n_paths):
        xivec[l], dxivec[l] = _model_vectors(xi[l], g_d, rows, p_ratio, q_ratio)

    n = np.arange(cfg.n_subcarriers)
    tau_rows = np.exp(-2j * np.pi * n[None, :] * cfg.subcarrier_spacing_hz * tau[:, None])
    dtau_rows = -2j * np.pi * n[None, :] * cfg.subcarrier_spacing_hz * tau_rows

    # H_n has one (rows)-long column per parameter:
    # column l     : beta_l tau_l[n] dxivec_l
    # column L + l : beta_l dtau_l[n] xivec_l
    # FIM = Re( sum_n H_n^H H_n ) / noise_var; each entry factors into a
    # symbol-axis Gram term times a subcarrier-axis Gram term.
    a_d = beta[:, None] * dxivec
    a_x = beta[:, None] * xivec
    d_mat = a_d.conj() @ a_d.T
    m_mat = a_d.conj() @ a_x.T
    x_mat = a_x.conj() @ a_x.T
    t_tt = tau_rows.conj() @ tau_rows.T
    t_td = tau_rows.conj() @ dtau_rows.T
    t_dd = dtau_rows.conj() @ dtau_rows.T
    fim = np.empty((2 * n_paths, 2 * n_paths))
    fim[:n_paths, :n_paths] = np.real(d_mat * t_tt)
    fim[:n_paths, n_paths:] = np.real(m_mat * t_td)
    fim[n_paths:, :n_paths] = fim[:n_paths, n_paths:].T
    fim[n_paths:, n_paths:] = np.real(x_mat * t_dd)
    fim /= noise_var

    try:
        j = np.linalg.inv(fim)
    except np.linalg.LinAlgError as exc:
        raise SingularFisherError("Fisher matrix is singular "
                                  "(duplicate or degenerate paths?)") from exc
    if not np.all(np.isfinite(j)) or np.linalg.cond(fim) > 1e14:
        raise SingularFisherError("Fisher matrix is numerically singular")

    v_scale = (SPEED_OF_LIGHT * cfg.subcarrier_spacing_hz / (2.0 * cfg.carrier_hz)) ** 2
    r_scale = SPEED_OF_LIGHT ** 2
    bounds = [(float(j[l, l] * v_scale),
               float(j[n_paths + l, n_paths + l] * r_scale))
              for l in range(n_paths)]
    return CrlbResult(j_matrix=j, per_path_bounds=bounds)


def _noise_free_band(cfg, paths, offsets, k_doppler, k_range, antenna, precoder):
    """Nonnegative-Doppler half of the noise-free padded spectrum."""
    gamma = equivalent_channel(cfg, paths, offsets, precoder,
                               antennas=[antenna])[:, 0, :]
    n_rows = k_doppler * cfg.n_symbols
    stage = np.fft.fft(np.real(gamma), n=n_rows, axis=0)[: n_rows // 2]
    return np.fft.fft(stage, n=k_range * cfg.n_subcarriers, axis=1)


def sync_mse_bound(paths, offsets_delta: OffsetState, cfg: OfdmConfig,
                   snr_db, window_radius=8, k_doppler=5, k_range=25,
                   antenna=0, precoder=None) -> SyncMseBound:
    """Theoretical range MSE of the joint fingerprint synchronizer.

    Models the lag correlation around the true lag q0 as a Gaussian
    vector (exact noise-free means, white in-phase correlation noise) and
    evaluates each candidate lag's win probability chi_q inside
    ``window_radius`` bins of q0 by a quasi-Monte-Carlo orthant integral.
    The returned MSE is sum_q chi_q * (c * (q t_r - d_tau))^2.
    """
    if window_radius < 1:
        raise ValueError("window_radius must be >= 1")
    calib = OffsetState(0.0, 0.0)
    band1 = _noise_free_band(cfg, paths, calib, k_doppler, k_range,
                             antenna, precoder)
    band2 = _noise_free_band(cfg, paths, offsets_delta, k_doppler, k_range,
                             antenna, precoder)
    q_b = band1.shape[1] // 2
    s1_power = np.sum(np.abs(band1[:, :q_b]) ** 2, axis=1)
    s2_power = np.sum(np.abs(band2[:, :q_b]) ** 2, axis=1)
    k_c = int(np.argmax(s1_power))
    k_up = int(np.argmax(s2_power))
    s1 = band1[k_c, :q_b]
    s2 = band2[k_up, :q_b]

    rho_s = _circular_scores(s2[None, :], s1)[0]

    sigma0 = noise_variance(cfg, paths, offsets_delta, snr_db, precoder)
    sigma_fp = cfg.n_symbols * cfg.n_subcarriers * sigma0 / 2.0
    # in-phase noise of the correlation magnitude around its peak
    var = 0.5 * (sigma_fp * (np.sum(np.abs(s1) ** 2) + np.sum(np.abs(s2) ** 2))
                 + q_b * sigma_fp ** 2)
    if not np.isfinite(var) or var < 0:
        raise CovarianceError("correlation noise variance is not positive")

    t_r = cfg.sample_period_s / k_range
    q0 = int(np.round(offsets_delta.to_s / t_r))
    lags = np.arange(q0 - window_radius, q0 + window_radius + 1)
    means = rho_s[np.mod(lags, q_b)]

    chi = _window_win_probabilities(means, var)
    errors = SPEED_OF_LIGHT * (lags * t_r - offsets_delta.to_s)
    mse = float(np.sum(chi * errors ** 2))
    return SyncMseBound(chi=chi, lags=lags, mse=mse)


def _window_win_probabilities(means, var) -> np.ndarray:
    """P(score_q is the window maximum) for iid-noise Gaussian scores.

    The orthant probability over the difference vector (covariance
    var * (I + 11^T)) collapses to a 1-D integral by conditioning on the
    candidate's own noise:
        chi_q = int phi(z) prod_{i != q} Phi(z + (m_q - m_i)/sigma) dz.
    Exact and deterministic, unlike a sampled orthant integral.
    """
    if var == 0.0:
        chi = np.zeros(means.size)
        chi[np.argmax(means)] = 1.0
        return chi
    sigma = math.sqrt(var)
    z = np.linspace(-8.0, 8.0, 2001)
    phi = np.exp(-0.5 * z ** 2) / math.sqrt(2.0 * math.pi)
    chi = np.empty(means.size)
    for q in range(means.size):
        shifts = (means[q] - np.delete(means, q)) / sigma
        prod = np.prod(stats.norm.cdf(z[:, None] + shifts[None, :]), axis=1)
        chi[q] = np.trapezoid(phi * prod, z)
    return chi


# ---------------------------------------------------------------------------
# clutter suppression ratio
# ---------------------------------------------------------------------------

@dataclass
class PathDecomposition:
    """Noise-free clutter/moving split of the compensated stack."""

    clutter: np.ndarray
    moving: np.ndarray


@dataclass
class SuppressionResult:
    """Per-symbol clutter-to-signal ratios before/after suppression.

    ``ratio[k] = rho_b[k] / rho_a[k]`` evaluated at matching input
    symbols; larger is better.  Division by a perfectly suppressed
    denominator saturates to +inf.
    """

    rho_b: np.ndarray
    rho_a: np.ndarray
    ratio: np.ndarray
    symbols: np.ndarray


def decompose_paths(cfg, paths, offsets, precoder=None,
                    antennas=None) -> PathDecomposition:
    clutter = [p for p in paths if p.is_static]
    moving = [p for p in paths if not p.is_static]
    n_ant = len(antennas) if antennas is not None else cfg.n_rx_antennas
    zeros_shape = (cfg.n_symbols, n_ant, cfg.n_subcarriers)
    c_part = (equivalent_channel(cfg, clutter, offsets, precoder, antennas)
              if clutter else np.zeros(zeros_shape, dtype=complex))
    m_part = (equivalent_channel(cfg, moving, offsets, precoder, antennas)
              if moving else np.zeros(zeros_shape, dtype=complex))
    return PathDecomposition(clutter=c_part, moving=m_part)


def _apply_same_canceller(component, after: MtiStack) -> np.ndarray:
    if after.g_d >= 1:
        return component[after.g_d:] - component[:-after.g_d]
    if after.forgetting is None:
        raise ValueError("RMA-shaped stack must record its forgetting factor")
    alpha = after.forgetting
    out = np.empty_like(component)
    avg = np.zeros_like(component[0])
    for g in range(component.shape[0]):
        avg = (1.0 - alpha) * avg + alpha * component[g]
        out[g] = component[g] - avg
    return out


def _power_per_symbol(component) -> np.ndarray:
    return np.sum(np.abs(component) ** 2, axis=(1, 2))


def suppression_ratio(before: CompensatedStack, after: MtiStack,
                      truth: PathDecomposition) -> SuppressionResult:
    """rho_b / rho_a per symbol, from the ground-truth decomposition.

    rho is the clutter-to-moving power ratio; ``before`` fixes the
    expected shapes and ``after`` identifies which canceller (and delay
    or forgetting factor) to replay on the decomposed components.
    """
    if truth.clutter.shape != before.hat_y.shape:
        raise ValueError("decomposition does not match the compensated stack")
    with np.errstate(divide="ignore", invalid="ignore"):
        rho_b = _power_per_symbol(truth.clutter) / _power_per_symbol(truth.moving)
    c_after = _apply_same_canceller(truth.clutter, after)
    m_after = _apply_same_canceller(truth.moving, after)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho_a = _power_per_symbol(c_after) / _power_per_symbol(m_after)

    offset = after.g_d if after.g_d >= 1 else 0
    symbols = np.arange(offset, offset + rho_a.size)
    rho_b_aligned = rho_b[symbols]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = rho_b_aligned / rho_a
    ratio = np.where(np.isfinite(ratio), ratio, np.inf)
    return SuppressionResult(rho_b=rho_b_aligned, rho_a=rho_a, ratio=ratio,
                             symbols=symbols)
