import numpy as np
import pytest

from conftest import make_path, path_with_xi
from pvsense.preprocess import mti_cancel, stack_antenna_row, synthesize_compensated
from pvsense.rv_estimator import (PeakDetectionError, export_spectrum_csv,
                                  find_peaks, map_to_physical,
                                  range_resolution, spectrum,
                                  velocity_resolution)
from pvsense.scenario import SPEED_OF_LIGHT, OffsetState
from pvsense.waveform import OfdmConfig
import reference


def bin_of(cfg, xi, tau, k_doppler, k_range, g_eff):
    """Padded-grid (row, col) of a path at normalized frequency xi, delay tau."""
    row = xi * cfg.n_samples_per_symbol / cfg.n_subcarriers * k_doppler * g_eff
    col = tau / cfg.sample_period_s * k_range
    return row, col


def test_zero_in_zero_out():
    spec = spectrum(np.zeros((16, 8), dtype=complex), 2, 3)
    assert np.all(spec.grid == 0)
    assert spec.grid.shape == (32, 24)


def test_on_bin_path_two_conjugate_impulses_and_peak_magnitude(small_cfg):
    """Exact-bin cisoid: package grid equals the loop-built 2D-DFT, and the
    two mirror lobes carry |alpha| * G * N / 2 each."""
    g_eff, n_sub = 16, 8
    row_bin, col_bin = 3, 2
    alpha = 0.8 * np.exp(0.6j)
    g = np.arange(g_eff)[:, None]
    u = np.arange(n_sub)[None, :]
    gamma = alpha * np.exp(-2j * np.pi * (row_bin * g / g_eff +
                                          col_bin * u / n_sub))
    spec = spectrum(gamma, 1, 1)
    want = reference.direct_dft2(np.real(gamma), g_eff, n_sub)
    assert np.allclose(spec.grid, want, atol=1e-9)

    mags = np.abs(spec.grid)
    peak = abs(alpha) * g_eff * n_sub / 2.0
    assert mags[row_bin, col_bin] == pytest.approx(peak, rel=1e-12)
    assert mags[g_eff - row_bin, n_sub - col_bin] == pytest.approx(peak, rel=1e-12)
    mags[row_bin, col_bin] = mags[g_eff - row_bin, n_sub - col_bin] = 0.0
    assert np.max(mags) < 1e-9 * peak


def test_off_bin_peak_near_dtft_maximum(small_cfg, zero_offsets):
    path = path_with_xi(small_cfg, 0.137, 3.3e-7)
    k_d, k_r = 4, 6
    stack = synthesize_compensated(small_cfg, [path], zero_offsets, None,
                                   np.random.default_rng(0))
    gamma = stack_antenna_row(mti_cancel(stack, 1), 0)
    spec = spectrum(gamma, k_d, k_r, cfg=small_cfg)
    peaks = find_peaks(spec, n_expected=1)

    g_eff = gamma.shape[0]
    row_f, col_f = bin_of(small_cfg, 0.137, 3.3e-7, k_d, k_r, g_eff)
    assert abs(peaks.rows[0] - row_f) <= 1.0
    assert abs(peaks.cols[0] - col_f) <= 1.0

    # dense DTFT oracle around the expected frequencies
    data = np.real(gamma)
    f1 = row_f / (k_d * g_eff)
    f2 = col_f / (k_r * small_cfg.n_subcarriers)
    got1, got2 = reference.dense_dtft_peak(
        data, (f1 - 0.02, f1 + 0.02), (f2 - 0.02, f2 + 0.02))
    assert abs(peaks.rows[0] / (k_d * g_eff) - got1) <= 1.0 / (k_d * g_eff)
    assert abs(peaks.cols[0] / (k_r * small_cfg.n_subcarriers) - got2) <= \
        1.0 / (k_r * small_cfg.n_subcarriers)


def test_centrosymmetry_of_magnitude(small_cfg, zero_offsets):
    paths = [path_with_xi(small_cfg, 0.11, 2e-7),
             path_with_xi(small_cfg, 0.23, 5e-7, gain=0.4j)]
    stack = synthesize_compensated(small_cfg, paths, zero_offsets, None,
                                   np.random.default_rng(0))
    gamma = stack_antenna_row(mti_cancel(stack, 1), 1)
    grid = spectrum(gamma, 2, 2).grid
    mags = np.abs(grid)
    rows, cols = mags.shape
    for k in range(1, rows):
        for n in range(1, cols, 7):
            assert mags[k, n] == pytest.approx(mags[rows - k, cols - n],
                                               rel=1e-9, abs=1e-12)


def test_parseval_rectangular_no_padding(small_cfg, zero_offsets):
    rng = np.random.default_rng(3)
    gamma = rng.standard_normal((24, 16)) + 1j * rng.standard_normal((24, 16))
    spec = spectrum(gamma, 1, 1)
    lhs = np.sum(np.abs(spec.grid) ** 2)
    rhs = 24 * 16 * np.sum(np.real(gamma) ** 2)
    assert lhs == pytest.approx(rhs, rel=1e-6)


def test_doubling_k_range_halves_delay_bin(small_cfg):
    gamma = np.ones((8, 8), dtype=complex)
    a = spectrum(gamma, 1, 2, cfg=small_cfg)
    b = spectrum(gamma, 1, 4, cfg=small_cfg)
    assert a.t_r == pytest.approx(2.0 * b.t_r, rel=1e-12)


def test_find_peaks_exact_on_bin():
    g_eff, n_sub = 32, 16
    g = np.arange(g_eff)[:, None]
    u = np.arange(n_sub)[None, :]
    gamma = np.exp(-2j * np.pi * (5 * g / g_eff + 3 * u / n_sub))
    spec = spectrum(gamma, 1, 1)
    peaks = find_peaks(spec, n_expected=1)
    assert (peaks.rows[0], peaks.cols[0]) == (5, 3)


def test_two_separated_peaks_ordered_and_match_argsort_oracle(small_cfg, zero_offsets):
    paths = [path_with_xi(small_cfg, 0.10, 2e-7, gain=1.0),
             path_with_xi(small_cfg, 0.30, 6e-7, gain=0.5)]
    stack = synthesize_compensated(small_cfg, paths, zero_offsets, None,
                                   np.random.default_rng(0))
    gamma = stack_antenna_row(mti_cancel(stack, 1), 0)
    spec = spectrum(gamma, 2, 2, cfg=small_cfg)
    peaks = find_peaks(spec, n_expected=2)
    assert peaks.magnitudes[0] >= peaks.magnitudes[1]

    # oracle: exhaustive argsort of the quarter plane, greedy guard
    quarter = np.abs(spec.grid[: spec.grid.shape[0] // 2 + 1,
                               : spec.grid.shape[1] // 2 + 1])
    order = np.argsort(quarter.ravel())[::-1]
    got = []
    for flat in order:
        r, c = np.unravel_index(flat, quarter.shape)
        if any(abs(r - tr) <= spec.k_doppler and abs(c - tc) <= spec.k_range
               for tr, tc in got):
            continue
        got.append((r, c))
        if len(got) == 2:
            break
    assert set(zip(peaks.rows, peaks.cols)) == set(got)


def test_unresolvable_pair_merges_into_single_peak(small_cfg, zero_offsets):
    # two paths separated by well under one mainlobe in both axes
    paths = [path_with_xi(small_cfg, 0.150, 2.50e-6),
             path_with_xi(small_cfg, 0.155, 2.53e-6)]
    stack = synthesize_compensated(small_cfg, paths, zero_offsets, None,
                                   np.random.default_rng(0))
    gamma = stack_antenna_row(mti_cancel(stack, 1), 0)
    k_d, k_r = 4, 4
    spec = spectrum(gamma, k_d, k_r, cfg=small_cfg)
    peaks = find_peaks(spec, n_expected=1)
    lo, cl = bin_of(small_cfg, 0.150, 2.50e-6, k_d, k_r, gamma.shape[0])
    hi, ch = bin_of(small_cfg, 0.155, 2.53e-6, k_d, k_r, gamma.shape[0])
    assert lo - 1 <= peaks.rows[0] <= hi + 1
    assert cl - 1 <= peaks.cols[0] <= ch + 1

    # dense DTFT oracle: a single maximum lives between the two components
    g_eff = gamma.shape[0]
    f1, f2 = reference.dense_dtft_peak(
        np.real(gamma),
        ((lo - 1) / (k_d * g_eff), (hi + 1) / (k_d * g_eff)),
        ((cl - 1) / (k_r * small_cfg.n_subcarriers),
         (ch + 1) / (k_r * small_cfg.n_subcarriers)))
    assert lo / (k_d * g_eff) - 1e-3 <= f1 <= hi / (k_d * g_eff) + 1e-3

    # asking for a second peak only surfaces something far weaker
    two = find_peaks(spec, n_expected=2)
    assert two.magnitudes[1] < 0.5 * two.magnitudes[0]


def test_blind_mode_detects_true_peaks_on_white_floor(small_cfg, zero_offsets):
    # blind thresholding assumes a flat noise floor: run it on the
    # un-cancelled stack with a hamming taper to keep sidelobes down
    paths = [path_with_xi(small_cfg, 0.10, 1.5e-6),
             path_with_xi(small_cfg, 0.30, 4.5e-6, gain=0.5)]
    for seed in range(5):
        stack = synthesize_compensated(small_cfg, paths, zero_offsets, 10.0,
                                       np.random.default_rng(seed))
        spec = spectrum(stack.hat_y[:, 0, :], 4, 4, "hamming", cfg=small_cfg)
        peaks = find_peaks(spec)
        assert peaks.rows.size == 2


def test_peak_error_on_empty_grid():
    spec = spectrum(np.zeros((8, 8), dtype=complex), 2, 2)
    with pytest.raises(PeakDetectionError):
        find_peaks(spec, n_expected=1)


def test_resolution_identities_and_origin_mapping():
    cfg = OfdmConfig()
    assert range_resolution(cfg) == pytest.approx(23.4375, rel=1e-9)
    v_u = velocity_resolution(cfg, 256)
    assert v_u == pytest.approx(
        SPEED_OF_LIGHT / (cfg.carrier_hz * cfg.symbol_duration_s * 256),
        rel=1e-12)
    assert v_u == pytest.approx(3.7202380952380953, rel=1e-9)

    from pvsense.rv_estimator import PeakSet
    peaks = PeakSet(rows=np.array([0]), cols=np.array([0]),
                    magnitudes=np.array([1.0]), k_doppler=1, k_range=1,
                    n_rows_data=256)
    assert map_to_physical(peaks, cfg) == [(0.0, 0.0)]


def test_single_path_mapped_error_below_half_bin(small_cfg, zero_offsets):
    path = path_with_xi(small_cfg, 0.177, 2.5e-6)
    stack = synthesize_compensated(small_cfg, [path], zero_offsets, None,
                                   np.random.default_rng(0))
    gamma = stack_antenna_row(mti_cancel(stack, 1), 0)
    k_d, k_r = 8, 8
    spec = spectrum(gamma, k_d, k_r, cfg=small_cfg)
    peaks = find_peaks(spec, n_expected=1)
    (r_est, v_est), = map_to_physical(peaks, small_cfg)

    r_true = SPEED_OF_LIGHT * 2.5e-6
    v_true = (SPEED_OF_LIGHT * 0.177 * small_cfg.subcarrier_spacing_hz /
              small_cfg.carrier_hz)
    r_bin = range_resolution(small_cfg) / k_r
    v_bin = velocity_resolution(small_cfg, gamma.shape[0]) / k_d
    assert abs(r_est - r_true) <= r_bin / 2 + 1e-9
    assert abs(v_est - v_true) <= v_bin / 2 + 1e-9


def test_half_rows_spectrum_matches_full(small_cfg, zero_offsets):
    path = path_with_xi(small_cfg, 0.2, 3e-7)
    stack = synthesize_compensated(small_cfg, [path], zero_offsets, None,
                                   np.random.default_rng(0))
    gamma = stack_antenna_row(mti_cancel(stack, 1), 0)
    full = spectrum(gamma, 3, 3, cfg=small_cfg)
    half = spectrum(gamma, 3, 3, cfg=small_cfg, half_rows=True)
    keep = full.grid.shape[0] // 2 + 1
    assert half.is_half and not full.is_half
    assert np.allclose(half.grid, full.grid[:keep])
    pa = find_peaks(full, 1)
    pb = find_peaks(half, 1)
    assert (pa.rows[0], pa.cols[0]) == (pb.rows[0], pb.cols[0])
    assert half.n_rows_data == full.n_rows_data


def test_hamming_window_applied(small_cfg):
    gamma = np.ones((16, 8), dtype=complex)
    rect = spectrum(gamma, 1, 1, "rectangular")
    ham = spectrum(gamma, 1, 1, "hamming")
    assert rect.grid[0, 0] == pytest.approx(16 * 8)
    assert abs(ham.grid[0, 0]) == pytest.approx(
        np.sum(np.outer(np.hamming(16), np.hamming(8))), rel=1e-12)


def test_spectrum_csv_export(tmp_path):
    spec = spectrum(np.ones((4, 4), dtype=complex), 1, 1)
    fname = tmp_path / "spec.csv"
    export_spectrum_csv(spec, fname)
    lines = fname.read_text().strip().splitlines()
    assert lines[0] == "row,col,magnitude"
    assert len(lines) == 1 + 3 * 3
