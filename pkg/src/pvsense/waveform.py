"""MIMO-OFDM frame synthesis for the uplink sensing simulator.

The model works entirely at baseband.  Per OFDM symbol g and path l the
received sample matrix is a rank-1 term

    gain_l * e^{-j2pi xi_l (N_cp + g N_s)/N_sub} * a_rx(phi_l)^T
           * (a_tx(theta_l) w) * tau_l-row

pushed through the data modulation D(x_g) and a unitary IDFT, plus AWGN.
xi_l is the normalized Doppler-plus-CFO frequency of the path and the
tau_l row carries the per-subcarrier delay phases.  Cyclic-prefix samples
are never materialised; only the phase rotation they induce is applied.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scenario import SPEED_OF_LIGHT, OffsetState, PathParam

QPSK_POINTS = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0)


class DopplerAliasingError(ValueError):
    """A path's per-symbol phase advance exceeds half a cycle."""


@dataclass(frozen=True)
class OfdmConfig:
    """Numerology of the sensing frame.

    Defaults reproduce a 28 GHz mmWave uplink: 128 subcarriers at 100 kHz
    spacing, 16-sample CP (symbol length 11.25 us), 256 symbols per frame,
    64-element receive ULA at half-wavelength spacing.
    """

    carrier_hz: float = 28e9
    subcarrier_spacing_hz: float = 1e5
    n_subcarriers: int = 128
    n_cyclic_prefix: int = 16
    n_symbols: int = 256
    n_rx_antennas: int = 64
    n_tx_antennas: int = 2
    antenna_spacing: float = 0.5  # d / lambda

    def __post_init__(self):
        if self.n_cyclic_prefix >= self.n_subcarriers:
            raise ValueError("CP length must be shorter than the symbol body")
        if self.n_symbols < 2:
            raise ValueError("need at least two OFDM symbols")

    @property
    def sample_period_s(self) -> float:
        return 1.0 / (self.n_subcarriers * self.subcarrier_spacing_hz)

    @property
    def n_samples_per_symbol(self) -> int:
        return self.n_subcarriers + self.n_cyclic_prefix

    @property
    def symbol_duration_s(self) -> float:
        return self.n_samples_per_symbol * self.sample_period_s

    @property
    def cp_delay_limit_s(self) -> float:
        """Longest unambiguous path delay supported by the CP."""
        return self.n_cyclic_prefix * self.sample_period_s

    def normalized_cfo(self, cfo_hz) -> float:
        """Normalized frequency: f * N_sub * T_s = f / delta_f."""
        return cfo_hz / self.subcarrier_spacing_hz


@dataclass
class FrameStack:
    """Received frames and the data that modulated them.

    symbols: (G, M_R, N_sub) complex received sample matrices.
    data:    (G, N_sub) unit-modulus data symbols x_g.
    noise_var: per-element complex noise variance used at synthesis.
    """

    symbols: np.ndarray
    data: np.ndarray
    noise_var: float = 0.0

    def __post_init__(self):
        if self.symbols.ndim != 3 or self.symbols.shape[0] < 2:
            raise ValueError("symbols must be (G>=2, M_R, N_sub)")
        if self.data.shape != (self.symbols.shape[0], self.symbols.shape[2]):
            raise ValueError("data shape must be (G, N_sub)")


def steering_vector(n_antennas, angle, d_over_lambda=0.5) -> np.ndarray:
    """ULA steering vector, element m = exp(-j 2pi m (d/lambda) sin(angle))."""
    if n_antennas < 1:
        raise ValueError("n_antennas must be >= 1")
    m = np.arange(n_antennas)
    return np.exp(-2j * np.pi * m * d_over_lambda * np.sin(angle))


def default_precoder(cfg: OfdmConfig) -> np.ndarray:
    """All-ones transmit precoder, normalized to unit power."""
    return np.ones(cfg.n_tx_antennas) / np.sqrt(cfg.n_tx_antennas)


def path_terms(cfg: OfdmConfig, paths: Sequence[PathParam],
               offsets: OffsetState, precoder=None):
    """Per-path (xi, tau, amp) after folding in offsets and the precoder.

    xi_l = (f_D,l + f_o) / delta_f, tau_l = delay_l + tau_o, and amp_l is
    the scalar gain seen per receive-antenna element (steering phases
    excluded): gain_l * e^{-j2pi f_c tau_o} * a_tx(theta_l) w.
    """
    if len(paths) == 0:
        raise ValueError("paths must be non-empty")
    if precoder is None:
        precoder = default_precoder(cfg)
    precoder = np.asarray(precoder)
    if precoder.shape != (cfg.n_tx_antennas,):
        raise ValueError("precoder must have n_tx_antennas entries")

    xi = np.array([cfg.normalized_cfo(p.doppler + offsets.cfo_hz) for p in paths])
    tau = np.array([p.delay + offsets.to_s for p in paths])
    offset_phase = np.exp(-2j * np.pi * cfg.carrier_hz * offsets.to_s)
    amp = np.array([p.gain * offset_phase *
                    (steering_vector(cfg.n_tx_antennas, p.aod,
                                     cfg.antenna_spacing) @ precoder)
                    for p in paths])
    return xi, tau, amp


def noise_variance(cfg, paths, offsets, snr_db, precoder=None) -> float:
    """Complex noise variance putting the strongest path at ``snr_db``.

    SNR is defined per element of the compensated equivalent channel,
    where each path contributes |amp_l| to every entry of its rank-1
    component.  ``snr_db=None`` disables noise.
    """
    if snr_db is None:
        return 0.0
    _, _, amp = path_terms(cfg, paths, offsets, precoder)
    p_max = float(np.max(np.abs(amp) ** 2))
    return p_max * 10.0 ** (-snr_db / 10.0)


def equivalent_channel(cfg: OfdmConfig, paths, offsets, precoder=None,
                       antennas=None) -> np.ndarray:
    """Noise-free compensated equivalent channel, shape (G, M, N_sub).

    This is the rank-1-per-path model the estimators see after data
    compensation.  ``antennas`` restricts synthesis to a subset of
    receive elements (indices into the full array).
    """
    xi, tau, amp = path_terms(cfg, paths, offsets, precoder)
    p = cfg.n_samples_per_symbol / cfg.n_subcarriers
    worst = float(np.max(np.abs(xi))) * p
    if worst >= 0.5:
        raise DopplerAliasingError(
            f"per-symbol phase advance {worst:.3f} cycles aliases (>= 0.5)")

    g = np.arange(cfg.n_symbols)
    # amp folded into the per-symbol phase table
    phi = amp[None, :] * np.exp(-2j * np.pi * xi[None, :] *
                                (cfg.n_cyclic_prefix + g[:, None] *
                                 cfg.n_samples_per_symbol) / cfg.n_subcarriers)
    if antennas is None:
        antennas = np.arange(cfg.n_rx_antennas)
    antennas = np.asarray(antennas)
    a_rx = np.exp(-2j * np.pi * antennas[None, :] * cfg.antenna_spacing *
                  np.sin([p_.doa for p_ in paths])[:, None])
    u = np.arange(cfg.n_subcarriers)
    tau_rows = np.exp(-2j * np.pi * u[None, :] *
                      cfg.subcarrier_spacing_hz * tau[:, None])
    return np.einsum("gl,lm,lu->gmu", phi, a_rx, tau_rows, optimize=True)


def draw_qpsk(cfg: OfdmConfig, rng) -> np.ndarray:
    """Unit-modulus QPSK payload, shape (G, N_sub)."""
    idx = rng.integers(0, 4, size=(cfg.n_symbols, cfg.n_subcarriers))
    return QPSK_POINTS[idx]


def complex_noise(shape, variance, rng) -> np.ndarray:
    if variance == 0.0:
        return np.zeros(shape, dtype=complex)
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def synthesize_frames(cfg: OfdmConfig, paths, offsets, snr_db,
                      precoder=None, rng=None) -> FrameStack:
    """Synthesize the received antenna-domain sample matrices Y_g.

    Y_g = (equivalent channel) D(x_g) F + Z_g with F the unitary IDFT,
    x_g unit-modulus QPSK, and Z_g white complex Gaussian noise whose
    variance puts the strongest path at ``snr_db`` after compensation.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    eq = equivalent_channel(cfg, paths, offsets, precoder)
    x = draw_qpsk(cfg, rng)
    time_sig = np.fft.ifft(eq * x[:, None, :], axis=-1, norm="ortho")
    var = noise_variance(cfg, paths, offsets, snr_db, precoder)
    y = time_sig + complex_noise(time_sig.shape, var, rng)
    return FrameStack(symbols=y, data=x, noise_var=var)


# ---------------------------------------------------------------------------
# optional frame dump: 32-byte header + interleaved re/im float64
# ---------------------------------------------------------------------------

FRAME_MAGIC = b"PVSFRAME"


def write_frames(filename, stack: FrameStack) -> None:
    g, m_r, n_sub = stack.symbols.shape
    header = FRAME_MAGIC + np.array([m_r, n_sub, g], dtype="<u4").tobytes()
    header = header.ljust(32, b"\x00")
    with open(filename, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(stack.symbols, dtype=np.complex128).tobytes())
        fh.write(np.ascontiguousarray(stack.data, dtype=np.complex128).tobytes())


def read_frames(filename) -> FrameStack:
    with open(filename, "rb") as fh:
        header = fh.read(32)
        if header[:8] != FRAME_MAGIC:
            raise ValueError("not a frame dump (bad magic)")
        m_r, n_sub, g = np.frombuffer(header[8:20], dtype="<u4")
        body = fh.read()
    n_sym = int(g) * int(m_r) * int(n_sub)
    symbols = np.frombuffer(body[:16 * n_sym], dtype=np.complex128)
    data = np.frombuffer(body[16 * n_sym:], dtype=np.complex128)
    return FrameStack(symbols=symbols.reshape(int(g), int(m_r), int(n_sub)).copy(),
                      data=data.reshape(int(g), int(n_sub)).copy())


def cfo_equivalent_speed(cfg: OfdmConfig, cfo_hz) -> float:
    """Speed whose Doppler shift equals ``cfo_hz``: v = c f / (2 f_c)."""
    return SPEED_OF_LIGHT * cfo_hz / (2.0 * cfg.carrier_hz)


def speed_equivalent_cfo(cfg: OfdmConfig, speed) -> float:
    """CFO inducing the same shift as a target at ``speed``: 2 v f_c / c."""
    return 2.0 * speed * cfg.carrier_hz / SPEED_OF_LIGHT
