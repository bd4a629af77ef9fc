"""Data compensation and clutter suppression.

Compensation strips the data modulation and IDFT from each received
symbol, exposing the equivalent channel.  Clutter (echoes from static
objects) is then removed either by a single-delay canceller (MTI) that
differences symbols ``g_d`` apart, or by subtracting a recursive moving
average (RMA baseline).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .waveform import FrameStack, OfdmConfig, complex_noise, equivalent_channel, noise_variance


class CompensationError(ValueError):
    """Data symbols too small in magnitude to divide out safely."""


@dataclass
class CompensatedStack:
    """Equivalent-channel matrices Y_hat_g, shape (G, M_R, N_sub)."""

    hat_y: np.ndarray
    noise_var: float = 0.0

    def __post_init__(self):
        if self.hat_y.ndim != 3:
            raise ValueError("hat_y must be (G, M_R, N_sub)")


@dataclass
class MtiStack:
    """Clutter-suppressed stack.

    ``g_d`` is the canceller delay in symbols; the stack holds G - g_d
    matrices (symbols without a predecessor are dropped).  RMA output
    uses the sentinel g_d = 0 (no symbols dropped) and records the
    forgetting factor it was produced with.
    """

    breve_y: np.ndarray
    g_d: int
    forgetting: float | None = None

    def __post_init__(self):
        if self.breve_y.ndim != 3:
            raise ValueError("breve_y must be (G_eff, M_R, N_sub)")
        if self.g_d < 0:
            raise ValueError("g_d must be >= 0")


def compensate(frames: FrameStack, magnitude_floor=1e-9) -> CompensatedStack:
    """Divide out the data and IDFT:  Y_hat_g = Y_g F^-1 D^-1(x_g)."""
    if np.min(np.abs(frames.data)) < magnitude_floor:
        raise CompensationError("data symbol magnitude below safe floor")
    hat = np.fft.fft(frames.symbols, axis=-1, norm="ortho") / frames.data[:, None, :]
    return CompensatedStack(hat_y=hat, noise_var=frames.noise_var)


def synthesize_compensated(cfg: OfdmConfig, paths, offsets, snr_db,
                           rng=None, precoder=None, antennas=None) -> CompensatedStack:
    """Equivalent-channel stack synthesized directly, bypassing the
    modulate/demodulate round trip.

    Statistically identical to ``compensate(synthesize_frames(...))``:
    the IDFT is unitary and the data unit-modulus, so compensation maps
    white noise to white noise of the same variance.  Used by the Monte
    Carlo presets where only the compensated domain matters.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    eq = equivalent_channel(cfg, paths, offsets, precoder, antennas)
    var = noise_variance(cfg, paths, offsets, snr_db, precoder)
    return CompensatedStack(hat_y=eq + complex_noise(eq.shape, var, rng),
                            noise_var=var)


def derotate_offsets(stack: CompensatedStack, d_xi, d_tau,
                     cfg: OfdmConfig) -> CompensatedStack:
    """Remove an estimated offset drift from the compensated stack.

    Inverts the per-symbol CFO rotation and per-subcarrier delay phases
    of a (d_xi, d_tau) offset so the clutter canceller meets static
    echoes at (near) zero frequency again.  Must run before clutter
    suppression; an uncorrected CFO moves clutter off the canceller
    null.
    """
    g = np.arange(stack.hat_y.shape[0])
    sym = np.exp(2j * np.pi * d_xi *
                 (cfg.n_cyclic_prefix + g * cfg.n_samples_per_symbol) /
                 cfg.n_subcarriers)
    u = np.arange(stack.hat_y.shape[2])
    sub = np.exp(2j * np.pi * u * cfg.subcarrier_spacing_hz * d_tau)
    return CompensatedStack(
        hat_y=stack.hat_y * sym[:, None, None] * sub[None, None, :],
        noise_var=stack.noise_var)


def mti_cancel(stack: CompensatedStack, g_d=1) -> MtiStack:
    """Single-delay canceller: breve_Y_g = Y_hat_g - Y_hat_{g-g_d}.

    Static paths with zero total frequency offset cancel exactly; a path
    at normalized frequency xi survives with gain
    |1 - e^{j 2pi xi g_d N_s/N_sub}|.
    """
    g = stack.hat_y.shape[0]
    if not 1 <= g_d < g:
        raise ValueError("need 1 <= g_d < G")
    breve = stack.hat_y[g_d:] - stack.hat_y[:-g_d]
    return MtiStack(breve_y=breve, g_d=g_d)


def rma_cancel(stack: CompensatedStack, forgetting=0.05) -> MtiStack:
    """Recursive moving-average clutter estimate subtracted per symbol.

    avg_g = (1 - alpha) avg_{g-1} + alpha Y_hat_g, output Y_hat_g - avg_g.
    Static components decay geometrically at rate (1 - alpha).
    """
    if not 0.0 < forgetting <= 1.0:
        raise ValueError("forgetting factor must be in (0, 1]")
    out = np.empty_like(stack.hat_y)
    avg = np.zeros_like(stack.hat_y[0])
    for g in range(stack.hat_y.shape[0]):
        avg = (1.0 - forgetting) * avg + forgetting * stack.hat_y[g]
        out[g] = stack.hat_y[g] - avg
    return MtiStack(breve_y=out, g_d=0, forgetting=forgetting)


def select_antenna(mti: MtiStack) -> int:
    """Antenna whose rows carry the most energy across the stack."""
    power = np.sum(np.abs(mti.breve_y) ** 2, axis=(0, 2))
    return int(np.argmax(power))


def stack_antenna_row(mti: MtiStack, m) -> np.ndarray:
    """Gamma_m: row g is the m-th antenna's row of breve_Y_g."""
    return mti.breve_y[:, m, :]
