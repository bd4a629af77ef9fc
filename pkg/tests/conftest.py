import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pvsense.scenario import OffsetState, PathParam
from pvsense.waveform import OfdmConfig


@pytest.fixture
def small_cfg():
    """Fast numerology for unit tests: 32 subcarriers, 32 symbols, 8 rx."""
    return OfdmConfig(n_subcarriers=32, n_cyclic_prefix=4, n_symbols=32,
                      n_rx_antennas=8, n_tx_antennas=2)


@pytest.fixture
def paper_cfg():
    """The full evaluation numerology (defaults)."""
    return OfdmConfig()


def make_path(gain=1.0 + 0.0j, doa=np.pi / 3, aod=np.pi / 4, delay=3e-7,
              doppler=0.0, is_static=None):
    if is_static is None:
        is_static = doppler == 0.0
    return PathParam(gain=gain, doa=doa, aod=aod, delay=delay,
                     doppler=doppler, is_static=is_static)


def path_with_xi(cfg, xi, tau, gain=1.0 + 0.0j, doa=np.pi / 3, aod=np.pi / 4,
                 is_static=False):
    """Path whose normalized frequency is exactly ``xi`` at zero offsets."""
    return PathParam(gain=gain, doa=doa, aod=aod, delay=tau,
                     doppler=xi * cfg.subcarrier_spacing_hz,
                     is_static=is_static)


@pytest.fixture
def zero_offsets():
    return OffsetState(0.0, 0.0)
