"""pvsense: uplink passive sensing for asynchronous MIMO-OFDM networks.

Simulation of cluttered multi-target echoes with oscillator offsets, and
the estimation stack that undoes them: MTI/RMA clutter suppression,
real-part 2D-DFT range-velocity estimation, MUSIC + spatial-filter DOA
association, fingerprint-spectrum CFO/TO synchronization, and the
matching CRLB / MSE analyses.
"""

from .analysis import (CrlbResult, PathDecomposition, SyncMseBound, crlb,
                       decompose_paths, suppression_ratio, sync_mse_bound)
from .doa import (AssociationResult, DoaEstimate, associate_delay_domain,
                  associate_doppler_domain, associate_full, estimate_doa)
from .harness import (ExperimentResult, ExperimentSpec, PipelineFlags,
                      TargetEstimate, list_presets, preset, run_experiment,
                      run_pipeline)
from .preprocess import (CompensatedStack, MtiStack, compensate, mti_cancel,
                         rma_cancel, select_antenna, stack_antenna_row,
                         synthesize_compensated)
from .rv_estimator import (DelayDopplerSpectrum, PeakSet, find_peaks,
                           map_to_physical, spectrum)
from .scenario import (OffsetState, PathParam, SceneConfig, draw_offsets,
                       generate_scene, load_scene, save_scene)
from .sync import (Fingerprint, SyncEstimate, apply_sync, capture_fingerprint,
                   cmcc_estimate, load_fingerprint, save_fingerprint,
                   scmcc_estimate)
from .waveform import (FrameStack, OfdmConfig, read_frames, steering_vector,
                       synthesize_frames, write_frames)

__version__ = "0.1.0"
