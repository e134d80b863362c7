"""Emotional-EEG classification from upscaled connectivity matrices.

Pipeline: band-filtered EEG -> per-segment Pearson connectivity tensors ->
nearest/bilinear upscaling -> a small CNN, plus the leak-free segmentation
protocol and activation / Grad-CAM diagnostics.
"""

from .connectivity import (ConnectivityTensor, ElectrodeOrdering, build_connectivity, pearson,
                           read_tensor, reorder, write_tensor)
from .dataset import (SegmentIndex, SplitPlan, TrialInfo, enumerate_segments, make_folds,
                      make_split, materialize)
from .resample import UpscaleConfig, upscale, upscale_bilinear, upscale_nearest
from .signal_io import (DEFAULT_BANDS, BandDefinition, BandStack, RecordingSession, SyntheticSpec,
                        bandpass, decompose_bands, generate_synthetic, load_recording,
                        write_recording)

__version__ = "0.1.0"

__all__ = [
    "BandDefinition", "BandStack", "ConnectivityTensor", "DEFAULT_BANDS", "ElectrodeOrdering",
    "RecordingSession", "SegmentIndex", "SplitPlan", "SyntheticSpec", "TrialInfo", "UpscaleConfig",
    "bandpass", "build_connectivity", "decompose_bands", "enumerate_segments", "generate_synthetic",
    "load_recording", "make_folds", "make_split", "materialize", "pearson", "read_tensor", "reorder",
    "upscale", "upscale_bilinear", "upscale_nearest", "write_recording", "write_tensor",
]
