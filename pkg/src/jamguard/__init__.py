"""jamguard: PSS jamming-detection workbench.

Synthesizes 5G-NR PSS/SSB baseband captures with optional jammer
injection, synchronizes and images them, booleanizes the spectrograms,
trains a convolutional Tsetlin machine detector, explains its decisions
per pixel, and projects its FPGA footprint.
"""

__version__ = "0.1.0"

from .binarize import BinarizeMethod, Booleanizer, BoolImage
from .ctm import ConvTsetlinClassifier, CtmConfig, CtmModel
from .signal import CaptureRecord, IQBuffer, JammerSpec, SynthConfig

__all__ = [
    "BinarizeMethod", "Booleanizer", "BoolImage",
    "ConvTsetlinClassifier", "CtmConfig", "CtmModel",
    "CaptureRecord", "IQBuffer", "JammerSpec", "SynthConfig",
    "__version__",
]
