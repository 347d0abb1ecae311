"""lipwave: audiovisual self-supervised speech representation learning on a
numpy autodiff core.

A raw-audio 1D-ResNet encoder is pretrained by generating talking-mouth video
and reconstructing audio attributes (MFCC, log-mel, waveform), then evaluated
by word classification with few labels, on synthetic audiovisual data.
"""

__version__ = "0.1.0"

from .errors import DataError, NumericError, ShapeError
from .tensor import Tensor

__all__ = ["Tensor", "ShapeError", "DataError", "NumericError", "__version__"]
