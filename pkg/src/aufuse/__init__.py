"""Audio-visual facial action unit detection, built from scratch on numpy.

Subsystems: a reverse-mode autodiff tensor engine, a log-Mel audio
front-end, a ConvNeXt-style visual encoder, global/local view generation,
multi-scale cross-modal fusion, a causal TCN classifier head, and a
six-fold cross-validation harness with a CLI.
"""

from aufuse.tensor import Tensor, no_grad

__version__ = "0.1.0"

__all__ = ["Tensor", "no_grad", "__version__"]
