"""Few-shot glyph generation with structure-aware latent diffusion.

Subpackages: ``glyphdata`` (synthetic corpus), ``backbone`` (conditional
denoiser), ``metrics`` (evaluation), ``pipeline`` (orchestration).  Top-level
modules cover the noise schedule, the image codec, the background-noise
refiner, checkpoint I/O, and the CLI.
"""

from .config import TrainConfig
from .errors import ConfigurationError, NumericsError, StateError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "TrainConfig",
    "ConfigurationError",
    "NumericsError",
    "StateError",
    "ValidationError",
    "__version__",
]
