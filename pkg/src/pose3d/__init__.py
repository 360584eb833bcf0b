"""pose3d: a from-scratch spatiotemporal 3D CNN engine for video-based
3D human pose regression, with a verified training and inference pipeline."""

__version__ = "0.1.0"

from .tensor import Tensor, tensor_new, elementwise, reduce_mean, xavier_init
from .rng import RngState

__all__ = [
    "Tensor",
    "tensor_new",
    "elementwise",
    "reduce_mean",
    "xavier_init",
    "RngState",
    "__version__",
]
