"""Panoramic 3D Gaussian splatting with room-layout priors.

Optimizes an explicit Gaussian scene from equirectangular images, renders
panoramas directly via tangent-plane splatting, and serves interactive
indoor roaming over HTTP.
"""

__version__ = "0.1.0"

from .geometry import PanoramaCamera
from .scene import GaussianScene

__all__ = ["PanoramaCamera", "GaussianScene", "__version__"]
