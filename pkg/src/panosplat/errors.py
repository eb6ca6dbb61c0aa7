"""Exception types shared across the package."""


class PanoSplatError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(PanoSplatError):
    """Non-finite or out-of-domain numeric input."""


class GaussianAtCameraError(PanoSplatError):
    """Gaussian center is within eps_near of the camera center."""


class BehindTangentPlaneError(PanoSplatError):
    """Point lies behind the tangent plane (mu' . t <= eps_front)."""


class InvalidBoundaryError(PanoSplatError):
    """Layout boundary violates floor/ceiling latitude constraints."""


class ManifestError(PanoSplatError):
    """Scene manifest failed to parse or validate."""


class ImageFormatError(PanoSplatError):
    """Image file has the wrong shape, depth or encoding."""


class CheckpointError(PanoSplatError):
    """Checkpoint file is corrupt or has an incompatible version."""


class ConfigError(PanoSplatError):
    """Invalid training or CLI configuration."""


class TrainingDivergedError(PanoSplatError):
    """Training loss became non-finite."""
