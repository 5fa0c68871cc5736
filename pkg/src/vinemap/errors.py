"""Exception taxonomy shared by all vinemap modules."""


class VinemapError(Exception):
    """Base class for all library errors."""


class ConfigurationError(VinemapError):
    """Invalid parameter or incompatible input configuration."""


class ChannelNotPresentError(ConfigurationError):
    """Requested spectral channel does not exist in the raster layout."""


class IntegrityError(VinemapError):
    """Data that should round-trip or fit together does not (e.g. missing tile)."""


class ContractError(VinemapError):
    """Caller violated an operation precondition (dimension mismatch, empty input)."""


class FormatError(VinemapError):
    """File content does not match the expected on-disk format."""


class PointAtInfinityError(VinemapError):
    """Homogeneous projection produced a vanishing denominator."""


class NotInvertibleError(VinemapError):
    """Matrix is singular or nearly singular."""


class EstimationFailedError(VinemapError):
    """RANSAC could not assemble a sufficient consensus set."""


class RegistrationFailedError(VinemapError):
    """All threshold schedule entries were exhausted without a viable homography."""


class InsufficientTextureError(RegistrationFailedError):
    """Fewer matches than required at every threshold; images lack usable texture."""


class TrainingDataError(VinemapError):
    """Training set is unusable (e.g. a class has no samples)."""


class SegmentationBackendError(VinemapError):
    """A segmentation backend failed on a tile."""
