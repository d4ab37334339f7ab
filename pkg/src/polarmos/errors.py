"""Exception types raised by the polarmos pipeline."""


class PolarMosError(Exception):
    """Base class for all polarmos-specific errors."""


class ScanFormatError(PolarMosError, ValueError):
    """Binary scan file is malformed (length not a whole number of records)."""


class LabelFormatError(PolarMosError, ValueError):
    """Binary label file is malformed."""


class PoseFormatError(PolarMosError, ValueError):
    """Pose or calibration text could not be parsed."""


class PoseValidationError(PolarMosError, ValueError):
    """A parsed transform is not a valid rigid transform."""


class ConfigError(PolarMosError, ValueError):
    """Configuration value violates an invariant."""


class PairingError(PolarMosError, ValueError):
    """Paired files disagree (e.g. label count != point count)."""


class InsufficientFramesError(PolarMosError, RuntimeError):
    """An operation needs more buffered frames than are available."""


class FrameOrderError(PolarMosError, ValueError):
    """Frames were pushed with non-increasing frame indices."""


class DivergenceError(PolarMosError, RuntimeError):
    """Training produced a non-finite loss."""
