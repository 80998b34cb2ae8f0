"""Exception hierarchy shared across the pipeline."""


class PanosplatError(Exception):
    """Base class for all library errors."""


class DomainError(PanosplatError, ValueError):
    """An input value lies outside the mathematical domain of an operation."""


class ContractError(PanosplatError):
    """A caller or adapter violated an interface contract (shape, pose, dims)."""


class ConfigurationError(PanosplatError):
    """A configuration value is invalid or inconsistent."""


class AdapterError(PanosplatError):
    """An external model adapter failed (transport or response)."""


class CalibrationError(PanosplatError):
    """Metric calibration produced an unusable disparity mapping."""


class PipelineError(PanosplatError):
    """A multi-stage pipeline failed; message names the failing stage."""
