"""Exception hierarchy for automap.

Every error carries the CLI exit code it maps to, so the command-line layer can
translate failures without inspecting messages.
"""


class AutomapError(Exception):
    """Base class for all automap errors."""

    exit_code: int = 2


class DimensionError(AutomapError, ValueError):
    """Shape or length mismatch between arrays, layouts or operators."""

    exit_code = 2


class ConfigurationError(AutomapError, ValueError):
    """Invalid parameter value or combination."""

    exit_code = 2


class DomainError(AutomapError, ValueError):
    """Input outside the domain an operator is defined on."""

    exit_code = 2


class UsageError(AutomapError, ValueError):
    """A function was called with an unsupported pattern of arguments."""

    exit_code = 2


class DegenerateSignalError(AutomapError, ValueError):
    """Signal power is zero where a finite SNR was requested."""

    exit_code = 2


class ConstructionError(AutomapError, RuntimeError):
    """Sampling geometry could not be built to the requested target."""

    exit_code = 2


class IngestionError(AutomapError, OSError):
    """An input file could not be read or does not satisfy size requirements."""

    exit_code = 3


class NumericError(AutomapError, ArithmeticError):
    """A non-finite value appeared in a computation.

    Attributes:
        layer: Name of the layer or quantity that went non-finite, if known.
        epoch: Training epoch (1-based) when raised from the training loop.
        batch: Batch index within the epoch when raised from the training loop.
    """

    exit_code = 4

    def __init__(
        self,
        message: str,
        layer: str | None = None,
        epoch: int | None = None,
        batch: int | None = None,
    ):
        super().__init__(message)
        self.layer = layer
        self.epoch = epoch
        self.batch = batch


class ArtifactMismatchError(AutomapError, ValueError):
    """A stored artifact does not match what it is being used with."""

    exit_code = 5
