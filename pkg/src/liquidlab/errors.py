"""Exception taxonomy shared across the package."""


class LiquidLabError(Exception):
    """Base class for all package-specific errors."""


class StructuralError(LiquidLabError):
    """Shape or index mismatch between arrays, wirings, or signals."""


class ConfigError(LiquidLabError):
    """Invalid or infeasible configuration (wiring fanouts, bad JSON, ...)."""


class DegenerateReversalError(LiquidLabError):
    """A formula divides by a leak reversal potential that is too close to 0."""


class UnsupportedSolverError(LiquidLabError):
    """Unknown integration method requested."""


class DivergenceError(LiquidLabError):
    """A state or loss became non-finite."""

    def __init__(self, message, timestep=None, epoch=None):
        super().__init__(message)
        self.timestep = timestep
        self.epoch = epoch


class CheckpointError(LiquidLabError):
    """Base class for checkpoint container problems."""


class CheckpointFormatError(CheckpointError):
    """Bad magic bytes or a malformed section."""


class CheckpointVersionError(CheckpointError):
    """Container version not supported by this build."""


class CheckpointTruncatedError(CheckpointError):
    """File ended before the declared payload was read."""
