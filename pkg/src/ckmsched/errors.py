"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid scenario or experiment configuration."""


class GeometryError(ValueError):
    """Scenario construction failed (coverage, grid granularity, ...)."""


class OutOfClusterError(ValueError):
    """Position does not fall inside any coverage grid."""


class ZeroNormError(ValueError):
    """Correlation or normalization requested for a zero-norm vector."""


class ScheduleError(ValueError):
    """Scheduler preconditions violated (pool too small, bad sizes)."""


class EnumerationGuardError(RuntimeError):
    """Exhaustive search would exceed the configured combination budget."""
