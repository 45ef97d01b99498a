"""Exception hierarchy shared across the package.

The CLI maps each class to a distinct exit code, so raising the right
type matters for scripted use.
"""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PipelineError):
    """Invalid or inconsistent configuration."""


class DataError(PipelineError):
    """Malformed input data (CSV grammar, duplicate visits, bad labels)."""


class DivergenceError(PipelineError):
    """Non-finite values encountered during forward pass or training."""
