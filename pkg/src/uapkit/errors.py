"""Exception hierarchy shared across the toolkit.

Every error carries a process exit code so the CLI can map failures to
distinct, machine-readable statuses.
"""


class UapkitError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(UapkitError):
    """Invalid configuration document or parameter value."""

    exit_code = 2


class ResolutionError(UapkitError):
    """Image / perturbation spatial shape mismatch."""

    exit_code = 3


class UnusablePoodError(UapkitError):
    """The crafting dataset has no usable samples."""

    exit_code = 4


class DivergenceError(UapkitError):
    """Non-finite loss encountered during optimization."""

    exit_code = 5

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class PerturbationFormatError(UapkitError):
    """Corrupt or truncated perturbation file."""

    exit_code = 6


class EmptyEvalError(UapkitError):
    """Evaluation requested on an empty dataset."""

    exit_code = 7


class EncoderBackendError(UapkitError):
    """Encoder backend failed or is unavailable."""

    exit_code = 8


class MalformedTemplateError(ConfigError):
    """Text template without exactly one concept placeholder."""

    exit_code = 2


class EmptyConceptError(UapkitError):
    """Image-concept embedding requested with no samples."""

    exit_code = 9


class ZeroDirectionError(UapkitError):
    """A feature-direction row degenerated to the zero vector."""

    exit_code = 10
