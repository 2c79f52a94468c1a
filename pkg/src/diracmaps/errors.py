"""Shared exception types.

Every failure the CLI maps to an exit code is a subclass of DiracmapsError,
so the command layer can translate without inspecting message strings.
"""


class DiracmapsError(Exception):
    """Base class for all package errors."""


class ConfigError(DiracmapsError):
    """Invalid scenario/config input: unknown keys, bad values, parse failures."""


class ChartDomainError(DiracmapsError):
    """A queried point left the chart's valid domain (or the metric degenerated)."""


class TorsionSkewnessError(ConfigError):
    """Raw torsion coefficients violate skewness in the last two slots."""


class ModeCompatibilityError(DiracmapsError):
    """Requested mode is incompatible with the chart's torsion.

    Carries ``check_name`` so the verify command can report the named check.
    """

    def __init__(self, message: str, check_name: str = "real-valuedness-precondition"):
        super().__init__(message)
        self.check_name = check_name


class SizeOverflowError(DiracmapsError):
    """Problem too large for the requested (dense) backend."""


class NonConvergenceError(DiracmapsError):
    """Iteration budget exhausted before reaching the requested tolerance.

    ``trajectory`` holds the per-iteration records accumulated so far so the
    caller can still write a partial trajectory file.
    """

    def __init__(self, message: str, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory if trajectory is not None else []


class AmbiguousKernelError(DiracmapsError):
    """Smallest singular value sits inside the kernel-detection guard band."""

    def __init__(self, message: str, singular_values=None):
        super().__init__(message)
        self.singular_values = singular_values
