"""Exception types shared across the package.

Contract violations (bad shapes, out-of-range timesteps, invalid arguments)
raise plain ValueError. The classes below mark conditions the CLI maps to
dedicated exit codes: configuration problems exit 1, runtime numeric aborts
exit 2.
"""


class MetaDiffError(Exception):
    """Base class for package-specific errors."""


class ConfigError(MetaDiffError):
    """Invalid run configuration (unknown key, bad type, failed validation)."""


class CheckpointError(MetaDiffError):
    """Unreadable, corrupt, or version-incompatible checkpoint."""


class NonFiniteError(MetaDiffError):
    """A loss or gradient came out NaN/inf; the offending step was aborted."""


class DivergenceError(NonFiniteError):
    """Denoising produced weights beyond the divergence guard."""

    def __init__(self, message: str, timestep: int):
        super().__init__(message)
        self.timestep = timestep


class EvalError(MetaDiffError):
    """Evaluation could not produce a valid report (strict-mode exclusions)."""
