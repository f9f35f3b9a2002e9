"""Exception types shared across the package.

The CLI maps each family onto a process exit code.
"""


class ConfigError(ValueError):
    """Invalid configuration or parameter combination."""


class DataError(ValueError):
    """Input data that cannot be processed (bad WAV, empty band, ...)."""


class DegenerateSceneError(DataError):
    """Scene whose sources carry no power but a finite SNR was requested."""


class SolverError(RuntimeError):
    """The sparse solver diverged."""
