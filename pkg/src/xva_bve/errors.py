"""Exception hierarchy shared across the engine.

Each class carries the process exit code the command-line front end maps it to.
"""


class XvaError(Exception):
    exit_code = 1


class DomainError(XvaError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ModelError(XvaError, ValueError):
    """Model inputs that violate a structural requirement (monotone hazards, etc.)."""


class ConfigError(XvaError, ValueError):
    """Invalid configuration. ``errors`` lists ``(key_path, message)`` pairs."""

    exit_code = 2

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [("", errors)]
        self.errors = list(errors)
        lines = [f"{key}: {msg}" if key else msg for key, msg in self.errors]
        super().__init__("; ".join(lines))


class ConvergenceError(XvaError, RuntimeError):
    """A fixed-point or Picard iteration failed to converge.

    ``trace`` holds the per-iteration residuals or value iterates.
    """

    exit_code = 3

    def __init__(self, message, trace=()):
        self.trace = list(trace)
        super().__init__(f"{message} (trace: {self.trace})")


class OutputError(XvaError, OSError):
    """Reading or writing an artifact failed; the message names the path."""

    exit_code = 4
