"""Exception types raised across the toolkit."""


class ScsQkdError(Exception):
    """Base class for toolkit errors."""


class DomainError(ScsQkdError, ValueError):
    """An argument lies outside the domain of a function."""


class DegenerateMapping(ScsQkdError, ValueError):
    """Vacuum-projection bounds map to an infinite equivalent intensity."""


class AsymmetryError(ScsQkdError, ValueError):
    """The symmetric channel model was given unequal intensities."""


class ZeroWindows(ScsQkdError, ValueError):
    """No effective Z windows, so the phase-flip error rate is undefined."""


class NoPositiveRate(ScsQkdError):
    """Every evaluated parameter point gave a zero coherent-attack rate."""


class EmptyMatrix(ScsQkdError, ValueError):
    """A row of the two-phase-scan counting matrix has no counts."""


class ConfigError(ScsQkdError, ValueError):
    """A configuration file failed to parse or validate."""

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = list(violations or [])
