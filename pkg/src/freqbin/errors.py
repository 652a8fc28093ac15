"""Exception hierarchy shared by the simulator and the estimators."""


class FreqBinError(Exception):
    """Base class for all package errors."""


class InvalidStateError(FreqBinError, ValueError):
    """A two-photon state could not be built (e.g. all amplitudes zero)."""


class LatticeRangeError(FreqBinError, IndexError):
    """A frequency index lies outside the lattice or the wrong half-band."""


class DomainError(FreqBinError, ValueError):
    """Argument outside the supported numerical envelope."""


class NotFoundError(FreqBinError, ValueError):
    """A root or crossing that was asked for does not exist."""


class IncompleteDataError(FreqBinError, ValueError):
    """Measurement records do not cover the required cells."""


class ConvergenceError(FreqBinError, RuntimeError):
    """The optimizer did not converge; ``best`` carries the best-so-far result."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ValidationError(FreqBinError, ValueError):
    """Configuration failed validation; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.violations))


class FixtureParseError(FreqBinError, ValueError):
    """A fixture file could not be parsed. Carries 1-based line and column."""

    def __init__(self, message, path=None, line=None, column=None):
        self.path = path
        self.line = line
        self.column = column
        loc = f"{path}:" if path is not None else ""
        if line is not None:
            loc += f"{line}:"
            if column is not None:
                loc += f"{column}:"
        super().__init__(f"{loc} {message}" if loc else message)
