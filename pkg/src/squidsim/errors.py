"""Exception hierarchy shared by all squidsim modules."""


class SquidsimError(Exception):
    """Base class for every error raised by the package."""


class InvalidDimension(SquidsimError, ValueError):
    pass


class ShapeError(SquidsimError, ValueError):
    pass


class NotHermitian(SquidsimError, ValueError):
    pass


class NumericalFailure(SquidsimError, RuntimeError):
    pass


class InvalidParams(SquidsimError, ValueError):
    pass


class DegeneratePotential(SquidsimError, ValueError):
    pass


class TruncationNotConverged(SquidsimError, RuntimeError):
    """Raised when the truncation loop runs out of rounds.

    Attributes
    ----------
    last_delta : float
        Largest eigenvalue change (GHz) seen in the final round.
    dims : tuple of int
        Truncation in use when the loop stopped.
    """

    def __init__(self, message, last_delta=float("nan"), dims=()):
        super().__init__(message)
        self.last_delta = last_delta
        self.dims = tuple(dims)


class LabelAmbiguous(SquidsimError, RuntimeError):
    """Raised when a dressed state has no bare state with enough weight.

    The partial labeling is attached as ``spectrum``.
    """

    def __init__(self, message, spectrum=None):
        super().__init__(message)
        self.spectrum = spectrum


class LabelMissing(SquidsimError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "label missing"


class DegenerateDetuning(SquidsimError, ValueError):
    pass


class QuartonRegime(SquidsimError, ValueError):
    pass


class DriveOnResonance(SquidsimError, ValueError):
    pass


class FitDiverged(SquidsimError, RuntimeError):
    """Raised when an optimizer cannot make progress.

    ``last`` holds the last accepted parameter dictionary, if any.
    """

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class InsufficientLeverage(SquidsimError, ValueError):
    pass


class ConfigError(SquidsimError, ValueError):
    """Malformed configuration or input file."""
