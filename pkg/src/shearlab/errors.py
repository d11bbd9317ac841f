"""Exception types shared across the package.

Exit-code mapping used by the command line front end:

* ``ConfigError``        -> exit 1 (bad input / unusable configuration)
* ``HyperbolicityBreach``-> exit 2 (strain window left during a run)
* ``DivergenceError``    -> exit 3 (iterate blew up / became non-finite)

Everything else derives from :class:`ShearlabError` so library users can
catch the package's failures with a single ``except`` clause.
"""

from __future__ import annotations


class ShearlabError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(ShearlabError):
    """Unusable input: malformed config file, bad atoms, degenerate grid."""


class HypothesisError(ShearlabError):
    """A structural hypothesis on the kernel or damping function fails.

    Examples: non-negative slope of the damping function at the origin,
    or a generated atom family whose defining series diverges.
    """


class AccuracyError(ShearlabError):
    """A quadrature or series evaluation cannot meet the requested tolerance.

    Parameters
    ----------
    achieved : float
        The error estimate that was actually reached.
    """

    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved


class IllPosedError(ShearlabError):
    """The deconvolution problem has no usable inverse on the requested grid.

    Raised when the Fourier transform of the kernel drops below the
    positivity floor that the inversion construction relies on.
    """


class HyperbolicityBreach(ShearlabError):
    """The accumulated strain left the certified window of the damping law.

    Attributes carry the first offending sample so callers can report it.
    """

    def __init__(self, time: float, location: float, value: float, threshold: float):
        super().__init__(
            f"strain window breached at t={time:.6g}, x={location:.6g}: "
            f"|strain|={value:.6g} > {threshold:.6g}"
        )
        self.time = time
        self.location = location
        self.value = value
        self.threshold = threshold


class DivergenceError(ShearlabError):
    """The time iteration produced non-finite or explosively growing values."""

    def __init__(self, message: str, last_valid_time: float | None = None):
        super().__init__(message)
        self.last_valid_time = last_valid_time
