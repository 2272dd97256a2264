"""Exception hierarchy shared by all modules."""


class TubeSpectraError(Exception):
    """Base class for every error raised by the package."""


class ParameterError(TubeSpectraError, ValueError):
    """An argument is outside its admissible range."""


class GeometryError(TubeSpectraError, ValueError):
    """A domain description is inconsistent or cannot be meshed."""


class OverlapError(GeometryError):
    """Attached tubes would overlap each other."""


class TruncationError(GeometryError):
    """Truncation radius is below the certified tube-splitting radius."""


class AssemblyError(TubeSpectraError, ValueError):
    """A mesh contains degenerate elements or inconsistent markers."""


class InapplicableError(TubeSpectraError, ValueError):
    """A formula is used outside its hypotheses (e.g. eigenvalue above threshold)."""


class ConfigError(TubeSpectraError, ValueError):
    """A configuration value is missing or invalid; ``key`` names the offending field."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class ConvergenceError(TubeSpectraError, RuntimeError):
    """An iterative solver did not reach its tolerance.

    Parameters
    ----------
    message : str
        Human readable diagnostics.
    best : object, optional
        Best iterate found before giving up.
    history : list of float, optional
        Residual history.
    """

    def __init__(self, message: str, best=None, history=None):
        super().__init__(message)
        self.best = best
        self.history = list(history) if history is not None else []
