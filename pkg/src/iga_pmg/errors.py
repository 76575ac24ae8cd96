"""Exception hierarchy shared by all modules."""


class IgaPmgError(Exception):
    """Base class for errors raised by :mod:`iga_pmg`."""


class DomainError(IgaPmgError, ValueError):
    """A parameter value lies outside the knot range."""


class GeometryError(IgaPmgError):
    """The geometry map is not invertible at some evaluation point."""


class AssemblyError(IgaPmgError):
    """Incompatible spaces, non-conforming interfaces or bad inputs."""


class LumpingError(IgaPmgError):
    """Row-sum lumping produced a nonpositive diagonal entry."""


class SmootherError(IgaPmgError):
    """A smoother cannot be applied (e.g. zero diagonal)."""


class FactorizationError(IgaPmgError):
    """Incomplete factorization hit a zero pivot."""

    def __init__(self, message, row=None, level=None):
        super().__init__(message)
        self.row = row
        self.level = level


class AnalysisError(IgaPmgError):
    """Spectral analysis could not be carried out."""


class ConfigError(IgaPmgError, ValueError):
    """Invalid run configuration; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key
