"""Exception hierarchy."""


class NeuroaccelError(Exception):
    """Base class for all package errors."""


class InvalidGeometryError(NeuroaccelError, ValueError):
    """A geometric or material parameter is outside its physical range."""


class GapCollapseError(NeuroaccelError):
    """The electrostatic gap closed (pull-in)."""


class NumericOverflowError(NeuroaccelError):
    """A state variable left the physically meaningful range."""


class SingularSystemError(NeuroaccelError):
    """Unregularized least-squares system is rank deficient."""


class DivergenceError(NeuroaccelError):
    """A NARMA recurrence diverged."""


class ConfigError(NeuroaccelError, ValueError):
    """Experiment configuration is malformed or inconsistent."""
