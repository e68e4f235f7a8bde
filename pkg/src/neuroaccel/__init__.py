"""Numerical simulator of a MEMS neuroaccelerometer.

A Duffing beam is driven electrostatically through a gap that an inertial
proof mass modulates. The beam is operated as a single-node delay-feedback
reservoir computer; this package simulates the physics, the signal chain and
the readout training used on NARMA and parity benchmarks.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DivergenceError,
    GapCollapseError,
    InvalidGeometryError,
    NeuroaccelError,
    NumericOverflowError,
    SingularSystemError,
)

__all__ = [
    "ConfigError",
    "DivergenceError",
    "GapCollapseError",
    "InvalidGeometryError",
    "NeuroaccelError",
    "NumericOverflowError",
    "SingularSystemError",
    "__version__",
]
