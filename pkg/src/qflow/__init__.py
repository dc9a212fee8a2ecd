"""qflow: local energy-momentum flow in nonrelativistic quantum mechanics.

The package evolves wavefunctions, splits them into the real amplitude and
action fields, computes the local momentum/energy fields, the quantum
potential, weak values and Bohm flow lines, and carries a noncommutative
phase-space engine (quasiprobability distribution, star products, bracket
evolution) whose projections recover the configuration-space equations.
"""

from .grid import (
    Axis,
    ComplexField,
    FieldError,
    Grid,
    GridError,
    RealField,
    UnitSystem,
    WaveFunction,
    gradient,
    integrate,
    laplacian,
)

__all__ = [
    "Axis",
    "ComplexField",
    "FieldError",
    "Grid",
    "GridError",
    "RealField",
    "UnitSystem",
    "WaveFunction",
    "gradient",
    "integrate",
    "laplacian",
]

__version__ = "0.1.0"
