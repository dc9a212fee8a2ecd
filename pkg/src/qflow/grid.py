"""Grids, fields, units, quadrature and differentiation.

Everything downstream works on uniform lattices in one or two dimensions.
Four boundary modes are supported:

``periodic``
    Points ``x_min + j*dx`` with the duplicate endpoint excluded.
    Derivatives are spectral (FFT); exact for resolved wavenumbers.
``dirichlet-sine``
    Same lattice, but fields are taken to vanish at ``x_min`` and
    ``x_max``.  Derivatives go through the odd periodic extension onto a
    doubled lattice, so sine modes ``sin(k pi (x - x_min)/L)`` are
    differentiated exactly.
``radial``
    Half-line ``r = dx .. r_max`` (origin excluded).  Fourth-order
    centered finite differences with one-sided closures; trapezoid
    quadrature, optionally weighted by ``4 pi r^2``.
``line-fd``
    Open line with the same finite-difference stencils as ``radial``.
    Used for states with isolated kinks (e.g. the exponential bound
    state of a narrow attractive well), where global spectral
    differentiation would ring.

All field objects are immutable after construction; operations return new
arrays, so instances are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np
from scipy import fft as sfft

PERIODIC = "periodic"
DIRICHLET = "dirichlet-sine"
RADIAL = "radial"
LINE_FD = "line-fd"

_BOUNDARIES = (PERIODIC, DIRICHLET, RADIAL, LINE_FD)


class GridError(ValueError):
    """Invalid grid construction or mismatched grid operands."""


class FieldError(ValueError):
    """Field data violating its contract (shape, finiteness)."""


@dataclass(frozen=True)
class UnitSystem:
    """Physical constants of a scenario: hbar, particle masses, couplings.

    ``mass`` is the first (or only) particle mass; a second particle can
    carry its own mass.  Named couplings hold model constants such as the
    Coulomb strength ``e2`` or the contact-well strength ``alpha``.
    """

    hbar: float = 1.0
    mass: float = 1.0
    mass2: float | None = None
    couplings: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.hbar > 0):
            raise ValueError(f"hbar must be positive, got {self.hbar}")
        if not (self.mass > 0):
            raise ValueError(f"mass must be positive, got {self.mass}")
        if self.mass2 is not None and not (self.mass2 > 0):
            raise ValueError(f"mass2 must be positive, got {self.mass2}")

    def mass_of(self, axis: int) -> float:
        if axis == 0 or self.mass2 is None:
            return self.mass
        return self.mass2

    def coupling(self, name: str, default: float | None = None) -> float:
        if name in self.couplings:
            return self.couplings[name]
        if default is None:
            raise KeyError(f"unit system does not define coupling {name!r}")
        return default


@dataclass(frozen=True)
class Axis:
    """One uniform lattice direction."""

    n: int
    x_min: float
    x_max: float

    def __post_init__(self):
        if self.n < 64 or (self.n & (self.n - 1)) != 0:
            raise GridError(f"n_points must be a power of two >= 64, got {self.n}")
        if not (self.x_max > self.x_min):
            raise GridError(f"empty axis extent [{self.x_min}, {self.x_max}]")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    def points(self, offset: float = 0.0) -> np.ndarray:
        return self.x_min + (np.arange(self.n) + offset) * self.dx


@dataclass(frozen=True)
class Grid:
    """Uniform 1D or 2D lattice plus a boundary mode."""

    axes: tuple[Axis, ...]
    boundary: str = PERIODIC
    radial_weight: bool = False  # integrate with 4*pi*r^2 on radial grids

    def __post_init__(self):
        if self.boundary not in _BOUNDARIES:
            raise GridError(f"unknown boundary mode {self.boundary!r}")
        if len(self.axes) not in (1, 2):
            raise GridError("only 1D and 2D grids are supported")
        if self.boundary == RADIAL:
            if len(self.axes) != 1:
                raise GridError("radial grids are one-dimensional")
            ax = self.axes[0]
            if abs(ax.x_min - ax.dx) > 1e-12 * ax.dx:
                raise GridError("radial grids must start at x_min = dx")
        if self.radial_weight and self.boundary != RADIAL:
            raise GridError("radial_weight only applies to radial grids")

    # ---- constructors -------------------------------------------------

    @classmethod
    def periodic(cls, n: int, x_min: float, x_max: float) -> "Grid":
        return cls((Axis(n, x_min, x_max),), PERIODIC)

    @classmethod
    def dirichlet(cls, n: int, x_min: float, x_max: float) -> "Grid":
        return cls((Axis(n, x_min, x_max),), DIRICHLET)

    @classmethod
    def radial(cls, n: int, r_max: float, weight: bool = False) -> "Grid":
        dx = r_max / n
        return cls((Axis(n, dx, r_max + dx),), RADIAL, radial_weight=weight)

    @classmethod
    def line(cls, n: int, x_min: float, x_max: float) -> "Grid":
        return cls((Axis(n, x_min, x_max),), LINE_FD)

    @classmethod
    def periodic_2d(cls, n1, x1_min, x1_max, n2, x2_min, x2_max) -> "Grid":
        return cls((Axis(n1, x1_min, x1_max), Axis(n2, x2_min, x2_max)), PERIODIC)

    # ---- basic geometry -----------------------------------------------

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ax.n for ax in self.axes)

    @property
    def dx(self) -> float:
        return self.axes[0].dx

    @property
    def volume_element(self) -> float:
        out = 1.0
        for ax in self.axes:
            out *= ax.dx
        return out

    def coordinates(self, axis: int = 0) -> np.ndarray:
        """Coordinate array of one axis, broadcast to the grid shape."""
        pts = self.axes[axis].points()
        if self.ndim == 1:
            return pts
        if axis == 0:
            return pts[:, None] * np.ones((1, self.axes[1].n))
        return np.ones((self.axes[0].n, 1)) * pts[None, :]

    def meshgrid(self) -> tuple[np.ndarray, ...]:
        return tuple(self.coordinates(i) for i in range(self.ndim))

    def same_lattice(self, other: "Grid") -> bool:
        return self.axes == other.axes and self.boundary == other.boundary

    def require_same(self, other: "Grid") -> None:
        if not self.same_lattice(other):
            raise GridError("operands live on different grids")

    def spec(self) -> dict:
        """JSON-ready description (used by the CSV/JSON exporters)."""
        return {
            "boundary": self.boundary,
            "radial_weight": self.radial_weight,
            "axes": [
                {"n": ax.n, "x_min": ax.x_min, "x_max": ax.x_max, "dx": ax.dx}
                for ax in self.axes
            ],
        }


def _check_values(values: np.ndarray, grid: Grid, dtype) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    if arr.shape != grid.shape:
        raise FieldError(f"field shape {arr.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(arr)):
        raise FieldError("field contains non-finite values")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RealField:
    values: np.ndarray
    grid: Grid
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.values, self.grid, float))

    def with_values(self, values: np.ndarray) -> "RealField":
        return RealField(values, self.grid, self.time)


@dataclass(frozen=True)
class ComplexField:
    values: np.ndarray
    grid: Grid
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.values, self.grid, complex))

    def with_values(self, values: np.ndarray) -> "ComplexField":
        return ComplexField(values, self.grid, self.time)


@dataclass(frozen=True)
class WaveFunction:
    """Complex field psi with its unit system attached."""

    values: np.ndarray
    grid: Grid
    units: UnitSystem
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.values, self.grid, complex))

    @property
    def rho(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def norm(self) -> float:
        return integrate_values(self.rho, self.grid)

    def normalized(self) -> "WaveFunction":
        return WaveFunction(self.values / np.sqrt(self.norm()), self.grid, self.units, self.time)

    def at_time(self, t: float, phase: complex = 1.0) -> "WaveFunction":
        return WaveFunction(self.values * phase, self.grid, self.units, t)


Field = RealField | ComplexField | WaveFunction


# ---------------------------------------------------------------------------
# differentiation kernels
# ---------------------------------------------------------------------------

def _wavenumbers(n: int, dx: float) -> np.ndarray:
    return 2.0 * np.pi * sfft.fftfreq(n, d=dx)


def _spectral_derivative(values: np.ndarray, axis: int, dx: float, order: int) -> np.ndarray:
    n = values.shape[axis]
    k = _wavenumbers(n, dx)
    mult = (1j * k) ** order
    if order % 2 == 0:
        mult = mult.real  # avoid imaginary round-off leaking into even orders
    shape = [1] * values.ndim
    shape[axis] = n
    out = sfft.ifft(sfft.fft(values, axis=axis) * mult.reshape(shape), axis=axis)
    if not np.iscomplexobj(values):
        return out.real
    return out


def _odd_extension(values: np.ndarray, axis: int) -> np.ndarray:
    """Odd periodic extension onto a doubled lattice along ``axis``."""
    v = np.moveaxis(values, axis, 0)
    n = v.shape[0]
    ext = np.concatenate([v, -v[0:1], -v[:0:-1]], axis=0)
    assert ext.shape[0] == 2 * n
    return np.moveaxis(ext, 0, axis)


def _sine_derivative(values: np.ndarray, axis: int, dx: float, order: int) -> np.ndarray:
    ext = _odd_extension(values, axis)
    der = _spectral_derivative(ext, axis, dx, order)
    sl = [slice(None)] * values.ndim
    sl[axis] = slice(0, values.shape[axis])
    return der[tuple(sl)]


# 4th-order finite differences: interior centered stencils plus one-sided
# closures at the first/last two points.
_D1_INTERIOR = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2_INTERIOR = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_D1_EDGE = {
    0: np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0,
    1: np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0,
}
_D2_EDGE = {
    0: np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0]) / 12.0,
    1: np.array([10.0, -15.0, -4.0, 14.0, -6.0, 1.0]) / 12.0,
}


def _fd_derivative(values: np.ndarray, axis: int, dx: float, order: int) -> np.ndarray:
    v = np.moveaxis(values, axis, 0)
    n = v.shape[0]
    if n < 6:
        raise GridError("finite-difference stencils need at least 6 points")
    out = np.empty_like(v)
    stencil = _D1_INTERIOR if order == 1 else _D2_INTERIOR
    edge = _D1_EDGE if order == 1 else _D2_EDGE
    centered = sum(stencil[m] * v[m : n - 4 + m] for m in range(5))
    out[2 : n - 2] = centered
    for row in (0, 1):
        coeffs = edge[row]
        out[row] = sum(c * v[m] for m, c in enumerate(coeffs))
        out[n - 1 - row] = ((-1) ** order) * sum(
            c * v[n - 1 - m] for m, c in enumerate(coeffs)
        )
    out /= dx**order
    return np.moveaxis(out, 0, axis)


def _derivative(values: np.ndarray, grid: Grid, axis: int, order: int) -> np.ndarray:
    dx = grid.axes[axis].dx
    if grid.boundary == PERIODIC:
        return _spectral_derivative(values, axis, dx, order)
    if grid.boundary == DIRICHLET:
        return _sine_derivative(values, axis, dx, order)
    return _fd_derivative(values, axis, dx, order)


def gradient_values(values: np.ndarray, grid: Grid, axis: int = 0) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise FieldError("gradient input contains non-finite values")
    return _derivative(values, grid, axis, 1)


def laplacian_values(values: np.ndarray, grid: Grid) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise FieldError("laplacian input contains non-finite values")
    out = _derivative(values, grid, 0, 2)
    for axis in range(1, grid.ndim):
        out = out + _derivative(values, grid, axis, 2)
    return out


def gradient(f: Field, axis: int = 0) -> Field:
    """Spatial derivative along one axis, boundary-appropriate."""
    out = gradient_values(f.values, f.grid, axis)
    if isinstance(f, RealField):
        return RealField(out, f.grid, f.time)
    return ComplexField(out, f.grid, f.time)


def laplacian(f: Field) -> Field:
    """Sum of unmixed second derivatives over all axes."""
    out = laplacian_values(f.values, f.grid)
    if isinstance(f, RealField):
        return RealField(out, f.grid, f.time)
    return ComplexField(out, f.grid, f.time)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def integrate_values(values: np.ndarray, grid: Grid) -> float:
    """Integral of a real-valued array over the grid.

    Periodic and sine lattices use the plain Riemann sum (spectrally exact
    for their natural function classes); the finite-difference lattices use
    the trapezoid rule, with the spherical shell weight on flagged radial
    grids.
    """
    if grid.boundary in (PERIODIC, DIRICHLET):
        return float(np.sum(values) * grid.volume_element)
    vals = values
    if grid.radial_weight:
        vals = vals * 4.0 * np.pi * grid.coordinates(0) ** 2
    return float(np.trapezoid(vals, dx=grid.axes[0].dx))


def integrate(f: RealField | WaveFunction) -> float:
    values = f.rho if isinstance(f, WaveFunction) else f.values
    return integrate_values(values, f.grid)


def grid_double(grid: Grid) -> Grid:
    """Periodic lattice covering the odd extension of a sine grid."""
    if grid.boundary != DIRICHLET or grid.ndim != 1:
        raise GridError("grid_double expects a 1D dirichlet-sine grid")
    ax = grid.axes[0]
    return Grid.periodic(2 * ax.n, ax.x_min, ax.x_min + 2 * ax.length)
