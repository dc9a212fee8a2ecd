"""Time evolution and state preparation for H = p^2/2m + V.

The propagator is the second-order Strang splitting: a half kick by the
potential in position space, a full kinetic step in the spectral
representation, and another half kick.  Periodic grids use the plain FFT;
dirichlet-sine grids evolve through the odd periodic extension so box
eigenstates stay exact.  Two-particle problems run on a 2D grid with one
mass per axis.

States live in :class:`qflow.grid.WaveFunction`.  On radial grids the
stored array is the reduced radial function u(r) = r R(r), normalized with
the plain 1D measure (integral of u^2 dr = 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import fft as sfft
from scipy.special import eval_hermite

from .grid import (
    DIRICHLET,
    LINE_FD,
    PERIODIC,
    RADIAL,
    Grid,
    GridError,
    UnitSystem,
    WaveFunction,
    _odd_extension,
    _wavenumbers,
    integrate_values,
    laplacian_values,
)

FREE = "free"
BOX = "box"
HARMONIC = "harmonic"
COULOMB_RADIAL = "coulomb-radial"
DELTA_WELL = "delta-well"
DOUBLE_SLIT = "double-slit"
CUSTOM = "custom-tabulated"

_KINDS = (FREE, BOX, HARMONIC, COULOMB_RADIAL, DELTA_WELL, DOUBLE_SLIT, CUSTOM)


class SolverError(RuntimeError):
    """Evolution guard trips and unsupported state-preparation requests."""


@dataclass(frozen=True)
class Potential:
    """Potential energy term, evaluated lazily on a grid.

    ``params`` by kind:
      harmonic: omega (and optional center)
      coulomb-radial: e2
      delta-well: alpha, width (regularization width; default 4*dx)
      double-slit: v0, separation, slit_width
      custom-tabulated: fn (callable on coordinates) or values (array)
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")

    # -- analytic callable (used by the phase-space propagator) ----------

    def fn(self, units: UnitSystem, grid: Grid | None = None):
        """Return V as a plain callable of position, when one exists."""
        p = self.params
        if self.kind in (FREE, BOX):
            return lambda x: np.zeros_like(np.asarray(x, dtype=float))
        if self.kind == HARMONIC:
            omega = p["omega"]
            x0 = p.get("center", 0.0)
            m = units.mass
            return lambda x: 0.5 * m * omega**2 * (np.asarray(x) - x0) ** 2
        if self.kind == COULOMB_RADIAL:
            e2 = p.get("e2", units.coupling("e2", 1.0))
            return lambda r: -e2 / np.asarray(r)
        if self.kind == DELTA_WELL:
            alpha = p.get("alpha", units.coupling("alpha", 1.0))
            if "width" in p and p["width"] is not None:
                w = p["width"]
            elif grid is not None:
                w = 4.0 * grid.dx
            else:
                raise ValueError("delta-well width unresolved without a grid")
            strength = units.hbar**2 * alpha / units.mass
            norm = 1.0 / (w * math.sqrt(2.0 * math.pi))
            return lambda x: -strength * norm * np.exp(-np.asarray(x) ** 2 / (2 * w**2))
        if self.kind == DOUBLE_SLIT:
            v0 = p["v0"]
            d = p["separation"]
            s = p["slit_width"]

            def barrier(x):
                x = np.asarray(x)
                open_ = (np.abs(x - d / 2) < s / 2) | (np.abs(x + d / 2) < s / 2)
                return np.where(open_, 0.0, v0)

            return barrier
        if self.kind == CUSTOM and "fn" in p:
            return p["fn"]
        raise ValueError(f"potential kind {self.kind!r} has no closed-form callable")

    def evaluate(self, grid: Grid, units: UnitSystem) -> np.ndarray:
        if self.kind == CUSTOM and "values" in self.params:
            vals = np.asarray(self.params["values"], dtype=float)
            if vals.shape != grid.shape:
                raise GridError("tabulated potential does not match grid shape")
            return vals
        f = self.fn(units, grid)
        if grid.ndim == 1:
            vals = f(grid.coordinates(0))
        else:
            vals = f(*grid.meshgrid()) if self.kind == CUSTOM else self._separable_2d(f, grid)
        vals = np.asarray(vals, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("potential is not finite on the grid")
        return vals

    def _separable_2d(self, f, grid: Grid) -> np.ndarray:
        # one-body analytic kinds act per coordinate and add
        x1, x2 = grid.meshgrid()
        return f(x1) + f(x2)


def coupled_potential(fn: Callable, name: str = "coupled") -> Potential:
    """Custom two-body potential V(x1, x2) from a callable."""
    return Potential(CUSTOM, {"fn": fn, "name": name})


@dataclass(frozen=True)
class EvolutionSpec:
    """Time stepping plan for the Strang propagator."""

    dt: float
    n_steps: int
    sample_every: int = 0  # 0: keep only endpoints

    def __post_init__(self):
        if self.dt == 0:
            raise ValueError("dt must be nonzero")
        if self.n_steps < 1:
            raise ValueError("n_steps must be positive")


@dataclass(frozen=True)
class EvolutionTrace:
    """Wavefunction samples plus per-sample norm and energy records."""

    grid: Grid
    units: UnitSystem
    potential: Potential
    dt: float
    times: np.ndarray
    samples: tuple[WaveFunction, ...]
    norms: np.ndarray
    energies: np.ndarray

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def initial(self) -> WaveFunction:
        return self.samples[0]

    @property
    def final(self) -> WaveFunction:
        return self.samples[-1]

    def pair_around(self, index: int) -> tuple[WaveFunction, WaveFunction]:
        """Adjacent samples bracketing midpoint index+1/2."""
        return self.samples[index], self.samples[index + 1]

    def norm_drift(self) -> float:
        return float(np.max(np.abs(self.norms - self.norms[0])))

    def energy_drift(self) -> float:
        e0 = self.energies[0]
        scale = max(abs(e0), 1.0)
        return float(np.max(np.abs(self.energies - e0)) / scale)


# ---------------------------------------------------------------------------
# spectral kinetic application
# ---------------------------------------------------------------------------

def _kinetic_phase(grid: Grid, units: UnitSystem, dt: float, doubled: bool) -> np.ndarray:
    """exp(-i dt hbar k^2 / 2m) accumulated over axes."""
    hbar = units.hbar
    phase = None
    for axis in range(grid.ndim):
        ax = grid.axes[axis]
        n = 2 * ax.n if doubled else ax.n
        k = _wavenumbers(n, ax.dx)
        term = hbar * k**2 / (2.0 * units.mass_of(axis))
        shape = [1] * grid.ndim
        shape[axis] = n
        t = term.reshape(shape)
        phase = t if phase is None else phase + t
    return np.exp(-1j * dt * phase)


def _apply_kinetic(values: np.ndarray, grid: Grid, expk: np.ndarray) -> np.ndarray:
    if grid.boundary == PERIODIC:
        return sfft.ifftn(sfft.fftn(values) * expk)
    # dirichlet-sine: evolve the odd periodic extension, then restrict
    ext = values
    for axis in range(grid.ndim):
        ext = _odd_extension(ext, axis)
    ext = sfft.ifftn(sfft.fftn(ext) * expk)
    sl = tuple(slice(0, n) for n in grid.shape)
    return ext[sl]


def evolve(
    psi: WaveFunction,
    V: Potential,
    spec: EvolutionSpec,
    renormalize: bool = False,
) -> EvolutionTrace:
    """Propagate psi by n_steps of Strang splitting, sampling along the way.

    Rejects grids without a spectral kinetic step, non-normalized input and
    time steps that would wrap the potential phase by more than half a
    radian per step.
    """
    grid, units = psi.grid, psi.units
    if grid.boundary not in (PERIODIC, DIRICHLET):
        raise SolverError(f"evolve needs a spectral grid, not {grid.boundary!r}")
    norm0 = psi.norm()
    if abs(norm0 - 1.0) > 1e-8:
        raise SolverError(f"initial state is not normalized: norm = {norm0!r}")

    vvals = V.evaluate(grid, units)
    guard = abs(spec.dt) * float(np.max(np.abs(vvals))) / units.hbar
    if guard >= 0.5:
        raise SolverError(
            f"phase-wrap guard: |dt|*max|V|/hbar = {guard:.3g} >= 0.5; shrink dt"
        )

    exp_v_half = np.exp(-0.5j * spec.dt * vvals / units.hbar)
    expk = _kinetic_phase(grid, units, spec.dt, doubled=grid.boundary == DIRICHLET)

    keep = spec.sample_every if spec.sample_every > 0 else spec.n_steps
    values = psi.values.copy()
    t = psi.time

    times = [t]
    states = [WaveFunction(values, grid, units, t)]

    for step in range(1, spec.n_steps + 1):
        values = exp_v_half * values
        values = _apply_kinetic(values, grid, expk)
        values = exp_v_half * values
        if renormalize:
            values = values / math.sqrt(integrate_values(np.abs(values) ** 2, grid))
        t = psi.time + step * spec.dt
        if step % keep == 0 or step == spec.n_steps:
            times.append(t)
            states.append(WaveFunction(values, grid, units, t))

    norms = np.array([s.norm() for s in states])
    energies = np.array([hamiltonian_expectation(s, vvals) for s in states])
    return EvolutionTrace(
        grid, units, V, spec.dt, np.array(times), tuple(states), norms, energies
    )


# ---------------------------------------------------------------------------
# expectation values (spectral derivatives + quadrature)
# ---------------------------------------------------------------------------

def kinetic_expectation(psi: WaveFunction) -> float:
    hbar = psi.units.hbar
    lap = laplacian_values(psi.values, psi.grid)
    dens = np.real(np.conj(psi.values) * lap)
    # per-axis masses: recompute axis-wise when they differ
    if psi.grid.ndim == 2 and psi.units.mass2 is not None:
        from .grid import _derivative

        total = 0.0
        for axis in range(2):
            d2 = _derivative(psi.values, psi.grid, axis, 2)
            term = np.real(np.conj(psi.values) * d2)
            total += -(hbar**2) / (2 * psi.units.mass_of(axis)) * integrate_values(
                term, psi.grid
            )
        return total
    return -(hbar**2) / (2 * psi.units.mass) * integrate_values(dens, psi.grid)


def potential_expectation(psi: WaveFunction, vvals: np.ndarray) -> float:
    return integrate_values(vvals * psi.rho, psi.grid)


def hamiltonian_expectation(psi: WaveFunction, vvals: np.ndarray) -> float:
    return kinetic_expectation(psi) + potential_expectation(psi, vvals)


def momentum_expectation(psi: WaveFunction, axis: int = 0) -> float:
    from .grid import _derivative

    hbar = psi.units.hbar
    dpsi = _derivative(psi.values, psi.grid, axis, 1)
    dens = np.real(np.conj(psi.values) * (-1j * hbar) * dpsi)
    return integrate_values(dens, psi.grid)


def momentum_squared_expectation(psi: WaveFunction, axis: int | None = None) -> float:
    from .grid import _derivative

    hbar = psi.units.hbar
    if axis is None:
        lap = laplacian_values(psi.values, psi.grid)
    else:
        lap = _derivative(psi.values, psi.grid, axis, 2)
    dens = np.real(np.conj(psi.values) * (-(hbar**2)) * lap)
    return integrate_values(dens, psi.grid)


# ---------------------------------------------------------------------------
# closed-form states
# ---------------------------------------------------------------------------

def gaussian_packet(
    grid: Grid,
    units: UnitSystem,
    x0: float = 0.0,
    p0: float = 0.0,
    sigma: float = 1.0,
) -> WaveFunction:
    """Minimum-uncertainty packet exp(-(x-x0)^2/4 sigma^2 + i p0 x / hbar)."""
    x = grid.coordinates(0)
    psi = np.exp(-((x - x0) ** 2) / (4.0 * sigma**2) + 1j * p0 * x / units.hbar)
    psi = psi.astype(complex)
    psi /= math.sqrt(integrate_values(np.abs(psi) ** 2, grid))
    return WaveFunction(psi, grid, units, 0.0)


def free_gaussian_width(sigma0: float, t: float, units: UnitSystem) -> float:
    """Closed-form spreading law for the free Gaussian packet."""
    tau = units.hbar * t / (2.0 * units.mass * sigma0**2)
    return sigma0 * math.sqrt(1.0 + tau**2)


def prepare_eigenstate(
    V: Potential, n: int, grid: Grid, units: UnitSystem
) -> WaveFunction:
    """Closed-form eigenfunction of the supported model potentials.

    box: n = 1, 2, ... on a dirichlet-sine grid
    harmonic: n = 0, 1, ... on a periodic grid
    delta-well: ground state sqrt(alpha) exp(-alpha |x|) (ideal narrow well)
    coulomb-radial: 1s reduced radial function u(r) = r R(r), 1D-normalized
    """
    if V.kind == BOX:
        if grid.boundary != DIRICHLET:
            raise SolverError("box eigenstates need a dirichlet-sine grid")
        if n < 1 or n >= grid.axes[0].n:
            raise SolverError(f"box eigenstate index {n} not representable")
        a = grid.axes[0].length
        x = grid.coordinates(0)
        psi = np.sqrt(2.0 / a) * np.sin(n * np.pi * (x - grid.axes[0].x_min) / a)
    elif V.kind == HARMONIC:
        if n < 0:
            raise SolverError("harmonic level index must be >= 0")
        omega = V.params["omega"]
        x = grid.coordinates(0) - V.params.get("center", 0.0)
        xi = np.sqrt(units.mass * omega / units.hbar) * x
        norm = (units.mass * omega / (np.pi * units.hbar)) ** 0.25 / math.sqrt(
            (2.0**n) * math.factorial(n)
        )
        psi = norm * eval_hermite(n, xi) * np.exp(-0.5 * xi**2)
    elif V.kind == DELTA_WELL:
        if n != 1:
            raise SolverError("the narrow attractive well binds a single state")
        alpha = V.params.get("alpha", units.coupling("alpha", 1.0))
        x = grid.coordinates(0)
        psi = np.sqrt(alpha) * np.exp(-alpha * np.abs(x))
    elif V.kind == COULOMB_RADIAL:
        if grid.boundary != RADIAL:
            raise SolverError("the 1s state is prepared on a radial grid")
        if n != 1:
            raise SolverError("only the 1s level has a closed form here")
        e2 = V.params.get("e2", units.coupling("e2", 1.0))
        b = units.mass * e2 / units.hbar**2
        r = grid.coordinates(0)
        psi = 2.0 * b**1.5 * r * np.exp(-b * r)
    else:
        raise SolverError(f"no closed-form eigenstates for potential {V.kind!r}")
    psi = psi.astype(complex)
    psi /= math.sqrt(integrate_values(np.abs(psi) ** 2, grid))
    return WaveFunction(psi, grid, units, 0.0)


def eigenvalue(V: Potential, n: int, units: UnitSystem) -> float:
    """Closed-form energy matching prepare_eigenstate, when available."""
    if V.kind == BOX:
        a = V.params["a"]
        return (n * np.pi * units.hbar) ** 2 / (2.0 * units.mass * a**2)
    if V.kind == HARMONIC:
        return units.hbar * V.params["omega"] * (n + 0.5)
    if V.kind == DELTA_WELL:
        alpha = V.params.get("alpha", units.coupling("alpha", 1.0))
        return -(units.hbar**2) * alpha**2 / (2.0 * units.mass)
    if V.kind == COULOMB_RADIAL:
        e2 = V.params.get("e2", units.coupling("e2", 1.0))
        return -units.mass * e2**2 / (2.0 * units.hbar**2)
    raise SolverError(f"no closed-form eigenvalue for potential {V.kind!r}")


def imaginary_time_ground_state(
    V: Potential,
    grid: Grid,
    units: UnitSystem,
    dtau: float = 0.01,
    tol: float = 1e-8,
    max_iters: int = 200_000,
    initial: WaveFunction | None = None,
) -> tuple[WaveFunction, float]:
    """Ground state by diffusion in imaginary time; cross-check for the
    closed-form constructors.  Returns (state, energy)."""
    if grid.boundary not in (PERIODIC, DIRICHLET):
        raise SolverError("imaginary time needs a spectral grid")
    vvals = V.evaluate(grid, units)
    if initial is None:
        x = grid.coordinates(0)
        center = 0.5 * (grid.axes[0].x_min + grid.axes[0].x_max)
        width = grid.axes[0].length / 8.0
        guess = np.exp(-((x - center) ** 2) / (2 * width**2))
        if grid.ndim == 2:
            y = grid.coordinates(1)
            cy = 0.5 * (grid.axes[1].x_min + grid.axes[1].x_max)
            guess = guess * np.exp(-((y - cy) ** 2) / (2 * width**2))
        values = guess.astype(complex)
    else:
        values = initial.values.copy()
    values /= math.sqrt(integrate_values(np.abs(values) ** 2, grid))

    exp_v_half = np.exp(-0.5 * dtau * vvals / units.hbar)
    doubled = grid.boundary == DIRICHLET
    expk = np.exp(
        -dtau / units.hbar * _kinetic_log_phase(grid, units, doubled)
    )

    energy = None
    for _ in range(max_iters):
        values = exp_v_half * values
        values = _apply_kinetic(values, grid, expk)
        values = exp_v_half * values
        values /= math.sqrt(integrate_values(np.abs(values) ** 2, grid))
        state = WaveFunction(values, grid, units, 0.0)
        e = hamiltonian_expectation(state, vvals)
        if energy is not None and abs(e - energy) < tol:
            return state, e
        energy = e
    raise SolverError(f"imaginary time failed to converge in {max_iters} iterations")


def _kinetic_log_phase(grid: Grid, units: UnitSystem, doubled: bool) -> np.ndarray:
    phase = None
    for axis in range(grid.ndim):
        ax = grid.axes[axis]
        n = 2 * ax.n if doubled else ax.n
        k = _wavenumbers(n, ax.dx)
        term = units.hbar**2 * k**2 / (2.0 * units.mass_of(axis))
        shape = [1] * grid.ndim
        shape[axis] = n
        t = term.reshape(shape)
        phase = t if phase is None else phase + t
    return phase
