"""Bohm flow lines: integral curves of the local velocity grad S / m.

Lines are advanced by classical RK4 through an evolution trace, with cubic
spline interpolation of the velocity field between lattice points and
linear interpolation between trace sample times.  A line that drifts into
the node mask terminates with status ``node``; one that leaves the domain
terminates with ``left-domain``.

Seeds are drawn at density quantiles (deterministic), so each line carries
equal probability weight and the endpoint histogram transported along the
bundle can be compared against the evolved density, the discrete face of
probability conservation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .grid import Grid, PERIODIC, RealField, UnitSystem, WaveFunction, integrate_values
from .madelung import DEFAULT_EPS_NODE, decompose, momentum_ratio, quantum_potential
from .solver import (
    EvolutionSpec,
    EvolutionTrace,
    FREE,
    Potential,
    evolve,
    gaussian_packet,
)

STATUS_OK = "ok"
STATUS_NODE = "node"
STATUS_LEFT = "left-domain"


@dataclass(frozen=True)
class FlowLine:
    seed: float
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    q_values: np.ndarray
    e_values: np.ndarray
    status: str

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("flow-line samples must increase strictly in time")


@dataclass(frozen=True)
class TwoSlitSpec:
    """Two Gaussian slit packets released into free flight.

    ``separation`` and ``slit_width`` set the transverse geometry,
    ``packet_momentum`` is the longitudinal momentum that converts the
    screen distance into a flight time.
    """

    separation: float = 4.0
    slit_width: float = 0.5
    packet_momentum: float = 10.0
    screen_distance: float = 30.0
    points: int = 512
    half_width: float = 40.0
    dt: float = 2e-3
    sample_every: int = 5

    def __post_init__(self):
        # separation 0 is the degenerate single-slit configuration
        if self.separation != 0.0 and not (self.separation > self.slit_width > 0):
            raise ValueError("need separation > slit_width > 0 (or separation == 0)")
        if self.slit_width <= 0:
            raise ValueError("slit_width must be positive")

    @property
    def flight_time(self) -> float:
        return self.screen_distance / self.packet_momentum  # units of m/p0


class FlowLineError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# interpolation of the velocity data held in a trace
# ---------------------------------------------------------------------------

class TraceFlowField:
    """Cubic-in-space, linear-in-time view of v, rho, Q, E_B over a trace."""

    def __init__(self, trace: EvolutionTrace, eps_node: float = DEFAULT_EPS_NODE):
        grid = trace.grid
        if grid.ndim != 1:
            raise FlowLineError("flow lines are integrated on 1D grids")
        self.grid = grid
        self.units = trace.units
        self.times = trace.times
        self.eps_node = eps_node
        x = grid.coordinates(0)
        self.x_min = float(x[0])
        self.x_max = float(x[-1])

        periodic = grid.boundary == PERIODIC
        bc = "periodic" if periodic else "not-a-knot"
        xs = np.append(x, x[-1] + grid.dx) if periodic else x

        def spline(vals):
            data = np.append(vals, vals[0]) if periodic else vals
            return CubicSpline(xs, data, bc_type=bc)

        self._v = []
        self._rho = []
        self._q = []
        self._floor = []
        s_fields = []
        for sample in trace.samples:
            fields = decompose(sample, eps_node)
            mask = fields.node_mask
            v = momentum_ratio(sample, mask, 0).real / self.units.mass
            self._v.append(spline(v))
            self._rho.append(spline(sample.rho))
            self._q.append(spline(quantum_potential(fields).values))
            self._floor.append(eps_node * float(np.max(sample.rho)))
            s_fields.append(fields.S.values)
        # local energy between adjacent samples (centered at midpoints)
        self._e = []
        for i in range(len(trace.samples) - 1):
            dt = self.times[i + 1] - self.times[i]
            self._e.append(spline(-(s_fields[i + 1] - s_fields[i]) / dt))

    def _bracket(self, t: float) -> tuple[int, float]:
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = min(max(i, 0), len(self.times) - 2)
        theta = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        return i, float(np.clip(theta, 0.0, 1.0))

    def velocity(self, x: np.ndarray, t: float) -> np.ndarray:
        i, theta = self._bracket(t)
        return (1.0 - theta) * self._v[i](x) + theta * self._v[i + 1](x)

    def density(self, x: np.ndarray, t: float) -> np.ndarray:
        i, theta = self._bracket(t)
        return (1.0 - theta) * self._rho[i](x) + theta * self._rho[i + 1](x)

    def density_floor(self, t: float) -> float:
        i, theta = self._bracket(t)
        return (1.0 - theta) * self._floor[i] + theta * self._floor[i + 1]

    def quantum_potential(self, x: np.ndarray, t: float) -> np.ndarray:
        i, theta = self._bracket(t)
        return (1.0 - theta) * self._q[i](x) + theta * self._q[i + 1](x)

    def local_energy(self, x: np.ndarray, t: float) -> np.ndarray:
        i, _ = self._bracket(t)
        i = min(i, len(self._e) - 1)
        return self._e[i](x)


def integrate_flowlines(
    trace: EvolutionTrace,
    seeds: np.ndarray,
    substeps: int = 4,
    eps_node: float = DEFAULT_EPS_NODE,
) -> list[FlowLine]:
    """RK4-advance one line per seed through the trace velocity field.

    ``substeps`` divides each trace sampling interval (trajectory steps stay
    at or below the field spacing).  All lines march together, so the cost
    is vectorized over seeds.
    """
    field = TraceFlowField(trace, eps_node)
    seeds = np.atleast_1d(np.asarray(seeds, dtype=float))
    if np.any(seeds < field.x_min) or np.any(seeds > field.x_max):
        raise FlowLineError("seed outside the grid")
    if np.any(field.density(seeds, field.times[0]) < field.density_floor(field.times[0])):
        raise FlowLineError("seed placed on the node mask")

    times = field.times
    n_lines = seeds.size
    alive = np.ones(n_lines, dtype=bool)
    status = np.array([STATUS_OK] * n_lines, dtype=object)
    x = seeds.copy()

    ts = [times[0]]
    xs = [x.copy()]

    for i in range(len(times) - 1):
        dt = (times[i + 1] - times[i]) / substeps
        t = times[i]
        for _ in range(substeps):
            xa = x[alive]
            k1 = field.velocity(xa, t)
            k2 = field.velocity(xa + 0.5 * dt * k1, t + 0.5 * dt)
            k3 = field.velocity(xa + 0.5 * dt * k2, t + 0.5 * dt)
            k4 = field.velocity(xa + dt * k3, t + dt)
            x_new = xa + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += dt

            left = (x_new < field.x_min) | (x_new > field.x_max)
            x_new_cl = np.clip(x_new, field.x_min, field.x_max)
            noded = field.density(x_new_cl, t) < field.density_floor(t)
            idx = np.flatnonzero(alive)
            status[idx[left]] = STATUS_LEFT
            status[idx[~left & noded]] = STATUS_NODE
            x[alive] = x_new_cl
            alive[idx[left | noded]] = False
        ts.append(times[i + 1])
        xs.append(x.copy())

    ts = np.array(ts)
    xs = np.array(xs)  # (n_times, n_lines)

    # per-time vector evaluation keeps large bundles cheap
    vels = np.empty_like(xs)
    qvals = np.empty_like(xs)
    evals = np.empty_like(xs)
    for i, t in enumerate(ts):
        vels[i] = field.velocity(xs[i], t)
        qvals[i] = field.quantum_potential(xs[i], t)
        evals[i] = field.local_energy(xs[i], t)

    lines = []
    for j in range(n_lines):
        lines.append(
            FlowLine(
                seed=float(seeds[j]),
                times=ts,
                positions=xs[:, j],
                velocities=vels[:, j],
                q_values=qvals[:, j],
                e_values=evals[:, j],
                status=str(status[j]),
            )
        )
    return lines


def quantile_seeds(psi: WaveFunction, count: int) -> np.ndarray:
    """Deterministic seeds at the (k + 1/2)/count quantiles of |psi|^2.

    The CDF is accumulated at cell midpoints so a symmetric density yields
    a bundle symmetric about its center.
    """
    rho = psi.rho
    x = psi.grid.coordinates(0)
    cdf = np.cumsum(rho) - 0.5 * rho
    cdf = cdf / (np.sum(rho))
    targets = (np.arange(count) + 0.5) / count
    return np.interp(targets, cdf, x)


def axis_crossings(lines: list[FlowLine], axis: float = 0.0) -> int:
    """Number of sign changes of (x - axis) across the whole bundle."""
    total = 0
    for line in lines:
        s = np.sign(line.positions - axis)
        s = s[s != 0]
        total += int(np.sum(s[1:] * s[:-1] < 0))
    return total


def ordering_preserved(lines: list[FlowLine]) -> bool:
    """Single-valued flow: seed order equals position order at all times."""
    pos = np.array([line.positions for line in lines])  # (n_lines, n_times)
    order = np.argsort(pos[:, 0])
    sorted_pos = pos[order]
    return bool(np.all(np.diff(sorted_pos, axis=0) >= -1e-12))


def endpoint_l1_distance(lines: list[FlowLine], final_state: WaveFunction, bins: int = 64) -> float:
    """L1 distance between the endpoint histogram and the evolved density.

    Quantile seeds carry weight 1/N each; both measures are binned over the
    region that holds the final density.
    """
    ends = np.array([ln.positions[-1] for ln in lines if ln.status == STATUS_OK])
    if ends.size == 0:
        raise FlowLineError("no surviving lines to histogram")
    x = final_state.grid.coordinates(0)
    rho = final_state.rho
    lo, hi = ends.min(), ends.max()
    pad = 0.05 * (hi - lo)
    edges = np.linspace(lo - pad, hi + pad, bins + 1)
    hist, _ = np.histogram(ends, bins=edges)
    hist = hist / ends.size
    rho_bins = np.array(
        [integrate_values(np.where((x >= a) & (x < b), rho, 0.0), final_state.grid)
         for a, b in zip(edges[:-1], edges[1:])]
    )
    rho_bins = rho_bins / rho_bins.sum()
    return float(np.sum(np.abs(hist - rho_bins)))


# ---------------------------------------------------------------------------
# two-slit scenario
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TwoSlitResult:
    spec: TwoSlitSpec
    trace: EvolutionTrace
    lines: list[FlowLine]
    density_final: RealField
    crossings: int
    fringe_spacing: float


def two_slit_state(spec: TwoSlitSpec, grid: Grid, units: UnitSystem) -> WaveFunction:
    x = grid.coordinates(0)
    s = spec.slit_width
    d = spec.separation
    packet = lambda c: np.exp(-((x - c) ** 2) / (4.0 * s**2))
    vals = (packet(d / 2) + packet(-d / 2)).astype(complex)
    vals /= math.sqrt(integrate_values(np.abs(vals) ** 2, grid))
    return WaveFunction(vals, grid, units)


def two_slit_run(
    spec: TwoSlitSpec,
    units: UnitSystem | None = None,
    n_lines: int = 100,
    substeps: int = 2,
) -> TwoSlitResult:
    """Free flight of the symmetrized two-packet state plus a line bundle."""
    units = units or UnitSystem()
    grid = Grid.periodic(spec.points, -spec.half_width, spec.half_width)
    t_final = spec.flight_time

    # far-field fringe period hbar * 2 pi t / (m d); must stay resolved
    fringe = 2.0 * np.pi * units.hbar * t_final / (units.mass * spec.separation)
    if fringe < 4.0 * grid.dx:
        raise FlowLineError(
            f"under-resolved fringes: spacing {fringe:.3g} < 4 dx = {4 * grid.dx:.3g}"
        )

    psi0 = two_slit_state(spec, grid, units)
    n_steps = int(round(t_final / spec.dt))
    trace = evolve(psi0, Potential(FREE), EvolutionSpec(spec.dt, n_steps, spec.sample_every))

    seeds = quantile_seeds(psi0, n_lines)
    lines = integrate_flowlines(trace, seeds, substeps=substeps)
    density = RealField(trace.final.rho, grid, trace.final.time)
    return TwoSlitResult(
        spec=spec,
        trace=trace,
        lines=lines,
        density_final=density,
        crossings=axis_crossings(lines),
        fringe_spacing=float(fringe),
    )


# ---------------------------------------------------------------------------
# classical comparison
# ---------------------------------------------------------------------------

def leapfrog(force, x0: float, p0: float, mass: float, dt: float, n_steps: int) -> np.ndarray:
    """Symplectic leapfrog oracle; returns positions at every step."""
    x, p = x0, p0
    out = np.empty(n_steps + 1)
    out[0] = x
    p += 0.5 * dt * force(x)
    for i in range(1, n_steps + 1):
        x += dt * p / mass
        out[i] = x
        kick = dt * force(x)
        p += kick if i < n_steps else 0.5 * kick
    return out


@dataclass(frozen=True)
class ClassicalCompareRow:
    hbar: float
    flowline_error: float
    q_norm: float  # L2 of Q over the high-density core, early in the run


@dataclass(frozen=True)
class ClassicalCompareReport:
    rows: tuple[ClassicalCompareRow, ...]
    error_slope: float
    q_slope: float

    @property
    def errors_monotone(self) -> bool:
        errs = [r.flowline_error for r in self.rows]
        return all(b < a for a, b in zip(errs, errs[1:]))

    @property
    def error_reduction(self) -> float:
        return self.rows[0].flowline_error / self.rows[-1].flowline_error


def _loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def classical_compare(
    V: Potential,
    force,
    hbars=(1.0, 0.5, 0.25, 0.125),
    x0: float = 1.0,
    p0: float = 0.0,
    sigma: float = 1.0,
    t_final: float = 1.0,
    points: int = 256,
    half_width: float = 12.0,
    dt: float = 1e-3,
    sample_every: int = 1,
    mass: float = 1.0,
    q_norm_time: float = 0.2,
) -> ClassicalCompareReport:
    """Central Bohm line against the symplectic point trajectory, per hbar.

    The packet keeps a fixed width, so the central line's departure from the
    classical characteristic is driven purely by the quantum force and falls
    off as hbar^2.  The quantum-potential norm is recorded early in the run
    (``q_norm_time``) over the high-density core, before packet spreading —
    itself hbar-dependent — can distort the footprint of the norm.
    """
    rows = []
    for hbar in hbars:
        units = UnitSystem(hbar=hbar, mass=mass)
        grid = Grid.periodic(points, -half_width, half_width)
        psi0 = gaussian_packet(grid, units, x0=x0, p0=p0, sigma=sigma)
        n_steps = int(round(t_final / dt))
        trace = evolve(psi0, V, EvolutionSpec(dt, n_steps, sample_every))
        line = integrate_flowlines(trace, np.array([x0]), substeps=4)[0]
        classical = leapfrog(force, x0, p0, mass, dt, n_steps)
        cl_at_samples = classical[::sample_every]
        if (n_steps % sample_every) != 0:
            cl_at_samples = np.append(cl_at_samples, classical[-1])
        n = min(len(cl_at_samples), len(line.positions))
        err = float(np.max(np.abs(line.positions[:n] - cl_at_samples[:n])))

        i_q = int(np.argmin(np.abs(trace.times - q_norm_time)))
        sample = trace.samples[i_q]
        fields = decompose(sample)
        q = quantum_potential(fields).values
        core = sample.rho > 1e-3 * np.max(sample.rho)
        q_norm = float(np.sqrt(np.sum(q[core] ** 2) * grid.volume_element))
        rows.append(ClassicalCompareRow(hbar, err, q_norm))

    hs = [r.hbar for r in rows]
    return ClassicalCompareReport(
        rows=tuple(rows),
        error_slope=_loglog_slope(hs, [r.flowline_error for r in rows]),
        q_slope=_loglog_slope(hs, [r.q_norm for r in rows]),
    )
