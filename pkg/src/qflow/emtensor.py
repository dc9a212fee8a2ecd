"""Energy-momentum tensor components and local/global conservation checks.

Conventions: the momentum density is G_j = rho * grad_j S (the sign is
pinned to the momentum expectation integral, so integral of G equals the
spectral <P>).  The probability flux rho grad S / m is always assembled in
its bounded form hbar Im[psi* grad psi] / m, never by dividing at nodes.

Residuals:

    liouville:  d_t rho + div(rho grad S / m)
    energy   :  d_t S + (grad S)^2/2m + Q + V     (per-axis masses in 2D)

Both are evaluated at the midpoint of two wavefunction slices: the time
derivative is the centered difference and every spatial term is the slice
average, so the residual floor scales with dt^2.  Norms exclude the node
mask plus a two-point collar (differentiation stencils leak mask noise).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import (
    Grid,
    GridError,
    RealField,
    UnitSystem,
    WaveFunction,
    _derivative,
    integrate_values,
)
from .madelung import (
    DEFAULT_EPS_NODE,
    MadelungFields,
    VelocityFields,
    collar_mask,
    decompose,
    quantum_potential,
    velocities,
)
from .solver import (
    EvolutionTrace,
    Potential,
    momentum_expectation,
)


def offmask_norms(values: np.ndarray, mask: np.ndarray, grid: Grid, collar: int = 2) -> dict:
    """L2 and Linf of a residual field away from the (dilated) node mask."""
    keep = ~collar_mask(mask, collar)
    if not keep.any():
        return {"L2": float("nan"), "Linf": float("nan"), "points": 0}
    vals = values[keep]
    l2 = float(np.sqrt(np.sum(vals**2) * grid.volume_element))
    return {"L2": l2, "Linf": float(np.max(np.abs(vals))), "points": int(keep.sum())}


@dataclass(frozen=True)
class TensorComponents:
    """Momentum/energy densities of the field at one time slice."""

    T0j: np.ndarray  # momentum density rho grad_j S, leading axis over dims
    T00: RealField  # rho * E_B
    kinetic_energy: RealField  # (grad S)^2 / 2m, per unit probability
    osmotic_ke: RealField  # hbar^2 (grad R)^2 / (2 m R^2)
    qpe: RealField
    potential_energy: RealField  # V * rho
    node_mask: np.ndarray
    grid: Grid
    units: UnitSystem
    time: float


@dataclass(frozen=True)
class ConservationReport:
    """Residual norms and global drifts over an evolution trace."""

    times: np.ndarray
    global_momentum: np.ndarray  # per sample time
    momentum_spectral: np.ndarray
    global_norm: np.ndarray
    global_energy: np.ndarray
    liouville: dict
    qhj: dict
    osmotic_surface: float  # integral of grad rho (should vanish)

    @property
    def norm_drift(self) -> float:
        return float(np.max(np.abs(self.global_norm - self.global_norm[0])))

    @property
    def energy_drift(self) -> float:
        scale = max(abs(self.global_energy[0]), 1.0)
        return float(np.max(np.abs(self.global_energy - self.global_energy[0])) / scale)

    @property
    def momentum_drift(self) -> float:
        return float(np.max(np.abs(self.global_momentum - self.global_momentum[0])))

    @property
    def weak_identity_gap(self) -> float:
        """Largest gap between the flux-integral momentum and the spectral one."""
        return float(np.max(np.abs(self.global_momentum - self.momentum_spectral)))

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "global_momentum": self.global_momentum.tolist(),
            "momentum_spectral": self.momentum_spectral.tolist(),
            "global_norm": self.global_norm.tolist(),
            "global_energy": self.global_energy.tolist(),
            "liouville": self.liouville,
            "qhj": self.qhj,
            "osmotic_surface": self.osmotic_surface,
            "norm_drift": self.norm_drift,
            "energy_drift": self.energy_drift,
            "momentum_drift": self.momentum_drift,
            "weak_identity_gap": self.weak_identity_gap,
        }


# ---------------------------------------------------------------------------
# bounded flux and momentum helpers
# ---------------------------------------------------------------------------

def momentum_density_values(psi: WaveFunction, axis: int) -> np.ndarray:
    """rho grad_j S in the bounded form hbar Im[psi* d_j psi]."""
    dpsi = _derivative(psi.values, psi.grid, axis, 1)
    return psi.units.hbar * np.imag(np.conj(psi.values) * dpsi)


def probability_flux(psi: WaveFunction, axis: int) -> np.ndarray:
    return momentum_density_values(psi, axis) / psi.units.mass_of(axis)


def momentum_expectation_spectral(psi: WaveFunction, axis: int = 0) -> float:
    """<P_j> evaluated in the conjugate basis (Plancherel route)."""
    from scipy import fft as sfft

    from .grid import PERIODIC, _wavenumbers

    if psi.grid.boundary != PERIODIC:
        # quadrature route doubles as the reference off periodic lattices
        return momentum_expectation(psi, axis)
    ax = psi.grid.axes[axis]
    k = _wavenumbers(ax.n, ax.dx)
    psik = sfft.fft(psi.values, axis=axis, norm="ortho")
    weights = np.abs(psik) ** 2
    shape = [1] * psi.grid.ndim
    shape[axis] = ax.n
    total = np.sum(psi.units.hbar * k.reshape(shape) * weights) * ax.dx
    if psi.grid.ndim == 2:
        total *= psi.grid.axes[1 - axis].dx / 1.0
    return float(total)


# ---------------------------------------------------------------------------
# tensor assembly and residuals
# ---------------------------------------------------------------------------

def tensor_components(
    fields: MadelungFields, vel: VelocityFields, V: Potential
) -> TensorComponents:
    if not fields.grid.same_lattice(vel.grid):
        raise GridError("tensor slices live on different grids")
    g, units = fields.grid, fields.units
    rho = fields.rho.values
    mask = fields.node_mask | vel.node_mask

    t0j = rho[None, ...] * vel.p_bohm
    t00 = rho * vel.e_bohm.values

    masses = np.array([units.mass_of(ax) for ax in range(g.ndim)])
    shape = (g.ndim,) + (1,) * g.ndim
    ke = np.sum(vel.p_bohm**2 / (2.0 * masses.reshape(shape)), axis=0)
    osmotic = np.sum(
        (vel.v_osmotic * masses.reshape(shape)) ** 2 / (2.0 * masses.reshape(shape)),
        axis=0,
    )
    qpe = quantum_potential(fields)
    vvals = V.evaluate(g, units)

    t = vel.time
    return TensorComponents(
        T0j=t0j,
        T00=RealField(t00, g, t),
        kinetic_energy=RealField(ke, g, t),
        osmotic_ke=RealField(osmotic, g, t),
        qpe=qpe,
        potential_energy=RealField(vvals * rho, g, t),
        node_mask=mask,
        grid=g,
        units=units,
        time=t,
    )


def qhj_residual(
    fields: MadelungFields,
    vel: VelocityFields,
    Q: RealField,
    V: Potential | np.ndarray,
) -> RealField:
    """d_t S + sum_j (grad_j S)^2/2m_j + Q + V, zero on the mask.

    ``fields`` supplies grid/units context; ``vel`` carries the centered
    d_t S and slice-averaged momenta; ``Q`` should be midpoint-consistent
    with ``vel`` (see :func:`residual_pair`).
    """
    g, units = fields.grid, fields.units
    vvals = V.evaluate(g, units) if isinstance(V, Potential) else V
    masses = np.array([units.mass_of(ax) for ax in range(g.ndim)])
    shape = (g.ndim,) + (1,) * g.ndim
    ke = np.sum(vel.p_bohm**2 / (2.0 * masses.reshape(shape)), axis=0)
    res = -vel.e_bohm.values + ke + Q.values + vvals
    mask = fields.node_mask | vel.node_mask
    res = res.copy()
    res[mask] = 0.0
    return RealField(res, g, vel.time)


def liouville_residual(
    prev: MadelungFields, nxt: MadelungFields, dt: float | None = None
) -> RealField:
    """d_t rho + div(rho grad S / m) at the midpoint of two slices."""
    if not prev.grid.same_lattice(nxt.grid):
        raise GridError("slices live on different grids")
    g = prev.grid
    if dt is None:
        dt = nxt.time - prev.time
    drho = (nxt.rho.values - prev.rho.values) / dt
    div = np.zeros(g.shape)
    for ax in range(g.ndim):
        flux = 0.5 * (probability_flux(prev.psi, ax) + probability_flux(nxt.psi, ax))
        div += _derivative(flux, g, ax, 1)
    t_mid = 0.5 * (prev.time + nxt.time)
    return RealField(drho + div, g, t_mid)


@dataclass(frozen=True)
class ResidualPair:
    """Midpoint residuals assembled from two adjacent trace samples."""

    qhj: RealField
    liouville: RealField
    vel: VelocityFields
    node_mask: np.ndarray
    qhj_norms: dict
    liouville_norms: dict


def residual_pair(
    psi_prev: WaveFunction,
    psi_next: WaveFunction,
    V: Potential,
    eps_node: float = DEFAULT_EPS_NODE,
    collar: int = 2,
) -> ResidualPair:
    """Decompose two slices and evaluate both conservation residuals."""
    f_prev = decompose(psi_prev, eps_node)
    f_next = decompose(psi_next, eps_node)
    vel = velocities(f_next, f_prev)
    q_mid = 0.5 * (quantum_potential(f_prev).values + quantum_potential(f_next).values)
    q_field = RealField(q_mid, f_prev.grid, vel.time)
    qhj = qhj_residual(f_next, vel, q_field, V)
    liou = liouville_residual(f_prev, f_next)
    mask = vel.node_mask
    return ResidualPair(
        qhj=qhj,
        liouville=liou,
        vel=vel,
        node_mask=mask,
        qhj_norms=offmask_norms(qhj.values, mask, f_prev.grid, collar),
        liouville_norms=offmask_norms(liou.values, mask, f_prev.grid, collar),
    )


def global_checks(
    trace: EvolutionTrace, eps_node: float = DEFAULT_EPS_NODE
) -> ConservationReport:
    """Global momentum/norm/energy per sample plus worst-pair residuals."""
    g = trace.grid
    momenta = []
    spectral = []
    for s in trace.samples:
        momenta.append(integrate_values(momentum_density_values(s, 0), g))
        spectral.append(momentum_expectation_spectral(s, 0))

    worst_liou: dict = {"L2": 0.0, "Linf": 0.0}
    worst_qhj: dict = {"L2": 0.0, "Linf": 0.0}
    if len(trace.samples) >= 2:
        for i in (0, len(trace.samples) - 2):
            pair = residual_pair(*trace.pair_around(i), trace.potential, eps_node)
            for src, dst in ((pair.liouville_norms, worst_liou), (pair.qhj_norms, worst_qhj)):
                for key in ("L2", "Linf"):
                    dst[key] = max(dst[key], src[key])

    rho_final = trace.final.rho
    grad_rho = _derivative(rho_final, g, 0, 1)
    surface = integrate_values(grad_rho, g)

    return ConservationReport(
        times=trace.times,
        global_momentum=np.array(momenta),
        momentum_spectral=np.array(spectral),
        global_norm=trace.norms,
        global_energy=trace.energies,
        liouville=worst_liou,
        qhj=worst_qhj,
        osmotic_surface=float(surface),
    )
