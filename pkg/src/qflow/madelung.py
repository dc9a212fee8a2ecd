"""Polar decomposition psi = R exp(iS/hbar) and the local flow fields.

``decompose`` produces the amplitude R, the unwrapped action S, the density
rho = R^2 and a node mask where the split is numerically undefined.

Derivative-based quantities (Bohm momentum, osmotic velocity, quantum
potential) are evaluated through the complex log-derivative of psi rather
than by differentiating R and S:

    w  = -i hbar (grad psi)/psi  ->  Re w = grad S,   Im w = -hbar grad R / R
    u  = -hbar^2 (lap psi)/psi   ->  Re u = (grad S)^2 - hbar^2 (lap R)/R

The ratio form stays spectrally exact through amplitude sign changes
(|psi| has kinks at nodes that global differentiation would ring on) and
is computed only off the node mask; on-mask points carry a zero sentinel
and are excluded from every norm downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import (
    Grid,
    GridError,
    FieldError,
    RealField,
    UnitSystem,
    WaveFunction,
    _derivative,
)

DEFAULT_EPS_NODE = 1e-8


class DecompositionError(ValueError):
    """Raised when the polar split is undefined everywhere."""


def collar_mask(mask: np.ndarray, width: int = 2) -> np.ndarray:
    """Node mask dilated by ``width`` points (stencil leakage zone)."""
    if width <= 0 or not mask.any():
        return mask
    return ndimage.binary_dilation(mask, iterations=width)


@dataclass(frozen=True)
class MadelungFields:
    """R, S, rho on a grid, plus the node mask and the source state."""

    R: RealField
    S: RealField
    rho: RealField
    node_mask: np.ndarray  # True where the decomposition is undefined
    psi: WaveFunction
    eps_node: float
    vortices: tuple[tuple[int, int, int], ...] = ()

    @property
    def grid(self) -> Grid:
        return self.psi.grid

    @property
    def units(self) -> UnitSystem:
        return self.psi.units

    @property
    def time(self) -> float:
        return self.psi.time

    def reconstruct(self) -> np.ndarray:
        """R exp(iS/hbar); matches psi off-mask."""
        return self.R.values * np.exp(1j * self.S.values / self.units.hbar)


@dataclass(frozen=True)
class VelocityFields:
    """Local momentum/velocity/energy fields at the midpoint of two slices.

    Vector quantities carry a leading axis over grid dimensions.
    """

    p_bohm: np.ndarray
    v_current: np.ndarray
    v_osmotic: np.ndarray
    e_bohm: RealField
    node_mask: np.ndarray
    grid: Grid
    units: UnitSystem
    time: float


def _unwrap_masked_1d(phase: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = phase.copy()
    ok = ~mask
    if ok.any():
        out[ok] = np.unwrap(phase[ok])
    if mask.any() and ok.any():
        idx = np.arange(len(phase))
        fill = np.interp(idx[mask], idx[ok], out[ok])
        # nearest-neighbour continuation, not interpolation across a node
        nearest = ndimage.distance_transform_edt(mask, return_distances=False, return_indices=True)
        out[mask] = out[tuple(n[mask] for n in nearest)]
        del fill
    return out


def _unwrap_masked_2d(phase: np.ndarray, mask: np.ndarray, rho: np.ndarray) -> np.ndarray:
    out = phase.copy()
    # spine: unwrap along axis 0 at the column holding the density maximum
    spine_col = int(np.unravel_index(np.argmax(rho), rho.shape)[1])
    out[:, spine_col] = np.unwrap(phase[:, spine_col])
    two_pi = 2.0 * np.pi
    rows = np.unwrap(phase, axis=1)
    offsets = out[:, spine_col] - rows[:, spine_col]
    offsets = two_pi * np.round(offsets / two_pi)
    out = rows + offsets[:, None]
    if mask.any():
        nearest = ndimage.distance_transform_edt(mask, return_distances=False, return_indices=True)
        out[mask] = out[tuple(n[mask] for n in nearest)]
    return out


def _detect_vortices(phase: np.ndarray, mask: np.ndarray) -> tuple[tuple[int, int, int], ...]:
    """Integer winding of the wrapped phase around each plaquette."""

    def wrap(d):
        return (d + np.pi) % (2 * np.pi) - np.pi

    d_right = wrap(np.diff(phase, axis=1))  # (n0, n1-1)
    d_down = wrap(np.diff(phase, axis=0))  # (n0-1, n1)
    circ = (
        d_right[:-1, :]
        + d_down[:, 1:]
        - d_right[1:, :]
        - d_down[:, :-1]
    )
    charge = np.round(circ / (2 * np.pi)).astype(int)
    hits = np.argwhere(charge != 0)
    return tuple((int(i), int(j), int(charge[i, j])) for i, j in hits)


def decompose(psi: WaveFunction, eps_node: float = DEFAULT_EPS_NODE) -> MadelungFields:
    """Split psi into (R, S, rho) with a node mask at rho < eps_node * max(rho).

    S keeps the raw branch of the phase at the density maximum (no global
    re-anchoring) so that time differences of S across solver slices carry
    the local energy.  Masked points receive S from their nearest unmasked
    neighbour; they are flagged and never enter residual norms.
    """
    if not np.all(np.isfinite(psi.values)):
        raise FieldError("wavefunction contains non-finite values")
    rho = psi.rho
    peak = float(np.max(rho))
    if peak <= 0.0:
        raise DecompositionError("state is identically zero")
    threshold = eps_node * peak
    mask = rho < threshold
    if mask.all():
        raise DecompositionError("entire field lies below the node threshold")

    R = np.sqrt(rho)
    phase = np.angle(psi.values)
    if psi.grid.ndim == 1:
        unwrapped = _unwrap_masked_1d(phase, mask)
        vortices: tuple = ()
    else:
        unwrapped = _unwrap_masked_2d(phase, mask, rho)
        vortices = _detect_vortices(phase, mask)
    S = psi.units.hbar * unwrapped

    g, t = psi.grid, psi.time
    return MadelungFields(
        R=RealField(R, g, t),
        S=RealField(S, g, t),
        rho=RealField(rho, g, t),
        node_mask=mask,
        psi=psi,
        eps_node=eps_node,
        vortices=vortices,
    )


# ---------------------------------------------------------------------------
# log-derivative ratio fields
# ---------------------------------------------------------------------------

def log_derivative_ratio(psi: WaveFunction, mask: np.ndarray, axis: int, order: int) -> np.ndarray:
    """(d^order psi / d x_axis^order) / psi with zero fill on the mask."""
    der = _derivative(psi.values, psi.grid, axis, order)
    out = np.zeros_like(der)
    np.divide(der, psi.values, out=out, where=~mask)
    out[mask] = 0.0
    return out


def momentum_ratio(psi: WaveFunction, mask: np.ndarray, axis: int = 0) -> np.ndarray:
    """Complex field -i hbar (grad psi)/psi: Re = grad S, Im = -hbar grad R/R."""
    return -1j * psi.units.hbar * log_derivative_ratio(psi, mask, axis, 1)


def p_bohm_values(fields: MadelungFields) -> np.ndarray:
    """grad S per axis via the ratio route, stacked on a leading axis."""
    g = fields.grid
    return np.stack(
        [momentum_ratio(fields.psi, fields.node_mask, ax).real for ax in range(g.ndim)]
    )


def osmotic_values(fields: MadelungFields) -> np.ndarray:
    """hbar grad R / R per axis (= minus the imaginary part of the ratio)."""
    g = fields.grid
    return np.stack(
        [-momentum_ratio(fields.psi, fields.node_mask, ax).imag for ax in range(g.ndim)]
    )


def quantum_potential(fields: MadelungFields) -> RealField:
    """Q = -(hbar^2/2m) (lap R)/R off-mask; zero sentinel on the mask.

    Computed per axis as (Re[-hbar^2 psi''/psi] - (grad S)^2) / 2m_axis so
    that two-particle grids weigh each direction by its own mass.
    """
    psi, mask = fields.psi, fields.node_mask
    units = fields.units
    q = np.zeros(fields.grid.shape)
    for ax in range(fields.grid.ndim):
        u = -(units.hbar**2) * log_derivative_ratio(psi, mask, ax, 2)
        grad_s = momentum_ratio(psi, mask, ax).real
        q += (u.real - grad_s**2) / (2.0 * units.mass_of(ax))
    q[mask] = 0.0
    return RealField(q, fields.grid, fields.time)


def kinetic_energy_density(fields: MadelungFields) -> RealField:
    """(grad S)^2 / 2m per unit probability (the flow kinetic energy)."""
    units = fields.units
    ke = np.zeros(fields.grid.shape)
    for ax in range(fields.grid.ndim):
        grad_s = momentum_ratio(fields.psi, fields.node_mask, ax).real
        ke += grad_s**2 / (2.0 * units.mass_of(ax))
    ke[fields.node_mask] = 0.0
    return RealField(ke, fields.grid, fields.time)


def _align_branch(s_a: np.ndarray, s_b: np.ndarray, mask: np.ndarray, hbar: float) -> np.ndarray:
    """Shift s_b by 2 pi hbar multiples so it tracks s_a at the anchor."""
    ok = ~mask
    anchor = np.argwhere(ok)[0] if ok.any() else None
    if anchor is None:
        return s_b
    idx = tuple(anchor)
    period = 2.0 * np.pi * hbar
    k = np.round((s_b[idx] - s_a[idx]) / period)
    return s_b - k * period


def velocities(
    fields: MadelungFields, prev: MadelungFields, dt: float | None = None
) -> VelocityFields:
    """Flow fields centered at the midpoint of two decomposition slices.

    Spatial quantities are slice-averaged and the local energy comes from
    the branch-aligned difference of S, so every output is second-order
    accurate at the midpoint time.
    """
    if not fields.grid.same_lattice(prev.grid):
        raise GridError("velocity slices live on different grids")
    if dt is None:
        dt = fields.time - prev.time
    if dt == 0:
        raise ValueError("slices must be separated in time")

    mask = fields.node_mask | prev.node_mask
    units = fields.units
    hbar = units.hbar

    p_next = p_bohm_values(fields)
    p_prev = p_bohm_values(prev)
    p_bohm = 0.5 * (p_next + p_prev)
    osm_next = osmotic_values(fields)
    osm_prev = osmotic_values(prev)
    osmotic = 0.5 * (osm_next + osm_prev)

    masses = np.array([units.mass_of(ax) for ax in range(fields.grid.ndim)])
    shape = (fields.grid.ndim,) + (1,) * fields.grid.ndim
    v_current = p_bohm / masses.reshape(shape)
    v_osmotic = osmotic / masses.reshape(shape)

    s_next = _align_branch(prev.S.values, fields.S.values, mask, hbar)
    e_bohm = -(s_next - prev.S.values) / dt
    e_bohm[mask] = 0.0

    p_bohm = p_bohm.copy()
    p_bohm[:, mask] = 0.0
    v_current = v_current.copy()
    v_current[:, mask] = 0.0
    v_osmotic = v_osmotic.copy()
    v_osmotic[:, mask] = 0.0

    t_mid = 0.5 * (fields.time + prev.time)
    return VelocityFields(
        p_bohm=p_bohm,
        v_current=v_current,
        v_osmotic=v_osmotic,
        e_bohm=RealField(e_bohm, fields.grid, t_mid),
        node_mask=mask,
        grid=fields.grid,
        units=units,
        time=t_mid,
    )
