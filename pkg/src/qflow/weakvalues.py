"""Weak values of momentum and kinetic energy at position post-selection.

For post-selection on position x, the momentum weak value is the complex
field

    W_P(x) = (-i hbar grad psi)/psi = grad S - i hbar (grad rho)/(2 rho),

real part the local (Bohm) momentum, imaginary part the osmotic momentum.
Similarly Re W_{P^2} = (grad S)^2 - hbar^2 (lap R)/R.  Each field is
computed two ways: the direct ratio (the arbiter for signs) and the
amplitude/phase split differentiated with local stencils; the largest
off-mask disagreement is recorded on the result.

Every weak field carries its probability-weighted companion
rho * Re W (e.g. hbar Im[psi* grad psi]),
which stays bounded through nodes and is what expectation values
integrate, so diverging weak values near zeros never destabilize means.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (
    DIRICHLET,
    PERIODIC,
    Grid,
    RealField,
    WaveFunction,
    _derivative,
    _fd_derivative,
    _spectral_derivative,
    integrate_values,
)
from .madelung import DEFAULT_EPS_NODE, collar_mask, decompose, log_derivative_ratio


@dataclass(frozen=True)
class WeakMomentumField:
    """Momentum weak value along one axis: ratio route plus split route."""

    real_part: RealField  # grad_j S
    imag_part: RealField  # -hbar (grad_j rho) / (2 rho)
    density_real: np.ndarray  # rho * real_part, bounded through nodes
    node_mask: np.ndarray
    axis: int
    route_disagreement: float


@dataclass(frozen=True)
class WeakKineticField:
    """Re of the momentum-squared weak value: (grad S)^2 - hbar^2 lap R / R."""

    real_part: RealField
    density_real: np.ndarray  # Re[psi* (-hbar^2 lap psi)], bounded
    node_mask: np.ndarray
    route_disagreement: float


def _smooth_gradient(values: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Gradient for globally smooth scalar data (rho-like fields).

    On sine lattices the density is periodic rather than odd, so it is
    differentiated with the plain FFT; finite-difference lattices keep
    their stencils.
    """
    if grid.boundary in (PERIODIC, DIRICHLET):
        return _spectral_derivative(values, axis, grid.axes[axis].dx, 1)
    return _fd_derivative(values, axis, grid.axes[axis].dx, 1)


def _local_derivative(values: np.ndarray, grid: Grid, axis: int, order: int) -> np.ndarray:
    """Stencil derivative for fields that need not wrap (S-like data)."""
    return _fd_derivative(values, axis, grid.axes[axis].dx, order)


def weak_momentum(
    psi: WaveFunction, axis: int = 0, eps_node: float = DEFAULT_EPS_NODE
) -> WeakMomentumField:
    """Momentum weak value along ``axis`` with the split-route cross-check."""
    fields = decompose(psi, eps_node)  # raises on an all-masked field
    mask = fields.node_mask
    hbar = psi.units.hbar

    ratio = -1j * hbar * log_derivative_ratio(psi, mask, axis, 1)
    real = ratio.real.copy()
    imag = ratio.imag.copy()
    real[mask] = 0.0
    imag[mask] = 0.0

    # split route: derivatives of the decomposed fields
    rho = fields.rho.values
    grad_rho = _smooth_gradient(rho, psi.grid, axis)
    imag_split = np.zeros_like(imag)
    np.divide(-hbar * grad_rho, 2.0 * rho, out=imag_split, where=~mask)
    real_split = _local_derivative(fields.S.values, psi.grid, axis, 1)

    # the split route differentiates mask-filled data; keep a stencil collar
    off = ~collar_mask(mask, 2)
    disagreement = float(
        max(
            np.max(np.abs(real[off] - real_split[off]), initial=0.0),
            np.max(np.abs(imag[off] - imag_split[off]), initial=0.0),
        )
    )

    dpsi = _derivative(psi.values, psi.grid, axis, 1)
    density = hbar * np.imag(np.conj(psi.values) * dpsi)

    g, t = psi.grid, psi.time
    return WeakMomentumField(
        real_part=RealField(real, g, t),
        imag_part=RealField(imag, g, t),
        density_real=density,
        node_mask=mask,
        axis=axis,
        route_disagreement=disagreement,
    )


def weak_p_squared(
    psi: WaveFunction, eps_node: float = DEFAULT_EPS_NODE
) -> WeakKineticField:
    """Real part of the momentum-squared weak value, summed over axes."""
    fields = decompose(psi, eps_node)
    mask = fields.node_mask
    hbar = psi.units.hbar
    g = psi.grid

    real = np.zeros(g.shape)
    lap_psi = np.zeros(g.shape, dtype=complex)
    for ax in range(g.ndim):
        ratio2 = log_derivative_ratio(psi, mask, ax, 2)
        real += (-(hbar**2) * ratio2).real
        lap_psi += _derivative(psi.values, g, ax, 2)
    real[mask] = 0.0

    # split route: (grad S)^2 - hbar^2 (lap R)/R with local stencils
    split = np.zeros(g.shape)
    R = fields.R.values
    for ax in range(g.ndim):
        grad_s = _local_derivative(fields.S.values, g, ax, 1)
        lap_r = _local_derivative(R, g, ax, 2)
        term = np.zeros(g.shape)
        np.divide(lap_r, R, out=term, where=~mask)
        split += grad_s**2 - hbar**2 * term
    off = ~collar_mask(mask, 2)
    disagreement = float(np.max(np.abs(real[off] - split[off]), initial=0.0))

    density = np.real(np.conj(psi.values) * (-(hbar**2)) * lap_psi)
    return WeakKineticField(
        real_part=RealField(real, g, psi.time),
        density_real=density,
        node_mask=mask,
        route_disagreement=disagreement,
    )


def expectation_from_weak(
    psi: WaveFunction, weak: WeakMomentumField | WeakKineticField
) -> float:
    """Probability-weighted mean of the real part of a weak field.

    Uses the bounded companion density rho * Re W, so points where the
    weak value diverges (and rho vanishes) contribute their true, finite
    weight.
    """
    return integrate_values(weak.density_real, psi.grid)


def osmotic_integral(psi: WaveFunction) -> float:
    """Integral of rho times the osmotic part, = -(hbar/2) integral of grad rho."""
    rho = psi.rho
    grad_rho = _smooth_gradient(rho, psi.grid, 0)
    return integrate_values(-0.5 * psi.units.hbar * grad_rho, psi.grid)
