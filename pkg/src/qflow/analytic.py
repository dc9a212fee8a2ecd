"""Closed-form stationary systems packaged as reusable test oracles.

Each case bundles a state constructor, its potential, the closed-form
expectations (energy, quantum-potential profile, local momentum, momentum
flux) as callables, a valid-region predicate and per-check tolerances.
``run_case`` pushes the state through the decomposition/flow machinery and
scores every expectation, which is also what the CLI exposes via
``--case``/``--check``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import Grid, RealField, UnitSystem, WaveFunction, gradient_values, integrate_values
from .madelung import collar_mask, decompose, quantum_potential, velocities
from .solver import (
    BOX,
    COULOMB_RADIAL,
    CUSTOM,
    DELTA_WELL,
    Potential,
    coupled_potential,
    eigenvalue,
    prepare_eigenstate,
)
from .weakvalues import weak_p_squared


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    target: float
    tol: float

    @property
    def passed(self) -> bool:
        return abs(self.value - self.target) <= self.tol

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "target": self.target,
            "tol": self.tol,
            "passed": bool(self.passed),
        }


@dataclass(frozen=True)
class OracleCase:
    """A closed-form system with machine-checkable expectations."""

    name: str
    summary: str
    units: UnitSystem
    grid: Grid
    potential: Potential
    state: WaveFunction
    energy: float | None
    expected_q: Callable[[np.ndarray], np.ndarray] | None
    valid_region: np.ndarray
    tolerances: dict[str, float]
    checks: Callable[["OracleCase"], list[CheckResult]]
    notes: tuple[str, ...] = ()

    def run(self) -> list[CheckResult]:
        return self.checks(self)


def _stationary_pair(case: OracleCase, dt: float = 1e-4):
    """Two analytic time slices of a stationary state, phase-rotated."""
    e = case.energy
    hbar = case.units.hbar
    psi0 = case.state
    minus = psi0.at_time(psi0.time - dt, np.exp(1j * e * dt / hbar))
    plus = psi0.at_time(psi0.time + dt, np.exp(-1j * e * dt / hbar))
    return decompose(minus), decompose(plus)


def _region(case: OracleCase) -> np.ndarray:
    fields = decompose(case.state)
    return case.valid_region & ~collar_mask(fields.node_mask, 2)


# ---------------------------------------------------------------------------
# box
# ---------------------------------------------------------------------------

def case_box(n: int = 1, a: float = 1.0, units: UnitSystem | None = None,
             points: int = 256) -> OracleCase:
    """Infinite well eigenstate: flat quantum potential, particle at rest.

    Q is the constant n^2 pi^2 hbar^2 / (2 m a^2) = E_n, the local momentum
    vanishes, and the whole bound energy sits in the quantum potential.
    """
    if n < 1:
        raise ValueError("box levels are indexed from n = 1")
    units = units or UnitSystem()
    grid = Grid.dirichlet(points, 0.0, a)
    V = Potential(BOX, {"a": a})
    psi = prepare_eigenstate(V, n, grid, units)
    e_n = eigenvalue(V, n, units)

    x = grid.coordinates(0)
    dx = grid.dx
    # stay 2 dx away from the walls and from every interior node
    nodes = np.array([a * k / n for k in range(n + 1)])
    region = np.ones(grid.shape, dtype=bool)
    for x0 in nodes:
        region &= np.abs(x - x0) > 2 * dx

    tol = {"Q": 1e-6, "P_B": 1e-10, "T0j": 1e-10, "E_B": 1e-8}

    def checks(case: OracleCase) -> list[CheckResult]:
        sel = _region(case)
        f_prev, f_next = _stationary_pair(case)
        vel = velocities(f_next, f_prev)
        q = quantum_potential(decompose(case.state))
        rho = case.state.rho
        out = [
            CheckResult("Q_flat", float(np.max(np.abs(q.values[sel] - e_n))), 0.0, tol["Q"]),
            CheckResult("P_B_zero", float(np.max(np.abs(vel.p_bohm[0][sel]))), 0.0, tol["P_B"]),
            CheckResult(
                "T0j_zero",
                float(np.max(np.abs(rho[sel] * vel.p_bohm[0][sel]))),
                0.0,
                tol["T0j"],
            ),
            CheckResult(
                "E_B", float(np.max(np.abs(vel.e_bohm.values[sel] - e_n))), 0.0, tol["E_B"]
            ),
        ]
        return out

    return OracleCase(
        name=f"box-n{n}",
        summary=(
            f"infinite well, level n={n}, a={a}: Q = n^2 pi^2 hbar^2/(2 m a^2)"
            f" = {e_n:.7f} at every interior point; momentum fields vanish"
        ),
        units=units,
        grid=grid,
        potential=V,
        state=psi,
        energy=e_n,
        expected_q=lambda xx: np.full_like(np.asarray(xx, dtype=float), e_n),
        valid_region=region,
        tolerances=tol,
        checks=checks,
    )


# ---------------------------------------------------------------------------
# narrow attractive well
# ---------------------------------------------------------------------------

def case_delta_well(alpha: float = 1.0, units: UnitSystem | None = None,
                    points: int = 256, half_width: float = 12.8) -> OracleCase:
    """Contact-well bound state sqrt(alpha) e^{-alpha |x|}.

    The state is real, so the particle is at rest and the kinetic-energy
    weak value equals the (negative) bound energy away from the cusp:
    Re<P^2>_W / 2m = -hbar^2 alpha^2 / 2m.
    """
    units = units or UnitSystem()
    grid = Grid.line(points, -half_width, half_width)
    w = 4.0 * grid.dx
    V = Potential(DELTA_WELL, {"alpha": alpha, "width": w})
    psi = prepare_eigenstate(V, 1, grid, units)
    e_bound = eigenvalue(V, 1, units)

    x = grid.coordinates(0)
    region = np.abs(x) > 3.0 * w

    tol = {"P2": 1e-5, "P_B": 1e-10, "T0j": 1e-10}

    def checks(case: OracleCase) -> list[CheckResult]:
        sel = _region(case)
        w2 = weak_p_squared(case.state)
        fields = decompose(case.state)
        from .madelung import p_bohm_values

        pb = p_bohm_values(fields)[0]
        rho = case.state.rho
        return [
            CheckResult(
                "P2_weak_over_2m",
                float(np.max(np.abs(w2.real_part.values[sel] / (2 * case.units.mass) - e_bound))),
                0.0,
                tol["P2"],
            ),
            CheckResult("P_B_zero", float(np.max(np.abs(pb[sel]))), 0.0, tol["P_B"]),
            CheckResult(
                "T0j_zero", float(np.max(np.abs(rho[sel] * pb[sel]))), 0.0, tol["T0j"]
            ),
        ]

    return OracleCase(
        name=f"delta-well-a{alpha:g}",
        summary=(
            f"contact well alpha={alpha}: bound energy -hbar^2 alpha^2/2m = {e_bound};"
            " all of it quantum-potential energy; checked off-cusp (|x| > 3w)"
        ),
        units=units,
        grid=grid,
        potential=V,
        state=psi,
        energy=e_bound,
        expected_q=lambda xx: np.full_like(np.asarray(xx, dtype=float), e_bound),
        valid_region=region,
        tolerances=tol,
        checks=checks,
    )


# ---------------------------------------------------------------------------
# hydrogen 1s (reduced radial problem)
# ---------------------------------------------------------------------------

def case_hydrogen_1s(mu: float = 1.0, e2: float = 1.0, points: int = 4096,
                     r_max: float = 20.0) -> OracleCase:
    """Ground state of the Coulomb problem on the reduced radial line.

    With b = mu e^2 / hbar^2: Q(r) = e^2/r - mu e^4/(2 hbar^2), the total
    E = Q + V is flat at -mu e^4/(2 hbar^2), and the quantum force cancels
    the Coulomb force pointwise.
    """
    units = UnitSystem(hbar=1.0, mass=mu, couplings={"e2": e2})
    grid = Grid.radial(points, r_max)
    V = Potential(COULOMB_RADIAL, {"e2": e2})
    psi = prepare_eigenstate(V, 1, grid, units)
    e_ground = eigenvalue(V, 1, units)
    b = mu * e2 / units.hbar**2

    r = grid.coordinates(0)
    region = (r >= 0.5) & (r <= 10.0)

    def q_expected(rr):
        return e2 / np.asarray(rr) - mu * e2**2 / (2.0 * units.hbar**2)

    tol = {"Q": 1e-6, "E": 1e-6, "force": 1e-6}

    def checks(case: OracleCase) -> list[CheckResult]:
        sel = _region(case)
        q = quantum_potential(decompose(case.state))
        vvals = case.potential.evaluate(case.grid, case.units)
        total = q.values + vvals
        grad_q = gradient_values(q.values, case.grid)
        grad_v = gradient_values(vvals, case.grid)
        return [
            CheckResult(
                "Q_profile",
                float(np.max(np.abs(q.values[sel] - q_expected(r[sel])))),
                0.0,
                tol["Q"],
            ),
            CheckResult(
                "E_total_flat",
                float(np.max(np.abs(total[sel] - e_ground))),
                0.0,
                tol["E"],
            ),
            CheckResult(
                "force-balance",
                float(np.max(np.abs(grad_q[sel] + grad_v[sel]))),
                0.0,
                tol["force"],
            ),
        ]

    return OracleCase(
        name="hydrogen-1s",
        summary=(
            f"Coulomb ground state (mu={mu}, e2={e2}, b={b:g}): Q(r) = e^2/r + E,"
            f" E = -mu e^4/(2 hbar^2) = {e_ground}; quantum force balances the"
            " Coulomb force on 0.5 <= r <= 10"
        ),
        units=units,
        grid=grid,
        potential=V,
        state=psi,
        energy=e_ground,
        expected_q=q_expected,
        valid_region=region,
        tolerances=tol,
        checks=checks,
        notes=("state stored as the reduced radial function u(r) = r R(r)",),
    )


# ---------------------------------------------------------------------------
# entangled two-body Gaussian
# ---------------------------------------------------------------------------

def case_entangled_gaussian(
    coupling: float = 0.3,
    sigma: float = 1.0,
    units: UnitSystem | None = None,
    points: int = 128,
    half_width: float = 12.0,
) -> OracleCase:
    """Correlated two-particle Gaussian exp(-(x1^2+x2^2)/4 sigma^2 - c x1 x2).

    For c = 0 the quantum potential splits into single-particle pieces; for
    c != 0 the mixed derivative of Q is the constant -4 hbar^2 a c / m
    (a = 1/4 sigma^2), the signature that the pair shares a single
    delocalized energy term.  The matching stationary potential is read off
    the inverse construction V = E0 - Q, with E0 fixed by V(0,0) = 0.
    """
    units = units or UnitSystem()
    a = 1.0 / (4.0 * sigma**2)
    if abs(coupling) >= 2.0 * a:
        raise ValueError(
            f"|coupling| must stay below 1/(2 sigma^2) = {2 * a:g} for normalizability"
        )
    grid = Grid.periodic_2d(points, -half_width, half_width, points, -half_width, half_width)
    x1, x2 = grid.meshgrid()
    psi_vals = np.exp(-a * (x1**2 + x2**2) - coupling * x1 * x2).astype(complex)
    psi_vals /= math.sqrt(integrate_values(np.abs(psi_vals) ** 2, grid))
    psi = WaveFunction(psi_vals, grid, units)

    hbar, m = units.hbar, units.mass
    e0 = 2.0 * hbar**2 * a / m

    def q_expected(y1, y2):
        return -(hbar**2) / (2 * m) * (
            -4.0 * a + (2 * a * y1 + coupling * y2) ** 2 + (2 * a * y2 + coupling * y1) ** 2
        )

    V = coupled_potential(lambda y1, y2: e0 - q_expected(y1, y2), name="inverse-gaussian")
    cross = -4.0 * hbar**2 * a * coupling / m

    region = (np.abs(x1) <= 3.0) & (np.abs(x2) <= 3.0)
    tol = {"Q_cross": 1e-6, "separability": 1e-8, "qhj": 1e-6}

    def checks(case: OracleCase) -> list[CheckResult]:
        sel = _region(case)
        fields = decompose(case.state)
        q = quantum_potential(fields)
        from .grid import _fd_derivative

        dq1 = _fd_derivative(q.values, 0, grid.axes[0].dx, 1)
        dq12 = _fd_derivative(dq1, 1, grid.axes[1].dx, 1)
        results = [
            CheckResult(
                "Q_cross_derivative",
                float(np.max(np.abs(dq12[sel] - cross))),
                0.0,
                tol["Q_cross"],
            ),
            CheckResult(
                "Q_profile",
                float(np.max(np.abs(q.values[sel] - q_expected(x1[sel], x2[sel])))),
                0.0,
                tol["qhj"],
            ),
        ]
        # stationary construction: E0 = Q + V pointwise, i.e. the two-body
        # energy balance holds on the valid region
        vvals = case.potential.evaluate(grid, units)
        results.append(
            CheckResult(
                "stationary_balance",
                float(np.max(np.abs(q.values[sel] + vvals[sel] - e0))),
                0.0,
                tol["qhj"],
            )
        )
        return results

    return OracleCase(
        name=f"entangled-gaussian-c{coupling:g}",
        summary=(
            f"two-body Gaussian (sigma={sigma}, c={coupling}): mixed derivative of Q"
            f" equals {cross:g}; c=0 splits Q into independent one-body terms"
        ),
        units=units,
        grid=grid,
        potential=V,
        state=psi,
        energy=e0,
        expected_q=None,
        valid_region=region,
        tolerances=tol,
        checks=checks,
    )


def separability_gap(case: OracleCase) -> float:
    """Max |Q(x1,x2) - Q1(x1) - Q2(x2)| over the valid region.

    Q1, Q2 come from the corresponding one-body Gaussians, so a product
    state yields zero and any coupling leaves a finite gap.
    """
    grid = case.grid
    fields = decompose(case.state)
    q2d = quantum_potential(fields).values

    # one-body profiles from the slice through the partner origin, which is
    # the bare one-body Gaussian for every coupling (the cross term vanishes
    # at x2 = 0); keeps the comparison numerical end-to-end
    ax = grid.axes[0]
    g1 = Grid.periodic(ax.n, ax.x_min, ax.x_max)
    mid = np.argmin(np.abs(g1.coordinates(0)))
    psi_slice = case.state.values[:, mid]
    psi_slice = psi_slice / np.sqrt(np.sum(np.abs(psi_slice) ** 2) * g1.dx)
    one_body = WaveFunction(psi_slice.astype(complex), g1, case.units)
    q1 = quantum_potential(decompose(one_body)).values

    gap = q2d - q1[:, None] - q1[None, :]
    sel = _region(case)
    return float(np.max(np.abs(gap[sel])))


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

CASE_BUILDERS: dict[str, Callable[..., OracleCase]] = {
    "box": case_box,
    "delta-well": case_delta_well,
    "hydrogen-1s": case_hydrogen_1s,
    "entangled-gaussian": case_entangled_gaussian,
}


def build_case(name: str, **kwargs) -> OracleCase:
    if name not in CASE_BUILDERS:
        raise KeyError(f"unknown oracle case {name!r}; known: {sorted(CASE_BUILDERS)}")
    return CASE_BUILDERS[name](**kwargs)


def list_cases() -> list[str]:
    return sorted(CASE_BUILDERS)
