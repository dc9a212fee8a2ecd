"""Noncommutative phase space: quasiprobability distribution, star products,
bracket evolution, and projections back to configuration space.

Lattice conventions.  The x-axis comes from a periodic Grid (sine grids are
odd-extended onto their periodic double first); the p-axis is its exact
Fourier dual: n points with dp = 2 pi hbar / (n dx), so transforms
round-trip losslessly.  The distribution is

    F(x, p) = (1/2 pi hbar) Integral dy conj(psi)(x - y/2) psi(x + y/2)
              exp(i y p / hbar),

evaluated on the lattice with y running over n lags of size dx and the
half-lattice points supplied by exact spectral upsampling of psi.  The two
unpaired end lags are combined symmetrically, which keeps F real to
round-off and the position marginal exact by construction.

Star products come in two evaluators:

* integral form (production): symbols map to operator kernels through the
  discrete Weyl transform, compose by matrix multiplication, and map back.
  Exact for symbols band-limited to about half the lattice Nyquist in each
  direction (Gaussians on sensible grids), and associative to round-off.
* terminated series (oracle): for polynomial symbols the bidifferential
  series ends after finitely many terms, giving exact algebra such as
  x*p - p*x = i hbar.  Polynomials are represented by PhasePolynomial.

Time evolution uses the bracket-splitting propagator: the kinetic shear is
exact in the x-spectral representation, the potential kick exact in the
p-spectral representation, composed as Strang steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import fft as sfft

from .grid import (
    DIRICHLET,
    PERIODIC,
    Grid,
    GridError,
    RealField,
    UnitSystem,
    WaveFunction,
    grid_double,
    integrate_values,
)
from .madelung import DEFAULT_EPS_NODE
from .solver import Potential, SolverError


class PhaseSpaceError(ValueError):
    pass


# ---------------------------------------------------------------------------
# lattice
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymplecticGrid:
    """x lattice plus its Fourier-dual momentum lattice."""

    x_grid: Grid
    hbar: float

    def __post_init__(self):
        if self.x_grid.boundary != PERIODIC or self.x_grid.ndim != 1:
            raise PhaseSpaceError("phase space needs a 1D periodic x lattice")

    @classmethod
    def for_state(cls, psi: WaveFunction) -> "SymplecticGrid":
        g = psi.grid
        if g.boundary == DIRICHLET:
            g = grid_double(g)
        return cls(g, psi.units.hbar)

    @property
    def n(self) -> int:
        return self.x_grid.axes[0].n

    @property
    def dx(self) -> float:
        return self.x_grid.dx

    @property
    def x(self) -> np.ndarray:
        return self.x_grid.coordinates(0)

    @property
    def dp(self) -> float:
        return 2.0 * np.pi * self.hbar / (self.n * self.dx)

    @property
    def p(self) -> np.ndarray:
        """Momentum lattice, ascending (fftshifted dual frequencies)."""
        return self.hbar * 2.0 * np.pi * np.fft.fftshift(np.fft.fftfreq(self.n, self.dx))

    @property
    def cell(self) -> float:
        return self.dx * self.dp

    def same_lattice(self, other: "SymplecticGrid") -> bool:
        return self.x_grid.same_lattice(other.x_grid) and self.hbar == other.hbar

    def spec(self) -> dict:
        return {
            "x": self.x_grid.spec(),
            "hbar": self.hbar,
            "n_p": self.n,
            "dp": self.dp,
            "p_min": float(self.p[0]),
        }


@dataclass(frozen=True)
class Symbol:
    """Phase-space function a(x, p) on a symplectic lattice (x-major)."""

    values: np.ndarray
    sgrid: SymplecticGrid

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (self.sgrid.n, self.sgrid.n):
            raise PhaseSpaceError(f"symbol shape {vals.shape} does not match lattice")
        if not np.all(np.isfinite(vals)):
            raise PhaseSpaceError("symbol contains non-finite values")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class PhaseSpaceDistribution:
    """Real quasiprobability F(x, p) with unit total mass."""

    values: np.ndarray  # real, shape (n_x, n_p), p ascending
    sgrid: SymplecticGrid
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @classmethod
    def from_complex(
        cls, values: np.ndarray, sgrid: SymplecticGrid, time: float = 0.0,
        imag_tol: float = 1e-12, norm_tol: float = 1e-8,
    ) -> "PhaseSpaceDistribution":
        scale = float(np.max(np.abs(values))) or 1.0
        imag = float(np.max(np.abs(values.imag))) / scale
        if imag > imag_tol:
            raise PhaseSpaceError(f"imaginary residue {imag:.3e} exceeds {imag_tol:.0e}")
        real = values.real
        total = float(np.sum(real) * sgrid.cell)
        if abs(total - 1.0) > norm_tol:
            raise PhaseSpaceError(f"distribution mass {total!r} is not 1 within {norm_tol:.0e}")
        return cls(real, sgrid, time)

    def marginal_x(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.sgrid.dp

    def marginal_p(self) -> np.ndarray:
        return self.values.sum(axis=0) * self.sgrid.dx

    def total(self) -> float:
        return float(np.sum(self.values) * self.sgrid.cell)


# ---------------------------------------------------------------------------
# spectral upsampling and the two-point transform
# ---------------------------------------------------------------------------

def _upsample2(values: np.ndarray, axis: int = 0) -> np.ndarray:
    """Exact trigonometric interpolation onto a twice-finer lattice."""
    v = np.moveaxis(np.asarray(values, dtype=complex), axis, 0)
    n = v.shape[0]
    spec = sfft.fft(v, axis=0)
    out = np.zeros((2 * n,) + v.shape[1:], dtype=complex)
    half = n // 2
    out[:half] = spec[:half]
    out[half] = 0.5 * spec[half]
    out[2 * n - half] = 0.5 * spec[half]
    out[2 * n - half + 1 :] = spec[half + 1 :]
    fine = sfft.ifft(out, axis=0) * 2.0
    return np.moveaxis(fine, 0, axis)


def _lag_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Fine-lattice gather indices (2i -+ j) mod 2n for lag-major layout."""
    i = np.arange(n)[:, None]
    j = sfft.fftfreq(n, 1.0 / n).astype(int)[None, :]  # 0..n/2-1, -n/2..-1
    left = (2 * i - j) % (2 * n)
    right = (2 * i + j) % (2 * n)
    return left, right


def two_point_transform(
    f: np.ndarray, g: np.ndarray, sgrid: SymplecticGrid
) -> np.ndarray:
    """(1/2 pi hbar) Integral dy conj(f)(x-y/2) g(x+y/2) e^{i y p/hbar}.

    Returns a complex (n_x, n_p) array with p ascending.  The two end lags
    (y = +-L/2) share one spectral slot and are averaged, which pairs them
    conjugate-symmetrically.
    """
    n = sgrid.n
    f_fine = _upsample2(f)
    g_fine = _upsample2(g)
    left, right = _lag_indices(n)
    a = np.conj(f_fine[left]) * g_fine[right]
    gT = np.conj(g_fine[left]) * f_fine[right]
    a[:, n // 2] = 0.5 * (a[:, n // 2] + np.conj(gT[:, n // 2]))
    spectrum = sfft.ifft(a, axis=1) * n  # sum_j a_j e^{+2 pi i j k / n}
    spectrum *= sgrid.dx / (2.0 * np.pi * sgrid.hbar)
    return np.fft.fftshift(spectrum, axes=1)


def _state_on_lattice(psi: WaveFunction, sgrid: SymplecticGrid | None) -> tuple[np.ndarray, SymplecticGrid]:
    target = SymplecticGrid.for_state(psi)
    if sgrid is not None and not sgrid.same_lattice(target):
        raise PhaseSpaceError("state does not live on the requested lattice")
    sgrid = sgrid or target
    values = psi.values
    if psi.grid.boundary == DIRICHLET:
        from .grid import _odd_extension

        values = _odd_extension(values, 0) / math.sqrt(2.0)
    return values, sgrid


def wigner_transform(psi: WaveFunction, eps_node: float = DEFAULT_EPS_NODE) -> PhaseSpaceDistribution:
    """Phase-space distribution of a pure state.

    Sine-grid states are odd-extended onto their periodic double (images
    preserve the wall nodes), so every distribution lives on a periodic
    lattice.  The position marginal is exact by construction.
    """
    values, sgrid = _state_on_lattice(psi, None)
    raw = two_point_transform(values, values, sgrid)
    return PhaseSpaceDistribution.from_complex(raw, sgrid, psi.time)


# ---------------------------------------------------------------------------
# polynomial symbols and the terminated series product
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhasePolynomial:
    """Polynomial in (x, p) with exact derivative algebra.

    coeffs maps (i, j) -> coefficient of x^i p^j.
    """

    coeffs: dict = field(default_factory=dict)

    @classmethod
    def x(cls) -> "PhasePolynomial":
        return cls({(1, 0): 1.0})

    @classmethod
    def p(cls) -> "PhasePolynomial":
        return cls({(0, 1): 1.0})

    @classmethod
    def constant(cls, c: complex) -> "PhasePolynomial":
        return cls({(0, 0): c}) if c != 0 else cls({})

    @classmethod
    def from_terms(cls, terms: dict) -> "PhasePolynomial":
        return cls({k: v for k, v in terms.items() if v != 0})

    def __add__(self, other: "PhasePolynomial") -> "PhasePolynomial":
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, 0) + v
        return PhasePolynomial.from_terms(out)

    def __sub__(self, other: "PhasePolynomial") -> "PhasePolynomial":
        return self + other.scale(-1)

    def scale(self, c: complex) -> "PhasePolynomial":
        return PhasePolynomial.from_terms({k: c * v for k, v in self.coeffs.items()})

    def __mul__(self, other: "PhasePolynomial") -> "PhasePolynomial":
        out: dict = {}
        for (i1, j1), v1 in self.coeffs.items():
            for (i2, j2), v2 in other.coeffs.items():
                key = (i1 + i2, j1 + j2)
                out[key] = out.get(key, 0) + v1 * v2
        return PhasePolynomial.from_terms(out)

    def diff_x(self) -> "PhasePolynomial":
        return PhasePolynomial.from_terms(
            {(i - 1, j): i * v for (i, j), v in self.coeffs.items() if i > 0}
        )

    def diff_p(self) -> "PhasePolynomial":
        return PhasePolynomial.from_terms(
            {(i, j - 1): j * v for (i, j), v in self.coeffs.items() if j > 0}
        )

    @property
    def degree(self) -> int:
        if not self.coeffs:
            return 0
        return max(i + j for i, j in self.coeffs)

    def __call__(self, x, p):
        x = np.asarray(x)
        p = np.asarray(p)
        out = np.zeros(np.broadcast(x, p).shape, dtype=complex)
        for (i, j), v in self.coeffs.items():
            out = out + v * x**i * p**j
        return out

    def evaluate(self, sgrid: SymplecticGrid) -> Symbol:
        x = sgrid.x[:, None]
        p = sgrid.p[None, :]
        return Symbol(self(x, p), sgrid)

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(v) <= tol for v in self.coeffs.values())


def _series_terms(a, b, order: int, hbar: float, sgrid: SymplecticGrid | None):
    """Terms of a exp[(i hbar/2)(left-x right-p - left-p right-x)] b."""

    def dx(obj):
        if isinstance(obj, PhasePolynomial):
            return obj.diff_x()
        from .grid import _spectral_derivative

        return _spectral_derivative(obj, 0, sgrid.dx, 1)

    def dp(obj):
        if isinstance(obj, PhasePolynomial):
            return obj.diff_p()
        from .grid import _spectral_derivative

        return _spectral_derivative(obj, 1, sgrid.dp, 1)

    def combine(u, v):
        if isinstance(u, PhasePolynomial) and isinstance(v, PhasePolynomial):
            return u * v
        uu = u.evaluate(sgrid).values if isinstance(u, PhasePolynomial) else u
        vv = v.evaluate(sgrid).values if isinstance(v, PhasePolynomial) else v
        return uu * vv

    for k in range(order + 1):
        pref = (1j * hbar / 2.0) ** k / math.factorial(k)
        # (d_x^{k-j} d_p^j a) (d_p^{k-j} d_x^j b), alternating sign over j
        term = None
        for j in range(k + 1):
            da = a
            for _ in range(k - j):
                da = dx(da)
            for _ in range(j):
                da = dp(da)
            db = b
            for _ in range(k - j):
                db = dp(db)
            for _ in range(j):
                db = dx(db)
            piece = combine(da, db)
            sign = (-1) ** j * math.comb(k, j)
            piece = piece.scale(sign) if isinstance(piece, PhasePolynomial) else sign * piece
            term = piece if term is None else (
                term + piece if isinstance(term, PhasePolynomial) else term + piece
            )
        yield term.scale(pref) if isinstance(term, PhasePolynomial) else pref * term


def star_product_series(
    a, b, order: int | None = None, sgrid: SymplecticGrid | None = None,
    hbar: float | None = None,
):
    """Bidifferential star series truncated at ``order``.

    Exact (the series terminates) when at least one factor is a
    PhasePolynomial and order reaches its degree.  Grid factors are
    differentiated spectrally, so this path expects smooth decaying symbol
    fields.
    """
    if order is None:
        degs = [o.degree for o in (a, b) if isinstance(o, PhasePolynomial)]
        if not degs:
            raise PhaseSpaceError("series order must be given for two grid symbols")
        order = min(degs)
    if order < 0:
        raise PhaseSpaceError("series order must be >= 0")
    for obj in (a, b):
        if isinstance(obj, Symbol):
            raise TypeError("pass raw arrays or PhasePolynomial to the series evaluator")
    grid_factors = [o for o in (a, b) if not isinstance(o, PhasePolynomial)]
    if grid_factors and sgrid is None:
        raise PhaseSpaceError("grid factors need an explicit lattice")
    if hbar is None:
        if sgrid is None:
            raise PhaseSpaceError("give hbar (or a lattice that carries it)")
        hbar = sgrid.hbar

    total = None
    for term in _series_terms(a, b, order, hbar, sgrid):
        total = term if total is None else total + term
    return total


# ---------------------------------------------------------------------------
# integral-form star product through operator kernels
# ---------------------------------------------------------------------------

def symbol_to_kernel(values: np.ndarray, sgrid: SymplecticGrid) -> np.ndarray:
    """Discrete Weyl transform: symbol a(x,p) -> operator kernel K[x1, x2]."""
    n = sgrid.n
    a_half = _upsample2(np.asarray(values, dtype=complex), axis=0)  # (2n, n_p)
    a_nat = np.fft.ifftshift(a_half, axes=1)  # p back to fft order
    profile = sfft.ifft(a_nat, axis=1) * n * sgrid.dp / (2.0 * np.pi * sgrid.hbar)
    i1 = np.arange(n)[:, None]
    i2 = np.arange(n)[None, :]
    return profile[(i1 + i2) % (2 * n), (i1 - i2) % n]


def kernel_to_symbol(kernel: np.ndarray, sgrid: SymplecticGrid) -> np.ndarray:
    """Inverse discrete Weyl transform (anti-diagonal lag transform)."""
    n = sgrid.n
    k_fine = _upsample2(_upsample2(kernel, axis=0), axis=1)  # (2n, 2n)
    i = np.arange(n)[:, None]
    j = sfft.fftfreq(n, 1.0 / n).astype(int)[None, :]
    plus = (2 * i + j) % (2 * n)
    minus = (2 * i - j) % (2 * n)
    lags = k_fine[plus, minus]
    spectrum = sfft.fft(lags, axis=1) * sgrid.dx  # sum_j e^{-2 pi i jk/n}
    return np.fft.fftshift(spectrum, axes=1)


def _as_symbol(obj, sgrid: SymplecticGrid) -> Symbol:
    if isinstance(obj, Symbol):
        return obj
    if isinstance(obj, PhasePolynomial):
        return obj.evaluate(sgrid)
    return Symbol(np.asarray(obj, dtype=complex), sgrid)


def star_product(a, b, sgrid: SymplecticGrid | None = None, order: int | None = None):
    """Noncommutative product of two symbols.

    Polynomial x polynomial pairs go through the terminated series (exact);
    anything involving a lattice symbol goes through the integral form
    (kernel composition), which is exact for band-limited symbols.  A
    polynomial factor against a lattice factor uses the mixed series, which
    also terminates.
    """
    poly_a = isinstance(a, PhasePolynomial)
    poly_b = isinstance(b, PhasePolynomial)
    if poly_a and poly_b:
        hbar = sgrid.hbar if sgrid is not None else 1.0
        result = star_product_series(a, b, order, None, hbar)
        return result.evaluate(sgrid) if sgrid is not None else result
    if poly_a or poly_b:
        if sgrid is None:
            raise PhaseSpaceError("mixed star product needs the lattice")
        aa = a if poly_a else _as_symbol(a, sgrid).values
        bb = b if poly_b else _as_symbol(b, sgrid).values
        out = star_product_series(aa, bb, order, sgrid)
        return Symbol(out, sgrid)
    sa = _as_symbol(a, sgrid) if sgrid is not None else a
    sb = _as_symbol(b, sgrid) if sgrid is not None else b
    if not isinstance(sa, Symbol) or not isinstance(sb, Symbol):
        raise PhaseSpaceError("grid star product needs Symbol operands or a lattice")
    if not sa.sgrid.same_lattice(sb.sgrid):
        raise PhaseSpaceError("star operands live on different lattices")
    g = sa.sgrid
    ka = symbol_to_kernel(sa.values, g)
    kb = symbol_to_kernel(sb.values, g)
    kc = ka @ kb * g.dx
    return Symbol(kernel_to_symbol(kc, g), g)


def moyal_bracket(a, b, sgrid: SymplecticGrid | None = None, order: int | None = None):
    """(a*b - b*a) / (i hbar)."""
    hbar = sgrid.hbar if sgrid is not None else 1.0
    ab = star_product(a, b, sgrid, order)
    ba = star_product(b, a, sgrid, order)
    if isinstance(ab, PhasePolynomial):
        return (ab - ba).scale(1.0 / (1j * hbar))
    return Symbol((ab.values - ba.values) / (1j * ab.sgrid.hbar), ab.sgrid)


def baker_bracket(a, b, sgrid: SymplecticGrid | None = None, order: int | None = None):
    """(a*b + b*a) / 2, the symmetric companion product."""
    ab = star_product(a, b, sgrid, order)
    ba = star_product(b, a, sgrid, order)
    if isinstance(ab, PhasePolynomial):
        return (ab + ba).scale(0.5)
    return Symbol(0.5 * (ab.values + ba.values), ab.sgrid)


def poisson_bracket_values(a_vals: np.ndarray, b_vals: np.ndarray, sgrid: SymplecticGrid) -> np.ndarray:
    from .grid import _spectral_derivative

    dax = _spectral_derivative(a_vals, 0, sgrid.dx, 1)
    dap = _spectral_derivative(a_vals, 1, sgrid.dp, 1)
    dbx = _spectral_derivative(b_vals, 0, sgrid.dx, 1)
    dbp = _spectral_derivative(b_vals, 1, sgrid.dp, 1)
    return dax * dbp - dap * dbx


@dataclass(frozen=True)
class BracketLimitRow:
    hbar: float
    moyal_vs_poisson: float
    baker_vs_product: float


@dataclass(frozen=True)
class BracketLimitReport:
    rows: tuple[BracketLimitRow, ...]
    moyal_slope: float
    baker_slope: float


def classical_limit_check(
    a_fn: Callable, b_fn: Callable, hbars: Sequence[float] = (0.4, 0.2, 0.1, 0.05),
    n: int = 1024,
) -> BracketLimitReport:
    """Bracket deformations against their classical limits over an hbar ladder.

    Each hbar gets its own symmetric lattice (x and p extents scale with
    sqrt(hbar n)) so the symbol functions stay far from every edge.  Both
    deviations shrink like hbar^2 for smooth symbols; the report carries
    the fitted log-log slopes.
    """
    rows = []
    for hbar in hbars:
        extent = math.sqrt(2.0 * np.pi * hbar * n)
        grid = Grid.periodic(n, -extent / 2.0, extent / 2.0)
        sg = SymplecticGrid(grid, hbar)
        x = sg.x[:, None]
        p = sg.p[None, :]
        a_vals = np.asarray(a_fn(x, p), dtype=complex) * np.ones((n, n))
        b_vals = np.asarray(b_fn(x, p), dtype=complex) * np.ones((n, n))
        a_sym, b_sym = Symbol(a_vals, sg), Symbol(b_vals, sg)

        mb = moyal_bracket(a_sym, b_sym).values
        pb = poisson_bracket_values(a_vals, b_vals, sg)
        bb = baker_bracket(a_sym, b_sym).values
        cell = sg.cell
        rows.append(
            BracketLimitRow(
                hbar=hbar,
                moyal_vs_poisson=float(np.sqrt(np.sum(np.abs(mb - pb) ** 2) * cell)),
                baker_vs_product=float(np.sqrt(np.sum(np.abs(bb - a_vals * b_vals) ** 2) * cell)),
            )
        )
    hs = [r.hbar for r in rows]
    fit = lambda ys: float(np.polyfit(np.log(hs), np.log(ys), 1)[0])
    return BracketLimitReport(
        rows=tuple(rows),
        moyal_slope=fit([r.moyal_vs_poisson for r in rows]),
        baker_slope=fit([r.baker_vs_product for r in rows]),
    )


# ---------------------------------------------------------------------------
# bracket evolution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MoyalTrace:
    sgrid: SymplecticGrid
    times: np.ndarray
    samples: tuple[PhaseSpaceDistribution, ...]

    @property
    def final(self) -> PhaseSpaceDistribution:
        return self.samples[-1]


def _potential_callable(V, units: UnitSystem, grid: Grid):
    if isinstance(V, Potential):
        return V.fn(units, grid)
    return V


def evolve_moyal(
    F0: PhaseSpaceDistribution,
    V,
    units: UnitSystem,
    dt: float,
    n_steps: int,
    sample_every: int = 0,
) -> MoyalTrace:
    """Advance F by Strang steps of the bracket evolution dF/dt = {H, F}_MB.

    The kinetic half of the bracket is the exact shear in the x-spectral
    representation; the potential half acts multiplicatively in the
    p-spectral representation through the paired shifts
    V(x + hbar theta/2) - V(x - hbar theta/2).  H must have the form
    p^2/2m + V(x); V is a Potential or a plain callable.
    """
    sg = F0.sgrid
    n = sg.n
    hbar = sg.hbar
    v_fn = _potential_callable(V, units, sg.x_grid)

    x = sg.x
    vvals = np.asarray(v_fn(x), dtype=float)
    guard = abs(dt) * float(np.max(np.abs(vvals))) / hbar
    if guard >= 0.5:
        raise SolverError(
            f"phase-wrap guard: |dt|*max|V|/hbar = {guard:.3g} >= 0.5; shrink dt"
        )

    theta = 2.0 * np.pi * sfft.fftfreq(n, sg.dp)  # conjugate to p
    lam = 2.0 * np.pi * sfft.fftfreq(n, sg.dx)  # conjugate to x
    xc = x[:, None]
    kick_half = np.exp(
        0.5j * dt / hbar * (v_fn(xc + 0.5 * hbar * theta[None, :]) - v_fn(xc - 0.5 * hbar * theta[None, :]))
    )
    p_row = np.fft.fftshift(hbar * lam)  # ascending p values
    shear = np.exp(-1j * dt * lam[:, None] * p_row[None, :] / units.mass)

    keep = sample_every if sample_every > 0 else n_steps
    values = F0.values.astype(complex)
    t = F0.time
    times = [t]
    samples = [F0]

    for step in range(1, n_steps + 1):
        values = sfft.ifft(sfft.fft(values, axis=1) * kick_half, axis=1)
        values = sfft.ifft(sfft.fft(values, axis=0) * shear, axis=0)
        values = sfft.ifft(sfft.fft(values, axis=1) * kick_half, axis=1)
        t = F0.time + step * dt
        if step % keep == 0 or step == n_steps:
            times.append(t)
            samples.append(PhaseSpaceDistribution.from_complex(values, sg, t))

    return MoyalTrace(sg, np.array(times), tuple(samples))


# ---------------------------------------------------------------------------
# energy equation (symmetric bracket) and projections
# ---------------------------------------------------------------------------

def hamiltonian_star_distribution(
    F: PhaseSpaceDistribution, V, units: UnitSystem, conjugate: bool = False
) -> np.ndarray:
    """H * F (or F * H with ``conjugate``) for H = p^2/2m + V(x).

    Exact mixed-representation evaluation: the kinetic factor uses the
    shifted-momentum form in the x-spectral representation, the potential
    the shifted-position form in the p-spectral representation.
    """
    sg = F.sgrid
    hbar = sg.hbar
    n = sg.n
    vals = F.values.astype(complex)
    sign = -1.0 if conjugate else 1.0

    # kinetic: p^2/2m with p -> p -+ i hbar d_x / 2
    lam = 2.0 * np.pi * sfft.fftfreq(n, sg.dx)
    p_row = sg.p[None, :]
    fx = sfft.fft(vals, axis=0)
    shifted = (p_row + sign * 0.5 * hbar * lam[:, None]) ** 2 / (2.0 * units.mass)
    kin = sfft.ifft(fx * shifted, axis=0)

    # potential: V(x +- i hbar d_p / 2)
    v_fn = _potential_callable(V, units, sg.x_grid)
    theta = 2.0 * np.pi * sfft.fftfreq(n, sg.dp)
    fp = sfft.fft(vals, axis=1)
    xc = sg.x[:, None]
    pot = sfft.ifft(fp * v_fn(xc - sign * 0.5 * hbar * theta[None, :]), axis=1)

    return kin + pot


def hamiltonian_moyal_bracket(F, V, units) -> np.ndarray:
    hf = hamiltonian_star_distribution(F, V, units, conjugate=False)
    fh = hamiltonian_star_distribution(F, V, units, conjugate=True)
    return (hf - fh) / (1j * F.sgrid.hbar)


def hamiltonian_baker_bracket(F, V, units) -> np.ndarray:
    hf = hamiltonian_star_distribution(F, V, units, conjugate=False)
    fh = hamiltonian_star_distribution(F, V, units, conjugate=True)
    return 0.5 * (hf + fh)


def energy_kernel(
    psi_minus: WaveFunction, psi_plus: WaveFunction, sgrid: SymplecticGrid | None = None
) -> np.ndarray:
    """Phase-space energy density from the two-way time derivative of psi.

    E(p,x,t) = -i [T(psi, d_t psi) - T(d_t psi, psi)] with T the two-point
    transform; for a stationary state of energy E this is -(2E/hbar) F.
    """
    dt = psi_plus.time - psi_minus.time
    if dt == 0:
        raise PhaseSpaceError("energy kernel needs two distinct time slices")
    vals_minus, sg = _state_on_lattice(psi_minus, sgrid)
    vals_plus, sg2 = _state_on_lattice(psi_plus, sg)
    mid = 0.5 * (vals_plus + vals_minus)
    dpsi = (vals_plus - vals_minus) / dt
    forward = two_point_transform(mid, dpsi, sg)
    backward = two_point_transform(dpsi, mid, sg)
    return -1j * (forward - backward)


def baker_energy_equation(
    F: PhaseSpaceDistribution,
    V,
    units: UnitSystem,
    psi_minus: WaveFunction,
    psi_plus: WaveFunction,
) -> np.ndarray:
    """Residual of the phase-space energy balance.

    The symmetric-bracket energy equation reads

        E(p,x,t) + (2/hbar) {H, F}_BB = 0;

    the factor 2/hbar normalizes the bracket against the two-way derivative
    kernel (stationary states give E = -(2E_n/hbar) F and
    {H,F}_BB = E_n F).  Returns the complex residual field.
    """
    e_kernel = energy_kernel(psi_minus, psi_plus, F.sgrid)
    bb = hamiltonian_baker_bracket(F, V, units)
    return e_kernel + (2.0 / F.sgrid.hbar) * bb


@dataclass(frozen=True)
class ProjectionReport:
    """Configuration-space content of a phase-space evolution step."""

    p_m: RealField  # conditional momentum (integral of p F dp) / rho
    rho: np.ndarray
    liouville: RealField
    qhj: RealField
    node_mask: np.ndarray


def conditional_momentum(F: PhaseSpaceDistribution, eps_node: float = DEFAULT_EPS_NODE):
    """P_M(x) = (integral of p F dp) / rho(x), masked where rho vanishes."""
    rho = F.marginal_x()
    flux = (F.values * F.sgrid.p[None, :]).sum(axis=1) * F.sgrid.dp
    mask = rho < eps_node * float(np.max(rho))
    pm = np.zeros_like(rho)
    np.divide(flux, rho, out=pm, where=~mask)
    return pm, flux, rho, mask


def project_to_configuration(
    F_minus: PhaseSpaceDistribution,
    F_plus: PhaseSpaceDistribution,
    V,
    units: UnitSystem,
    psi_minus: WaveFunction | None = None,
    psi_plus: WaveFunction | None = None,
    eps_node: float = DEFAULT_EPS_NODE,
) -> ProjectionReport:
    """Momentum-integrate the two bracket equations back to configuration space.

    The antisymmetric bracket integrates to the continuity law; the
    symmetric one, divided by the density, lands on the local energy
    balance (the psi slices supply d_t S for the energy residual; without
    them the energy residual is reported as zero).
    """
    sg = F_minus.sgrid
    if not sg.same_lattice(F_plus.sgrid):
        raise PhaseSpaceError("projection slices on different lattices")
    dt = F_plus.time - F_minus.time
    if dt == 0:
        raise PhaseSpaceError("projection needs two distinct time slices")
    x_grid = sg.x_grid

    pm_minus, flux_minus, rho_minus, _ = conditional_momentum(F_minus, eps_node)
    pm_plus, flux_plus, rho_plus, _ = conditional_momentum(F_plus, eps_node)
    rho_mid = 0.5 * (rho_minus + rho_plus)
    mask = rho_mid < eps_node * float(np.max(rho_mid))
    t_mid = 0.5 * (F_minus.time + F_plus.time)

    pm_mid = 0.5 * (pm_minus + pm_plus)
    pm_mid[mask] = 0.0

    from .grid import _spectral_derivative

    flux_mid = 0.5 * (flux_minus + flux_plus) / units.mass
    liouville = (rho_plus - rho_minus) / dt + _spectral_derivative(flux_mid, 0, sg.dx, 1)

    # energy projection: (1/rho) integral of {H, F}_BB dp + d_t S
    F_mid = PhaseSpaceDistribution(0.5 * (F_minus.values + F_plus.values), sg, t_mid)
    bb = hamiltonian_baker_bracket(F_mid, V, units)
    bb_int = np.real(bb.sum(axis=1)) * sg.dp
    energy_density = np.zeros_like(rho_mid)
    np.divide(bb_int, rho_mid, out=energy_density, where=~mask)

    if psi_minus is not None and psi_plus is not None:
        from .madelung import decompose, velocities

        f_minus = decompose(psi_minus, eps_node)
        f_plus = decompose(psi_plus, eps_node)
        vel = velocities(f_plus, f_minus)
        if psi_minus.grid.boundary == DIRICHLET:
            # psi lives on the sine grid; its double carries mirrored copies
            e_б = vel.e_bohm.values
            dt_s = np.concatenate([e_б, e_б[::-1]])
            psi_mask = np.concatenate([vel.node_mask, vel.node_mask[::-1]])
        else:
            dt_s = vel.e_bohm.values
            psi_mask = vel.node_mask
        qhj = -dt_s + energy_density
        mask = mask | psi_mask
    else:
        qhj = energy_density
    qhj = qhj.copy()
    qhj[mask] = 0.0

    return ProjectionReport(
        p_m=RealField(pm_mid, x_grid, t_mid),
        rho=rho_mid,
        liouville=RealField(liouville, x_grid, t_mid),
        qhj=RealField(qhj, x_grid, t_mid),
        node_mask=mask,
    )


def expectation_phase_space(a, F: PhaseSpaceDistribution) -> float:
    """Double quadrature of a(x,p) F(x,p) over the symplectic lattice."""
    sym = _as_symbol(a, F.sgrid)
    val = np.sum(sym.values * F.values) * F.sgrid.cell
    return float(np.real(val))
