"""Energies, Morawetz bulk, null fluxes, the multiplier identity and weighted norms.

Everything here is a pure function of a ``FieldState`` on a ``TortoiseGrid``
(composite Simpson quadrature, see ``TortoiseGrid.integrate``) plus a few
observers that sample these functionals during a run.  Geometric energies
are per unit solid angle.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

from .background import background_fields, d2P_dx2, dP_dx
from .errors import NumericalError
from .evolve import Observer
from .grid import FieldState, TortoiseGrid, curvature_arrays, d1, lagrange_stencil


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    gradient: float
    potential: float
    total: float
    tail_bound: float = 0.0


def energy_densities(state: FieldState, grid: TortoiseGrid):
    Wp = d1(state.W, grid.dx)
    return state.Pi**2, Wp**2, 0.5 * grid.P * (state.W**2 - 1) ** 2


def _tail_bound(state, grid):
    # Beyond the grid the data are taken constant; only the potential survives.
    # int_{r_max}^inf P/2 (W^2-1)^2 dr* = (W^2-1)^2 / (2 r_max) at the right end,
    # and at the left end int P dr* over (-inf, x_min] = gap(x_min) / (r r) < gap / (4m^2).
    right = (state.W[-1] ** 2 - 1) ** 2 / (2 * grid.r[-1])
    left = (state.W[0] ** 2 - 1) ** 2 * grid.gap[0] / (8 * grid.mass**2)
    return float(right + left)


def scalar_energy(state: FieldState, grid: TortoiseGrid) -> EnergyBreakdown:
    """The conserved energy split into kinetic, gradient and potential parts."""
    k, g, p = energy_densities(state, grid)
    kin, grad, pot = grid.integrate(k), grid.integrate(g), grid.integrate(p)
    return EnergyBreakdown(kin, grad, pot, kin + grad + pot, _tail_bound(state, grid))


def local_energy(state: FieldState, grid: TortoiseGrid, x1: float, x2: float) -> EnergyBreakdown:
    """Energy densities integrated over the window ``[x1, x2]``."""
    k, g, p = energy_densities(state, grid)
    kin = grid.integrate_window(k, x1, x2)
    grad = grid.integrate_window(g, x1, x2)
    pot = grid.integrate_window(p, x1, x2)
    return EnergyBreakdown(kin, grad, pot, kin + grad + pot)


def morawetz_density(state: FieldState, grid: TortoiseGrid) -> np.ndarray:
    Wp = d1(state.W, grid.dx)
    return grid.P * (state.Pi**2 + Wp**2) + grid.P / (2 * grid.r) * (state.W**2 - 1) ** 2


def morawetz_bulk(state: FieldState, grid: TortoiseGrid) -> float:
    return grid.integrate(morawetz_density(state, grid))


# Geometric energies through the curvature dictionary ------------------------

@dataclass(frozen=True)
class GeometricEnergies:
    e_dt: float
    e_K: float
    e_H: float
    e_sharp: float


def dt_density(state, grid):
    c = curvature_arrays(state, grid)
    N, r2 = grid.N, grid.r**2
    with np.errstate(invalid="ignore"):
        wt = np.where(N > 0, N**2 * 2 * c["w_theta"] ** 2, 0.0)
    return 2 * (wt + 2 * c["v_theta"] ** 2 + N * (c["w_v"] ** 2 + 0.25 * c["theta_phi"] ** 2)) * r2


def K_density(state, grid):
    c = curvature_arrays(state, grid)
    N, r2 = grid.N, grid.r**2
    v = state.t + grid.x
    w = state.t - grid.x
    with np.errstate(invalid="ignore"):
        wt = np.where(N > 0, w**2 * N**2 * 2 * c["w_theta"] ** 2, 0.0)
    return (wt + v**2 * 2 * c["v_theta"] ** 2
            + (w**2 + v**2) * N * (c["w_v"] ** 2 + 0.25 * c["theta_phi"] ** 2)) * r2


def H_density(state, grid, h):
    c = curvature_arrays(state, grid)
    N, r2 = grid.N, grid.r**2
    with np.errstate(invalid="ignore"):
        wt = np.where(N > 0, h * N * 2 * c["w_theta"] ** 2, np.where(c["w_theta"] > 0, np.inf, 0.0))
    return (wt + h * (N + 1) * (c["w_v"] ** 2 + 0.25 * c["theta_phi"] ** 2)
            + h * 2 * c["v_theta"] ** 2) * r2


def sharp_density(state, grid):
    c = curvature_arrays(state, grid)
    N, r2 = grid.N, grid.r**2
    with np.errstate(invalid="ignore"):
        wt = np.where(N > 0, N * 2 * c["w_theta"] ** 2, np.where(c["w_theta"] > 0, np.inf, 0.0))
    return (wt + 2 * c["v_theta"] ** 2 + c["w_v"] ** 2 + 0.25 * c["theta_phi"] ** 2) * r2


def energy_dt(state, grid) -> float:
    return grid.integrate(dt_density(state, grid))


def energy_K(state, grid) -> float:
    """Conformal energy; ``v = t + x`` and ``w = t - x`` use the state's time."""
    return grid.integrate(K_density(state, grid))


def energy_H(state, grid, weight) -> float:
    """Horizon energy with a ``HorizonWeight`` (or any callable ``h(x)``)."""
    h = weight(grid.x) if callable(weight) else np.asarray(weight)
    return grid.integrate(H_density(state, grid, h))


def energy_sharp(state, grid) -> float:
    return grid.integrate(sharp_density(state, grid))


def geometric_energies(state, grid, weight) -> GeometricEnergies:
    return GeometricEnergies(energy_dt(state, grid), energy_K(state, grid),
                             energy_H(state, grid, weight), energy_sharp(state, grid))


def lp_norms(W: np.ndarray, grid: TortoiseGrid, Pi: Optional[np.ndarray] = None) -> dict:
    """Weighted norms of ``W``; the Sobolev ratio also needs ``Pi`` (zero if omitted)."""
    W = np.asarray(W, dtype=float)
    Pi = np.zeros_like(W) if Pi is None else np.asarray(Pi, dtype=float)
    Wp = d1(W, grid.dx)
    l2 = np.sqrt(grid.integrate(grid.P * W**2))
    l4 = grid.integrate(grid.P * W**4) ** 0.25
    h1 = np.sqrt(grid.integrate(Wp**2))
    E = scalar_energy(FieldState(0.0, W, Pi), grid).total
    sup = float(np.max(np.sqrt(grid.P) * np.abs(W**2 - 1)))
    denom = np.sqrt(E) + E
    ratio = sup / denom if denom > 0 else (0.0 if sup == 0 else np.inf)
    return {"l2_P": float(l2), "l4_P": float(l4), "h1_dot": float(h1), "sobolev_bound_ratio": float(ratio)}


# Observers -------------------------------------------------------------------

class EnergyObserver(Observer):
    name = "energy"

    def measure(self, state, grid):
        return scalar_energy(state, grid)


class LocalEnergyObserver(Observer):
    name = "local"

    def __init__(self, x1: float, x2: float):
        super().__init__()
        self.x1, self.x2 = x1, x2

    def measure(self, state, grid):
        return local_energy(state, grid, self.x1, self.x2).total


class MorawetzObserver(Observer):
    name = "morawetz"

    def measure(self, state, grid):
        return morawetz_bulk(state, grid)


class SnapshotObserver(Observer):
    """Keeps full states at (approximately) the requested times."""

    name = "snapshots"

    def __init__(self, times: Sequence[float], tol: float = 1e-9):
        super().__init__()
        self.wanted = list(times)
        self.tol = tol
        self.states: dict = {}

    def observe(self, state, grid):
        for t in self.wanted:
            if abs(state.t - t) <= self.tol * max(1.0, abs(t)):
                self.states[t] = state

    def record(self):
        return {"states": self.states}


@dataclass
class MorawetzAccumulator:
    t: np.ndarray
    bulk: np.ndarray
    cumulative: np.ndarray

    @classmethod
    def from_series(cls, t, bulk):
        t = np.asarray(t, dtype=float)
        bulk = np.asarray(bulk, dtype=float)
        if len(t) >= 3:
            cum = cumulative_simpson(bulk, x=t, initial=0.0)
        elif len(t) == 2:
            cum = np.array([0.0, 0.5 * (t[1] - t[0]) * (bulk[0] + bulk[1])])
        else:
            cum = np.zeros_like(t)
        # Simpson partial sums can dip by rounding on flat stretches; the exact integral cannot.
        cum = np.maximum.accumulate(cum)
        return cls(t, bulk, cum)


# Null lines ------------------------------------------------------------------

@dataclass(frozen=True)
class NullLine:
    """``family='v'``: the ingoing ray v = value, x(t) = value - t.
    ``family='w'``: the outgoing ray w = value, x(t) = t - value."""

    family: str
    value: float

    def __post_init__(self):
        if self.family not in ("v", "w"):
            raise ValueError("null line family must be 'v' or 'w'")

    def x_at(self, t):
        return self.value - t if self.family == "v" else t - self.value

    def parameter(self, t):
        """The running null coordinate along the line (w on v-lines, v on w-lines)."""
        return 2 * np.asarray(t) - self.value

    def label(self):
        return f"{self.family}={self.value!r}"


class NullLineObserver(Observer):
    """Quartic interpolation of W, Pi and W' at the moving point of each line."""

    name = "null"

    def __init__(self, lines: Sequence[NullLine]):
        super().__init__()
        self.lines = list(lines)
        self.samples = {ln: [] for ln in self.lines}

    def observe(self, state, grid):
        self.times.append(state.t)
        Wp = None
        for ln in self.lines:
            xq = ln.x_at(state.t)
            if not grid.x_min <= xq <= grid.x_max:
                continue
            if Wp is None:
                Wp = d1(state.W, grid.dx)
            j, wts = lagrange_stencil(grid, xq)
            sl = slice(j, j + 5)
            self.samples[ln].append((state.t, xq, wts @ state.W[sl], wts @ state.Pi[sl], wts @ Wp[sl]))

    def record(self):
        return {ln.label(): np.array(v).reshape(-1, 5) for ln, v in self.samples.items()}


@dataclass
class FluxRecord:
    line: NullLine
    kind: str
    param_range: tuple
    value: float
    params: np.ndarray
    integrand: np.ndarray


def _flux_integrand(line, kind, x, W, Pi, Wp, m, weight):
    b = background_fields(x, m)
    pot = (W**2 - 1) ** 2
    if kind == "dt":
        # energy crossing per unit t; per unit null parameter it is half of this
        lead = (Pi - Wp) ** 2 if line.family == "v" else (Pi + Wp) ** 2
        return 0.5 * (lead + 0.5 * b["P"] * pot)
    h = weight(x)
    r2 = b["r"] ** 2
    if line.family == "v":
        dw = 0.5 * (Pi - Wp)
        with np.errstate(divide="ignore", invalid="ignore"):
            wt = np.where(b["N"] > 0, 2 * (2 * dw / (b["N"] * b["r"])) ** 2 * b["N"], 0.0)
        return -2 * h * (wt + 0.25 * b["N"] * pot / r2**2) * r2
    dv = 0.5 * (Pi + Wp)
    return -2 * h * (0.25 * pot / r2**2 + 2 * (2 * dv / b["r"]) ** 2) * r2


def flux_along_null(record, line: NullLine, param_range=None, kind: str = "dt", m: float = 1.0,
                    weight=None) -> FluxRecord:
    """Flux through a null segment from a ``NullLineObserver`` record.

    ``kind='dt'`` gives the energy crossing the segment (nonnegative for the
    stated orientation); ``kind='H'`` the horizon-field flux integrated in the
    null parameter.
    """
    data = record[line.label()] if isinstance(record, dict) else record
    if data.shape[0] < 4:
        raise NumericalError(f"null line {line.label()} has {data.shape[0]} samples; need at least 4")
    t, x, W, Pi, Wp = data.T
    p = line.parameter(t)
    lo, hi = float(p[0]), float(p[-1])
    if param_range is None:
        param_range = (lo, hi)
    p0, p1 = param_range
    slack = 1e-9 * max(1.0, abs(lo), abs(hi))
    if p0 < lo - slack or p1 > hi + slack:
        raise NumericalError(f"null line {line.label()} covers parameter range [{lo!r}, {hi!r}] only; "
                             f"requested [{p0!r}, {p1!r}]")
    if kind == "H" and weight is None:
        raise ValueError("kind='H' needs a horizon weight")
    vals = _flux_integrand(line, kind, x, W, Pi, Wp, m, weight)
    spline = CubicSpline(p, vals)
    value = float(spline.integrate(max(p0, lo), min(p1, hi)))
    return FluxRecord(line, kind, (p0, p1), value, p, vals)


def rectangle_balance(state1, state2, grid, null_record, x_a, x_b) -> dict:
    """Energy bookkeeping on the region between two time slices and two null sides.

    The base is ``[x_a, x_b]`` at ``t1``; the left side is the outgoing ray
    from ``x_a`` and the right side the ingoing ray from ``x_b``.  Returns the
    energy loss, the null fluxes and the relative mismatch.
    """
    t1, t2 = state1.t, state2.t
    span = t2 - t1
    if x_b - x_a <= 2 * span:
        raise ValueError("time slab too long for the base: the null sides cross")
    e1 = local_energy(state1, grid, x_a, x_b).total
    e2 = local_energy(state2, grid, x_a + span, x_b - span).total
    left = NullLine("w", t1 - x_a)
    right = NullLine("v", t1 + x_b)
    fl = flux_along_null(null_record, left, (left.parameter(t1), left.parameter(t2)), "dt", grid.mass)
    fr = flux_along_null(null_record, right, (right.parameter(t1), right.parameter(t2)), "dt", grid.mass)
    out = fl.value + fr.value
    return {"E_t1": e1, "E_t2": e2, "flux_left": fl.value, "flux_right": fr.value,
            "relative_error": abs((e1 - e2) - out) / e1 if e1 > 0 else abs((e1 - e2) - out)}


# Multiplier identity ---------------------------------------------------------

IDENTITY_TERMS = (
    "d/dt hW", "h Wdot^2 (W^2-1)", "h Wdot^2 W^2", "h'' (W^2-1)^2", "h W'^2 (W^2-1)", "h W'^2 W^2",
    "P h (W^2-1)^2", "P h (W^2-1)^3", "P Wdot^2", "P W'^2", "P (Vf+P) (W^2-1)^2", "d/dt fW'",
)


class IdentityObserver(Observer):
    """Records the two boundary integrals and the bulk integrals of the multiplier identity."""

    name = "identity"

    def __init__(self, weights):
        super().__init__()
        self.weights = weights
        self._cache = None

    def _profiles(self, grid):
        if self._cache is None or self._cache[0] is not grid:
            b = {"P": grid.P, "V": grid.V, "mu": grid.mu}
            h, hp, hpp = self.weights.h_derivatives(grid.x, b)
            self._cache = (grid, h, hpp, grid.P * (grid.V * grid.f + grid.P))
        return self._cache[1:]

    def measure(self, state, grid):
        h, hpp, pvf = self._profiles(grid)
        W, Pi = state.W, state.Pi
        Wp = d1(W, grid.dx)
        q = W * W - 1.0
        I = grid.integrate
        Pi2, Wp2 = Pi * Pi, Wp * Wp
        return (
            I(Pi * h * W * q),
            -I(h * Pi2 * q),
            -2 * I(h * Pi2 * W * W),
            -0.25 * I(hpp * q * q),
            I(Wp2 * h * q),
            2 * I(h * Wp2 * W * W),
            I(grid.P * h * q * q),
            I(grid.P * h * q**3),
            0.5 * I(grid.P * Pi2),
            0.5 * I(grid.P * Wp2),
            -0.25 * I(pvf * q * q),
            I(Pi * grid.f * Wp),
        )


@dataclass
class IdentityResidual:
    t: np.ndarray
    residual: np.ndarray
    terms: dict


def _centered_derivative(y, dt):
    return (y[:-4] - y[4:] + 8 * (y[3:-1] - y[1:-3])) / (12 * dt)


def multiplier_identity_residual(record, drop: Optional[str] = None) -> IdentityResidual:
    """Sum of all identity terms at interior observation times.

    ``record`` is an ``IdentityObserver`` record; boundary integrals are
    differentiated with 4th-order centred differences, so the series loses
    two samples at each end.  ``drop`` removes one named term (ablation).
    """
    t = np.asarray(record["t"], dtype=float)
    vals = np.asarray(record["values"], dtype=float)
    if len(t) < 5:
        raise NumericalError("identity residual needs at least 5 observations; reduce the observer stride")
    steps = np.diff(t)
    dt = steps.mean()
    if np.max(np.abs(steps - dt)) > 1e-9 * dt:
        raise NumericalError("identity residual needs a uniform observer cadence")
    if drop is not None and drop not in IDENTITY_TERMS:
        raise ValueError(f"unknown identity term {drop!r}")
    terms = {}
    for k, name in enumerate(IDENTITY_TERMS):
        col = vals[:, k]
        terms[name] = _centered_derivative(col, dt) if name.startswith("d/dt") else col[2:-2]
    total = sum(v for k, v in terms.items() if k != drop)
    return IdentityResidual(t[2:-2], total, terms)
