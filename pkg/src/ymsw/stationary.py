"""Shooting solver for static solutions  W'' = P W (W^2 - 1).

Integration runs in s = log(r - 2m) from the launch point near the horizon
out to very large radii.  In this variable

    dW/ds  = r W'            (W' = dW/dr*)
    dW'/ds = (r - 2m) / r^2 * W (W^2 - 1)

and the near-horizon and far-field regions are both regular, so a single
adaptive integration covers them.  A trajectory launched with horizon value
``a`` either escapes past +-(1 + margin) after some number of zeros or
settles on +-1.  The n-th threshold separates launches escaping after n
zeros from those escaping after n + 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .background import _log_gap, background_fields
from .errors import NumericalError
from .grid import FieldState, TortoiseGrid, write_state_file


class BracketError(NumericalError):
    """The bisection bracket does not contain the requested threshold."""


@dataclass(frozen=True)
class ShootingConfig:
    """``x_start`` in units of m; ``r_end`` the outer radius in units of m."""

    x_start: float = -80.0
    r_end: float = 1e40
    rtol: float = 1e-12
    atol: float = 1e-15
    bracket: tuple = (1e-9, 1 - 1e-9)
    bisection_tol: float = 0.0
    escape_margin: float = 0.1
    limit_tol: float = 1e-6
    profile_tol: float = 1e-9

    def __post_init__(self):
        lo, hi = self.bracket
        if not 0 < lo < hi < 1:
            raise ValueError(f"bracket must satisfy 0 < a_lo < a_hi < 1, got {self.bracket!r}")
        if not self.x_start < 0:
            raise ValueError("x_start must be negative (near the horizon)")


def _rhs(s, y, m):
    u = math.exp(s)
    r = 2 * m + u
    W, Wp = y[0], y[1]
    q = W * W - 1.0
    return [r * Wp, u / (r * r) * W * q, r * Wp * Wp + 0.5 * u / (r * r) * q * q]


@dataclass
class Shot:
    """Outcome of one launch."""

    a: float
    classification: str
    zero_count: int
    zeros_x: np.ndarray
    s_final: float
    solution: object = field(repr=False)
    horizon_tail: float = 0.0

    def x_of_s(self, s, m):
        u = np.exp(s)
        return u + 2 * m * np.asarray(s) - m - 2 * m * math.log(m)


def integrate_static(a: float, config: ShootingConfig = ShootingConfig(), m: float = 1.0) -> Shot:
    """Integrate from the horizon launch point and classify the forward behaviour.

    Classifications: ``'limit +1'``, ``'limit -1'``, ``'overshoot'`` (escape
    above 1 + margin), ``'undershoot'`` (escape below -1 - margin) and
    ``'undetermined'``.
    """
    if not 0 <= a <= 1:
        raise ValueError(f"horizon value must lie in [0, 1], got {a!r}")
    x0 = config.x_start * m
    s0 = float(_log_gap(x0, m))
    b = background_fields(x0, m)
    y0 = [a, 2 * m * float(b["P"]) * a * (a * a - 1), 0.0]
    s1 = math.log(config.r_end * m)
    lim = 1 + config.escape_margin

    def zero(s, y, m):
        return y[0]

    def up(s, y, m):
        return y[0] - lim

    def down(s, y, m):
        return y[0] + lim

    up.terminal = True
    down.terminal = True
    sol = solve_ivp(_rhs, (s0, s1), y0, method="DOP853", rtol=config.rtol, atol=config.atol,
                    events=(zero, up, down), dense_output=True, args=(m,))
    if sol.status == -1:
        raise NumericalError(f"static integration failed for a={a!r} at s={sol.t[-1]!r}: {sol.message}")
    zs = np.asarray(sol.t_events[0])
    # zeros of a nontrivial profile are simple; W = W' = 0 is the trivial solution (a = 0)
    simple = np.asarray(sol.y_events[0]).reshape(-1, 3)[:, 1] != 0
    zs = zs[(zs > s0) & simple]
    W_end, Wp_end = sol.y[0, -1], sol.y[1, -1]
    if len(sol.t_events[1]):
        cls = "overshoot"
    elif len(sol.t_events[2]):
        cls = "undershoot"
    elif abs(W_end - 1) < config.limit_tol:
        cls = "limit +1"
    elif abs(W_end + 1) < config.limit_tol:
        cls = "limit -1"
    else:
        cls = "undetermined"
    u0 = math.exp(s0)
    tail = 0.5 * (a * a - 1) ** 2 * u0 / (2 * m * (2 * m + u0))
    shot = Shot(a, cls, len(zs), zs, float(sol.t[-1]), sol, tail)
    shot.zeros_x = shot.x_of_s(zs, m)
    return shot


@dataclass
class StationarySolution:
    """One member W_n of the static family."""

    n: int
    a_n: float
    bracket: tuple
    profile: dict
    zero_count: int
    energy: float
    energy_tail_bound: float
    asymptote: float
    mass: float
    iterations: int
    widths: list = field(repr=False)
    _shot: Shot = field(repr=False)
    _s_trust: float = field(repr=False)
    _c_tail: float = field(repr=False)

    def evaluate(self, x, m: Optional[float] = None) -> np.ndarray:
        """W_n at tortoise points ``x`` (dense ODE output, 1/r tail beyond the trusted range)."""
        m = self.mass if m is None else m
        if m != self.mass:
            raise ValueError("solution was computed for a different mass")
        x = np.asarray(x, dtype=float)
        s = _log_gap(x, m)
        s_start = self._shot.solution.t[0]
        out = np.empty(x.shape)
        early = s <= s_start
        mid = (s > s_start) & (s <= self._s_trust)
        late = s > self._s_trust
        out[early] = self.a_n
        if np.any(mid):
            out[mid] = self._shot.solution.sol(s[mid])[0]
        if np.any(late):
            r = 2 * m + np.exp(s[late])
            out[late] = self.asymptote + self._c_tail / r
        return out if out.ndim else float(out)


def find_a_n(n: int, config: ShootingConfig = ShootingConfig(), m: float = 1.0) -> StationarySolution:
    """Bisect on the launch value for the n-th threshold.

    Launches above a_n escape after at most n zeros, launches below after at
    least n + 1.  With ``bisection_tol = 0`` the bracket shrinks to adjacent
    doubles.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"index n must be an integer >= 1, got {n!r}")
    lo, hi = config.bracket
    shot_lo, shot_hi = integrate_static(lo, config, m), integrate_static(hi, config, m)
    k_lo, k_hi = shot_lo.zero_count, shot_hi.zero_count
    if not (k_hi <= n < k_lo):
        raise BracketError(
            f"bracket [{lo!r}, {hi!r}] does not straddle a_{n}: launches give {k_lo} and {k_hi} zeros "
            f"(need >= {n + 1} at the lower end and <= {n} at the upper end); widen the bracket"
        )
    it = 0
    found = None
    widths = [hi - lo]
    while True:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi or hi - lo <= config.bisection_tol:
            break
        it += 1
        shot = integrate_static(mid, config, m)
        if shot.classification.startswith("limit"):
            found = shot
            lo = hi = mid
            break
        if shot.zero_count <= n:
            hi, shot_hi = mid, shot
        else:
            lo, shot_lo = mid, shot
        widths.append(hi - lo)
        if it > 200:
            raise NumericalError("bisection did not terminate")
    if found is not None:
        shot_hi = shot_lo = found
    return _assemble(n, 0.5 * (lo + hi), (lo, hi), shot_hi, shot_lo, config, m, it, widths)


def _assemble(n, a_n, bracket, shot_hi, shot_lo, config, m, iterations, widths):
    sigma = (-1.0) ** n
    sol_hi, sol_lo = shot_hi.solution, shot_lo.solution
    s_start = max(sol_hi.t[0], sol_lo.t[0])
    s_stop = min(sol_hi.t[-1], sol_lo.t[-1])
    grid = np.linspace(s_start, s_stop, 20001)
    W_hi, W_lo = sol_hi.sol(grid)[0], sol_lo.sol(grid)[0]
    bad = np.flatnonzero(np.abs(W_hi - W_lo) > config.profile_tol)
    k_trust = bad[0] - 1 if bad.size else grid.size - 1
    if k_trust < 1:
        raise NumericalError("bracketing trajectories diverge immediately; tighten the bisection")
    s_trust = float(grid[k_trust])
    y_trust = 0.5 * (sol_hi.sol(s_trust) + sol_lo.sol(s_trust))
    r_trust = 2 * m + math.exp(s_trust)
    c_tail = (y_trust[0] - sigma) * r_trust
    # the trusted range must reach the far zone for the 1/r tail to be meaningful
    if abs(y_trust[0] - sigma) > 1e-3:
        raise NumericalError(
            f"profile only trusted up to r={r_trust!r}, where W={y_trust[0]!r} is still far from {sigma}; "
            "tighten the bisection or the ODE tolerance"
        )
    ss = np.linspace(s_start, s_trust, 4001)
    Y = 0.5 * (sol_hi.sol(ss) + sol_lo.sol(ss))
    u = np.exp(ss)
    x = u + 2 * m * ss - m - 2 * m * math.log(m)
    profile = {"x": x, "r": 2 * m + u, "W": Y[0], "dW": Y[1]}
    zero_count = int(np.count_nonzero(np.diff(np.sign(Y[0])) != 0))
    tail = c_tail**2 / r_trust**3
    energy = float(y_trust[2]) + shot_hi.horizon_tail + tail
    return StationarySolution(n, a_n, bracket, profile, zero_count, energy, 2 * tail + shot_hi.horizon_tail,
                              sigma, m, iterations, widths, shot_hi, s_trust, c_tail)


def stationary_energy(sol: StationarySolution, m: float = None, method: str = "ode", n_points: int = 4001,
                      tolerance: float = 1e-8) -> float:
    """Energy of a static profile.

    ``method='ode'`` returns the energy integrated alongside the shooting
    ODE; ``method='quadrature'`` applies Simpson's rule in s to the profile
    resampled with ``n_points`` nodes.  Both add the same tail estimates.
    """
    m = sol.mass if m is None else m
    if sol.energy_tail_bound > tolerance:
        raise NumericalError(f"tail bound {sol.energy_tail_bound!r} exceeds tolerance; extend the profile")
    if method == "ode":
        return sol.energy
    if method != "quadrature":
        raise ValueError("method must be 'ode' or 'quadrature'")
    from scipy.integrate import simpson
    s_start = sol._shot.solution.t[0]
    ss = np.linspace(s_start, sol._s_trust, n_points)
    W, Wp, _ = sol._shot.solution.sol(ss)
    u = np.exp(ss)
    r = 2 * m + u
    dens = r * Wp**2 + 0.5 * u / r**2 * (W**2 - 1) ** 2
    r_t = 2 * m + math.exp(sol._s_trust)
    return float(simpson(dens, x=ss)) + sol._shot.horizon_tail + sol._c_tail**2 / r_t**3


def export_profile(sol: StationarySolution, grid: TortoiseGrid, path) -> FieldState:
    """Write W_n on ``grid`` (with zero velocity) as a custom initial-data file."""
    state = FieldState(0.0, np.asarray(sol.evaluate(grid.x, grid.mass), dtype=float), np.zeros(grid.n))
    write_state_file(path, state, grid)
    return state
