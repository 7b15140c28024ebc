"""Uniform tortoise grid, field states, initial data and the curvature dictionary."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .background import BackgroundSample, background_fields
from .errors import ConfigError, NumericalError

# 4th-order first-derivative stencils (interior and one-sided edges), in units of 1/(12 dx).
_D1_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0])
_D1_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0])


def d1(u: np.ndarray, dx: float) -> np.ndarray:
    """Fourth-order first derivative on a uniform grid (needs at least 5 nodes)."""
    n = u.shape[-1]
    if n < 5:
        raise ValueError("the 4th-order stencil needs at least 5 nodes")
    out = np.empty_like(u)
    out[2:-2] = (u[:-4] - u[4:]) + 8.0 * (u[3:-1] - u[1:-3])
    out[0] = _D1_EDGE0 @ u[:5]
    out[1] = _D1_EDGE1 @ u[:5]
    out[-1] = -(_D1_EDGE0 @ u[-1:-6:-1])
    out[-2] = -(_D1_EDGE1 @ u[-1:-6:-1])
    out *= 1.0 / (12.0 * dx)
    return out


def simpson_weights(n: int, dx: float) -> np.ndarray:
    """Composite Simpson weights for ``n`` equispaced nodes.

    An odd number of intervals closes with the 3/8 rule on the last three.
    """
    if n < 2:
        raise ValueError("need at least two nodes")
    w = np.zeros(n)
    if n == 2:
        w[:] = dx / 2
        return w
    intervals = n - 1
    if intervals % 2 == 0:
        k = n
    else:
        k = n - 3
    if k >= 3:
        w[:k:2] += 2 * dx / 3
        w[1:k:2] += 4 * dx / 3
        w[0] -= dx / 3
        w[k - 1] -= dx / 3
    if k != n:
        j = n - 4
        w[j:] += np.array([3, 9, 9, 3]) * dx / 8
    return w


@dataclass(frozen=True, eq=False)
class TortoiseGrid:
    """Uniform lattice in r* with the background precomputed at every node."""

    x_min: float
    x_max: float
    n: int
    mass: float
    x: np.ndarray = field(repr=False)
    r: np.ndarray = field(repr=False)
    gap: np.ndarray = field(repr=False)
    N: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)
    P: np.ndarray = field(repr=False)
    V: np.ndarray = field(repr=False)
    f: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def m(self) -> float:
        return self.mass

    def sample(self, i: int) -> BackgroundSample:
        return BackgroundSample(
            r=float(self.r[i]), r_star=float(self.x[i]), N=float(self.N[i]), mu=float(self.mu[i]),
            P=float(self.P[i]), V=float(self.V[i]), f=float(self.f[i]),
        )

    @property
    def samples(self) -> list[BackgroundSample]:
        return [self.sample(i) for i in range(self.n)]

    def integrate(self, density: np.ndarray) -> float:
        """Composite Simpson integral of a nodal density over the whole grid."""
        return float(self.weights @ density)

    def integrate_window(self, density: np.ndarray, x1: float, x2: float) -> float:
        """Integral over ``[x1, x2]``; partial end cells use local quartic interpolation."""
        if not (x1 < x2):
            raise ValueError("window must satisfy x1 < x2")
        tol = 1e-9 * self.dx
        if x1 < self.x_min - tol or x2 > self.x_max + tol:
            raise ValueError(f"window [{x1}, {x2}] lies outside the grid [{self.x_min}, {self.x_max}]")
        x1 = max(x1, self.x_min)
        x2 = min(x2, self.x_max)
        s1 = (x1 - self.x_min) / self.dx
        s2 = (x2 - self.x_min) / self.dx
        i0 = int(round(s1)) if abs(s1 - round(s1)) * self.dx <= tol else int(math.ceil(s1))
        i1 = int(round(s2)) if abs(s2 - round(s2)) * self.dx <= tol else int(math.floor(s2))
        total = 0.0
        if i1 - i0 >= 1:
            total += float(simpson_weights(i1 - i0 + 1, self.dx) @ density[i0:i1 + 1])
            left, right = self.x[i0], self.x[i1]
            if x1 < left - tol:
                total += _partial_cell(density, self, x1, left)
            if x2 > right + tol:
                total += _partial_cell(density, self, right, x2)
        else:
            total += _partial_cell(density, self, x1, x2)
        return total

    def index_of(self, x: float) -> int:
        """Nearest node index to ``x``."""
        return int(np.clip(round((x - self.x_min) / self.dx), 0, self.n - 1))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


def lagrange_stencil(grid: TortoiseGrid, xq: float) -> tuple[int, np.ndarray]:
    """Start index and weights of the 5-point Lagrange interpolant at ``xq``."""
    s = (xq - grid.x_min) / grid.dx
    j = int(np.clip(int(math.floor(s)) - 2, 0, grid.n - 5))
    nodes = j + np.arange(5)
    wts = np.ones(5)
    for a in range(5):
        for b in range(5):
            if a != b:
                wts[a] *= (s - nodes[b]) / (nodes[a] - nodes[b])
    return j, wts


def _partial_cell(density, grid, a, b):
    xs = 0.5 * (a + b) + 0.5 * (b - a) * _GL_NODES
    vals = np.empty(5)
    for k, xq in enumerate(xs):
        j, wts = lagrange_stencil(grid, xq)
        vals[k] = wts @ density[j:j + 5]
    return 0.5 * (b - a) * float(_GL_WEIGHTS @ vals)


def build_grid(x_min: float, x_max: float, n: int, m: float = 1.0) -> TortoiseGrid:
    """Uniform tortoise grid with background arrays; requires ``x_min < x_max`` and ``n >= 3``."""
    if not (np.isfinite(x_min) and np.isfinite(x_max) and x_min < x_max):
        raise ConfigError(f"grid needs finite x_min < x_max, got {x_min!r}, {x_max!r}")
    if int(n) != n or n < 3:
        raise ConfigError(f"grid needs n >= 3 points, got {n!r}")
    if not m > 0:
        raise ConfigError(f"mass must be positive, got {m!r}")
    n = int(n)
    dx = (x_max - x_min) / (n - 1)
    x = x_min + dx * np.arange(n)
    x[-1] = x_max
    try:
        b = background_fields(x, m)
    except NumericalError as exc:
        bad = [i for i in range(n) if not _inverts(x[i], m)]
        raise NumericalError(f"background inversion failed at node {bad[0] if bad else '?'}: {exc}") from exc
    arrays = {k: np.ascontiguousarray(b[k]) for k in ("r", "gap", "N", "mu", "P", "V", "f")}
    wts = simpson_weights(n, dx)
    for a in (*arrays.values(), x, wts):
        a.setflags(write=False)
    return TortoiseGrid(float(x_min), float(x_max), n, float(m), x=x, weights=wts, **arrays)


def _inverts(x, m):
    try:
        background_fields(x, m)
        return True
    except NumericalError:
        return False


@dataclass(frozen=True, eq=False)
class FieldState:
    """Time level of the evolution: ``W`` and ``Pi = dW/dt`` on the grid nodes."""

    t: float
    W: np.ndarray
    Pi: np.ndarray

    def __post_init__(self):
        if self.W.shape != self.Pi.shape:
            raise ValueError("W and Pi must have the same length")

    def check(self, grid: TortoiseGrid) -> None:
        if self.W.shape != (grid.n,):
            raise ValueError(f"state has {self.W.shape[0]} nodes, grid has {grid.n}")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.Pi))):
            raise NumericalError(f"non-finite field values at t={self.t!r}")

    def frozen(self) -> "FieldState":
        W = self.W if not self.W.flags.writeable else self.W.copy()
        Pi = self.Pi if not self.Pi.flags.writeable else self.Pi.copy()
        W.setflags(write=False)
        Pi.setflags(write=False)
        return FieldState(self.t, W, Pi)


KINDS = ("vacuum", "gaussian", "stationary", "custom")


@dataclass(frozen=True)
class InitialDataSpec:
    """Initial data family.

    ``vacuum`` uses ``sign``; ``gaussian`` uses base/amplitude/center/width/mode;
    ``stationary`` uses ``n``; ``custom`` reads ``path``.
    """

    kind: str = "vacuum"
    sign: int = 1
    base: int = 1
    amplitude: float = 0.0
    center: float = 0.0
    width: float = 1.0
    mode: str = "time_symmetric"
    n: int = 1
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown initial data kind {self.kind!r}; expected one of {KINDS}")
        if self.sign not in (1, -1) or self.base not in (1, -1):
            raise ConfigError("vacuum sign and gaussian base must be +1 or -1")
        if not self.width > 0:
            raise ConfigError(f"gaussian width must be positive, got {self.width!r}")
        if self.mode not in ("time_symmetric", "ingoing"):
            raise ConfigError(f"gaussian mode must be time_symmetric or ingoing, got {self.mode!r}")
        if self.n < 1:
            raise ConfigError(f"stationary index must be >= 1, got {self.n!r}")
        if self.kind == "custom" and not self.path:
            raise ConfigError("custom initial data needs a file path")


def make_initial_data(spec: InitialDataSpec, grid: TortoiseGrid, stationary=None) -> FieldState:
    """Initial ``FieldState`` at ``t = 0`` for the given family."""
    x = grid.x
    if spec.kind == "vacuum":
        W = np.full(grid.n, float(spec.sign))
        Pi = np.zeros(grid.n)
    elif spec.kind == "gaussian":
        bump = spec.amplitude * np.exp(-((x - spec.center) / spec.width) ** 2)
        W = spec.base + bump
        if spec.mode == "ingoing":
            Pi = -2 * (x - spec.center) / spec.width**2 * bump
        else:
            Pi = np.zeros(grid.n)
    elif spec.kind == "stationary":
        if stationary is None:
            raise ConfigError("stationary initial data needs a precomputed StationarySolution")
        if stationary.n != spec.n:
            raise ConfigError(f"stationary solution has index {stationary.n}, spec asks for {spec.n}")
        W = np.asarray(stationary.evaluate(x, grid.mass), dtype=float)
        Pi = np.zeros(grid.n)
    else:
        W, Pi = read_state_file(spec.path, grid)
    return FieldState(0.0, np.ascontiguousarray(W, dtype=float), np.ascontiguousarray(Pi, dtype=float))


def _header_line(grid: TortoiseGrid) -> str:
    return f"# n={grid.n} x_min={grid.x_min!r} x_max={grid.x_max!r} m={grid.mass!r}"


def write_state_file(path, state: FieldState, grid: TortoiseGrid) -> None:
    """Dump ``(W, Pi)`` in the two-column data format."""
    lines = [_header_line(grid)]
    lines += [f"{float(w)!r} {float(p)!r}" for w, p in zip(state.W, state.Pi)]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_state_header(line: str) -> dict:
    if not line.startswith("#"):
        raise ConfigError("line 1: expected header '# n=<count> x_min=<val> x_max=<val> m=<val>'")
    fields = {}
    for tok in line[1:].split():
        if "=" not in tok:
            raise ConfigError(f"line 1: malformed header token {tok!r}")
        k, v = tok.split("=", 1)
        fields[k] = v
    missing = {"n", "x_min", "x_max", "m"} - fields.keys()
    if missing:
        raise ConfigError(f"line 1: header misses {sorted(missing)}")
    try:
        return {"n": int(fields["n"]), "x_min": float(fields["x_min"]),
                "x_max": float(fields["x_max"]), "m": float(fields["m"])}
    except ValueError as exc:
        raise ConfigError(f"line 1: bad header value ({exc})") from exc


def read_state_file(path, grid: Optional[TortoiseGrid] = None):
    """Read ``(W, Pi)`` from a data file; with ``grid`` the header must match it exactly."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"initial data file not found: {p}")
    text = p.read_text().splitlines()
    if not text:
        raise ConfigError(f"{p}: empty file")
    head = parse_state_header(text[0])
    if grid is not None:
        got = (head["n"], head["x_min"], head["x_max"], head["m"])
        want = (grid.n, grid.x_min, grid.x_max, grid.mass)
        if got != want:
            raise ConfigError(f"{p}: header (n, x_min, x_max, m) = {got} does not match grid {want}")
    W, Pi = [], []
    for lineno, line in enumerate(text[1:], start=2):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        if len(parts) != 2:
            raise ConfigError(f"{p}: line {lineno}: expected two columns, got {len(parts)}")
        try:
            w, pi = float(parts[0]), float(parts[1])
        except ValueError:
            raise ConfigError(f"{p}: line {lineno}: not a number: {s!r}") from None
        if not (math.isfinite(w) and math.isfinite(pi)):
            raise ConfigError(f"{p}: line {lineno}: non-finite value")
        W.append(w)
        Pi.append(pi)
    if len(W) != head["n"]:
        raise ConfigError(f"{p}: header announces n={head['n']} rows, found {len(W)}")
    if grid is None:
        return head, np.array(W), np.array(Pi)
    return np.array(W), np.array(Pi)


@dataclass(frozen=True)
class CurvatureComponents:
    """Orthonormal-frame field strength magnitudes at one node."""

    v_theta: float
    v_phi: float
    w_theta: float
    w_phi: float
    theta_phi: float
    w_v: float = 0.0


def null_derivatives(state: FieldState, grid: TortoiseGrid):
    """``(dW/dv, dW/dw, W')`` with ``v = t + r*``, ``w = t - r*``."""
    Wp = d1(state.W, grid.dx)
    return 0.5 * (state.Pi + Wp), 0.5 * (state.Pi - Wp), Wp


def curvature_arrays(state: FieldState, grid: TortoiseGrid) -> dict:
    """Nodal magnitudes |F_v.theta|, |F_w.theta|, |F_theta.phi| (phi copies are equal)."""
    dv, dw, _ = null_derivatives(state, grid)
    r = grid.r
    with np.errstate(divide="ignore", invalid="ignore"):
        w_theta = 2 * np.abs(dw) / (grid.N * r)
    return {
        "v_theta": 2 * np.abs(dv) / r,
        "w_theta": w_theta,
        "theta_phi": np.abs(state.W**2 - 1) / r**2,
        "w_v": np.zeros(grid.n),
    }


def curvature_components(state: FieldState, grid: TortoiseGrid, i: int) -> CurvatureComponents:
    if not -grid.n <= i < grid.n:
        raise IndexError(f"node index {i} out of range for {grid.n} nodes")
    c = curvature_arrays(state, grid)
    vt, wt = float(c["v_theta"][i]), float(c["w_theta"][i])
    return CurvatureComponents(vt, vt, wt, wt, float(c["theta_phi"][i]), 0.0)
