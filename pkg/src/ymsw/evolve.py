"""Method-of-lines time integration of  W_tt - W'' + P W (W^2 - 1) = 0.

Space: W'' is the composition of the 4th-order first-derivative operator
with itself.  For that operator the semi-discrete energy
``sum(w_i (Pi^2 + (D1 W)^2 + P/2 (W^2-1)^2))`` with interior weights is
conserved exactly away from the edges, so the energy drift is set by the
time integrator alone.  Time: explicit Runge-Kutta, classical RK4 or
Butcher's seven-stage sixth-order method (default).
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .errors import ConfigError, NumericalError
from .grid import FieldState, TortoiseGrid, d1

log = logging.getLogger(__name__)

BOUNDARY_MODES = ("causal_buffer", "outgoing")


@dataclass(frozen=True)
class Tableau:
    c: tuple
    a: tuple
    b: tuple


RK4 = Tableau(
    c=(0.0, 0.5, 0.5, 1.0),
    a=((), (0.5,), (0.0, 0.5), (0.0, 0.0, 1.0)),
    b=(1 / 6, 1 / 3, 1 / 3, 1 / 6),
)

RK6 = Tableau(
    c=(0.0, 1 / 3, 2 / 3, 1 / 3, 1 / 2, 1 / 2, 1.0),
    a=(
        (),
        (1 / 3,),
        (0.0, 2 / 3),
        (1 / 12, 1 / 3, -1 / 12),
        (-1 / 16, 9 / 8, -3 / 16, -3 / 8),
        (0.0, 9 / 8, -3 / 8, -3 / 4, 1 / 2),
        (9 / 44, -9 / 11, 63 / 44, 18 / 11, 0.0, -16 / 11),
    ),
    b=(11 / 120, 0.0, 27 / 40, 27 / 40, -4 / 15, -4 / 15, 11 / 120),
)

INTEGRATORS = {"rk4": RK4, "rk6": RK6}


@dataclass(frozen=True)
class EvolutionConfig:
    """Time stepping controls.

    ``window`` is the observation interval ``(x_a, x_b)`` protected by the
    causal buffer; ``None`` skips the buffer check.
    """

    cfl_ratio: float = 0.25
    t_end: float = 1.0
    observer_stride: int = 1
    boundary_mode: str = "causal_buffer"
    integrator: str = "rk6"
    window: Optional[tuple] = None
    support_margin: float = 0.0

    def __post_init__(self):
        if not 0 < self.cfl_ratio <= 1:
            raise ConfigError(f"cfl_ratio must lie in (0, 1], got {self.cfl_ratio!r}")
        if not self.t_end > 0:
            raise ConfigError(f"t_end must be positive, got {self.t_end!r}")
        if int(self.observer_stride) != self.observer_stride or self.observer_stride < 1:
            raise ConfigError(f"observer_stride must be an integer >= 1, got {self.observer_stride!r}")
        if self.boundary_mode not in BOUNDARY_MODES:
            raise ConfigError(f"boundary_mode must be one of {BOUNDARY_MODES}, got {self.boundary_mode!r}")
        if self.integrator not in INTEGRATORS:
            raise ConfigError(f"integrator must be one of {tuple(INTEGRATORS)}, got {self.integrator!r}")
        if self.window is not None and not self.window[0] <= self.window[1]:
            raise ConfigError(f"observation window must satisfy x_a <= x_b, got {self.window!r}")


class EvolutionAborted(NumericalError):
    """Non-finite values appeared; ``state`` holds the last good time level."""

    def __init__(self, message, state, step):
        super().__init__(message)
        self.state = state
        self.step = step


def _accel(W: np.ndarray, grid: TortoiseGrid, outgoing: bool, Pi: Optional[np.ndarray] = None):
    acc = d1(d1(W, grid.dx), grid.dx)
    acc -= grid.P * W * (W * W - 1.0)
    if outgoing:
        acc[0] = d1(Pi[:5], grid.dx)[0]
        acc[-1] = -d1(Pi[-5:], grid.dx)[-1]
    return acc


def _velocity(W: np.ndarray, Pi: np.ndarray, grid: TortoiseGrid, outgoing: bool):
    if not outgoing:
        return Pi
    vel = Pi.copy()
    vel[0] = d1(W[:5], grid.dx)[0]
    vel[-1] = -d1(W[-5:], grid.dx)[-1]
    return vel


def rhs(state: FieldState, grid: TortoiseGrid, boundary_mode: str = "causal_buffer"):
    """``(dW/dt, dPi/dt)`` of the first-order system."""
    if not (np.all(np.isfinite(state.W)) and np.all(np.isfinite(state.Pi))):
        raise NumericalError(f"non-finite state at t={state.t!r}")
    outgoing = boundary_mode == "outgoing"
    return (_velocity(state.W, state.Pi, grid, outgoing).copy(),
            _accel(state.W, grid, outgoing, state.Pi))


def _rk_step(W, Pi, grid, dt, tab: Tableau, outgoing: bool):
    kW, kP = [], []
    for i, row in enumerate(tab.a):
        if i == 0:
            Wi, Pii = W, Pi
        else:
            Wi = W.copy()
            Pii = Pi.copy()
            for aij, kw, kp in zip(row, kW, kP):
                if aij != 0.0:
                    Wi += (dt * aij) * kw
                    Pii += (dt * aij) * kp
        kW.append(_velocity(Wi, Pii, grid, outgoing))
        kP.append(_accel(Wi, grid, outgoing, Pii))
    Wn = W.copy()
    Pn = Pi.copy()
    for bi, kw, kp in zip(tab.b, kW, kP):
        if bi != 0.0:
            Wn += (dt * bi) * kw
            Pn += (dt * bi) * kp
    return Wn, Pn


def step(state: FieldState, grid: TortoiseGrid, dt: float, config: EvolutionConfig = EvolutionConfig()):
    """Advance one Runge-Kutta step; ``dt`` may not exceed ``cfl_ratio * dx``."""
    if dt > config.cfl_ratio * grid.dx * (1 + 1e-12):
        raise ConfigError(f"time step {dt!r} violates the CFL bound {config.cfl_ratio * grid.dx!r}")
    Wn, Pn = _rk_step(state.W, state.Pi, grid, dt, INTEGRATORS[config.integrator],
                      config.boundary_mode == "outgoing")
    return FieldState(state.t + dt, Wn, Pn)


class Observer:
    """Samples a functional of the state; subclasses implement ``measure``."""

    name = "observer"

    def __init__(self):
        self.times: list = []
        self.values: list = []

    def observe(self, state: FieldState, grid: TortoiseGrid) -> None:
        self.times.append(state.t)
        self.values.append(self.measure(state, grid))

    def measure(self, state: FieldState, grid: TortoiseGrid):
        raise NotImplementedError

    def record(self):
        return {"t": np.asarray(self.times), "values": self.values}


class FunctionObserver(Observer):
    """Observer wrapping a plain function ``fn(state, grid)``."""

    def __init__(self, name: str, fn: Callable):
        super().__init__()
        self.name = name
        self.fn = fn

    def measure(self, state, grid):
        return self.fn(state, grid)


@dataclass
class RunResult:
    final: FieldState
    records: dict
    steps: int
    dt: float
    wall_time: float
    observers: list = field(default_factory=list)


def plan_steps(grid: TortoiseGrid, config: EvolutionConfig) -> tuple[int, float]:
    """Number of steps and the uniform step landing exactly on ``t_end``."""
    dt_max = config.cfl_ratio * grid.dx
    steps = max(1, math.ceil(config.t_end / dt_max - 1e-9))
    return steps, config.t_end / steps


def admissible_t_end(grid: TortoiseGrid, config: EvolutionConfig) -> float:
    xa, xb = config.window
    return min(xa - grid.x_min, grid.x_max - xb) - config.support_margin


def run(initial: FieldState, grid: TortoiseGrid, config: EvolutionConfig,
        observers: Iterable[Observer] = ()) -> RunResult:
    """Evolve ``initial`` to ``config.t_end``, calling observers every ``observer_stride`` steps."""
    initial.check(grid)
    if grid.n < 5:
        raise ConfigError("evolution needs at least 5 grid nodes")
    if config.boundary_mode == "causal_buffer" and config.window is not None:
        limit = admissible_t_end(grid, config)
        if config.t_end > limit:
            raise ConfigError(
                f"causal buffer violated: t_end={config.t_end!r} exceeds the maximal admissible "
                f"t_end={limit!r} for window {tuple(config.window)} on [{grid.x_min}, {grid.x_max}]"
            )
    observers = list(observers)
    steps, dt = plan_steps(grid, config)
    tab = INTEGRATORS[config.integrator]
    outgoing = config.boundary_mode == "outgoing"
    stride = int(config.observer_stride)

    start = time.perf_counter()
    state = initial.frozen()
    for obs in observers:
        obs.observe(state, grid)
    W, Pi = state.W, state.Pi
    for k in range(1, steps + 1):
        Wn, Pn = _rk_step(W, Pi, grid, dt, tab, outgoing)
        if not (math.isfinite(Wn.sum()) and math.isfinite(Pn.sum())):
            last = FieldState((k - 1) * dt, W, Pi)
            raise EvolutionAborted(f"non-finite values at step {k} (t={k * dt!r}); last good state kept", last, k)
        W, Pi = Wn, Pn
        if k % stride == 0:
            state = FieldState(k * dt, W, Pi).frozen()
            W, Pi = state.W, state.Pi
            for obs in observers:
                obs.observe(state, grid)
    final = FieldState(steps * dt, W, Pi).frozen()
    wall = time.perf_counter() - start
    log.info("evolution finished: %d steps, dt=%r, %.2fs", steps, dt, wall)
    records = {obs.name: obs.record() for obs in observers}
    return RunResult(final=final, records=records, steps=steps, dt=dt, wall_time=wall, observers=observers)
