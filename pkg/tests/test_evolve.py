import math

import numpy as np
import pytest

import oracles as O
from ymsw.errors import ConfigError
from ymsw.evolve import EvolutionAborted, EvolutionConfig, FunctionObserver, plan_steps, run, step
from ymsw.functionals import EnergyObserver, scalar_energy
from ymsw.grid import FieldState, InitialDataSpec, build_grid, make_initial_data


def gaussian(grid, amp, **kw):
    return make_initial_data(InitialDataSpec(kind="gaussian", amplitude=amp, **kw), grid)


@pytest.mark.parametrize("sign", [1, -1])
def test_vacuum_stays_put(sign):
    grid = build_grid(-30.0, 30.0, 301)
    st = make_initial_data(InitialDataSpec(kind="vacuum", sign=sign), grid)
    res = run(st, grid, EvolutionConfig(t_end=5.0))
    assert np.max(np.abs(res.final.W - sign)) < 1e-14
    assert np.max(np.abs(res.final.Pi)) < 1e-14


def test_finite_speed():
    grid = build_grid(-60.0, 60.0, 1201)
    res = run(gaussian(grid, 0.05), grid, EvolutionConfig(t_end=10.0))
    far = np.abs(grid.x) > 25
    assert np.max(np.abs(res.final.W[far] - 1)) < 1e-12
    assert np.max(np.abs(res.final.W - 1)) > 1e-3


def test_linear_regime():
    grid = build_grid(-40.0, 40.0, 801)
    cfg = EvolutionConfig(t_end=8.0)
    d1_ = run(gaussian(grid, 1e-6), grid, cfg).final.W - 1
    d2_ = run(gaussian(grid, 2e-6), grid, cfg).final.W - 1
    assert np.max(np.abs(d2_ - 2 * d1_)) < 1e-5 * np.max(np.abs(d2_))


def test_energy_conserved():
    grid = build_grid(-60.0, 60.0, 1201)
    obs = EnergyObserver()
    run(gaussian(grid, 0.05, mode="ingoing"), grid, EvolutionConfig(t_end=20.0, observer_stride=10), [obs])
    e = np.array([b.total for b in obs.values])
    assert np.max(np.abs(e - e[0])) / e[0] < 1e-8


def test_exact_static_solution_fourth_order():
    errs = []
    for n in (401, 801, 1601):
        grid = build_grid(-40.0, 40.0, n)
        W0 = O.exact_w1(grid.r)
        res = run(FieldState(0.0, W0, np.zeros(n)), grid, EvolutionConfig(t_end=5.0))
        inner = np.abs(grid.x) <= 20
        errs.append(np.max(np.abs(res.final.W - W0)[inner]))
    order = math.log2(errs[1] / errs[2])
    assert errs[2] < 1e-7
    assert order > 3.5


def test_rk4_and_rk6_agree():
    grid = build_grid(-30.0, 30.0, 601)
    a = run(gaussian(grid, 0.1), grid, EvolutionConfig(t_end=3.0, integrator="rk4")).final.W
    b = run(gaussian(grid, 0.1), grid, EvolutionConfig(t_end=3.0)).final.W
    assert np.max(np.abs(a - b)) < 1e-6


def test_outgoing_boundary_lets_energy_leave():
    grid = build_grid(-20.0, 20.0, 401)
    obs = EnergyObserver()
    run(gaussian(grid, 0.05, center=10.0, mode="ingoing"), grid,
        EvolutionConfig(t_end=50.0, boundary_mode="outgoing", observer_stride=20), [obs])
    e = np.array([b.total for b in obs.values])
    assert e[-1] < 0.2 * e[0]


def test_cfl_violation():
    grid = build_grid(-10.0, 10.0, 101)
    st = gaussian(grid, 0.01)
    with pytest.raises(ConfigError, match="CFL"):
        step(st, grid, 0.5 * grid.dx)
    step(st, grid, 0.25 * grid.dx)
    with pytest.raises(ConfigError):
        EvolutionConfig(cfl_ratio=1.5)


def test_causal_buffer_check():
    grid = build_grid(-50.0, 50.0, 501)
    with pytest.raises(ConfigError, match="maximal admissible t_end=40"):
        run(gaussian(grid, 0.01), grid, EvolutionConfig(t_end=45.0, window=(-10.0, 10.0)))


def test_plan_steps_lands_on_t_end():
    grid = build_grid(-10.0, 10.0, 101)
    n, dt = plan_steps(grid, EvolutionConfig(t_end=1.0))
    assert n * dt == pytest.approx(1.0, rel=1e-15)
    assert dt <= 0.25 * grid.dx


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_abort_keeps_last_state():
    grid = build_grid(-10.0, 10.0, 101)
    st = FieldState(0.0, np.full(grid.n, 1e120), np.zeros(grid.n))
    with pytest.raises(EvolutionAborted) as info:
        run(st, grid, EvolutionConfig(t_end=1.0))
    assert np.all(np.isfinite(info.value.state.W))


def test_observer_cadence():
    grid = build_grid(-10.0, 10.0, 101)
    obs = FunctionObserver("e", lambda s, g: scalar_energy(s, g).total)
    res = run(gaussian(grid, 0.01), grid, EvolutionConfig(t_end=1.0, observer_stride=4), [obs])
    assert len(obs.times) == res.steps // 4 + 1
    assert res.records["e"]["t"][0] == 0.0


def test_time_reversal():
    errs = []
    for n in (401, 801):
        grid = build_grid(-40.0, 40.0, n)
        st = gaussian(grid, 0.2, mode="ingoing")
        fwd = run(st, grid, EvolutionConfig(t_end=4.0)).final
        back = run(FieldState(0.0, fwd.W.copy(), -fwd.Pi), grid, EvolutionConfig(t_end=4.0)).final
        errs.append(np.max(np.abs(back.W - st.W)))
    assert errs[1] < 1e-7
    assert errs[0] / errs[1] > 8
