import math

import numpy as np
import pytest

import oracles as O
from ymsw.background import r_of_r_star
from ymsw.grid import build_grid, read_state_file
from ymsw.stationary import (BracketError, ShootingConfig, export_profile, find_a_n, integrate_static,
                             stationary_energy)

A1 = 2 - math.sqrt(3)


@pytest.fixture(scope="module")
def w1():
    return find_a_n(1)


@pytest.fixture(scope="module")
def w2():
    return find_a_n(2)


def test_first_threshold_is_exact(w1):
    assert w1.a_n == pytest.approx(A1, abs=1e-12)
    assert w1.zero_count == 1
    assert w1.asymptote == -1.0


def test_profile_matches_closed_form(w1):
    x = np.linspace(-60.0, 300.0, 721)
    exact = O.exact_w1(r_of_r_star(x))
    assert np.max(np.abs(w1.evaluate(x) - exact)) < 1e-8


def test_closed_form_solves_static_equation():
    assert O.w1_residual_symbolic() == 0


def test_energy_oracles_agree():
    assert O.exact_w1_energy() == pytest.approx(O.W1_ENERGY_CLOSED, rel=1e-14)


def test_energy_of_first_solution(w1):
    assert stationary_energy(w1) == pytest.approx(O.exact_w1_energy(), rel=1e-12)
    assert stationary_energy(w1, method="quadrature") == pytest.approx(O.exact_w1_energy(), rel=1e-10)


def test_second_solution(w1, w2):
    assert w2.a_n < w1.a_n
    assert w2.zero_count == 2
    assert w2.asymptote == 1.0
    assert stationary_energy(w1) < stationary_energy(w2) < 0.25


def test_bisection_halves_to_adjacent_doubles(w2):
    ws = np.array(w2.widths)
    assert np.allclose(ws[1:] / ws[:-1], 0.5, rtol=1e-6)
    lo, hi = w2.bracket
    assert np.nextafter(lo, 1.0) >= hi


def test_classification_brackets_threshold():
    above = integrate_static(A1 + 1e-6)
    below = integrate_static(A1 - 1e-6)
    assert above.zero_count <= 1 < below.zero_count
    assert above.classification in ("overshoot", "undershoot")
    assert integrate_static(1.0).classification == "limit +1"
    assert integrate_static(0.0).zero_count == 0


def test_mass_scaling():
    sol = find_a_n(1, m=2.0)
    assert sol.a_n == pytest.approx(A1, abs=1e-11)
    with pytest.raises(ValueError):
        sol.evaluate(0.0, m=1.0)


def test_bracket_error():
    with pytest.raises(BracketError, match="widen the bracket"):
        find_a_n(1, ShootingConfig(bracket=(0.3, 0.9)))
    with pytest.raises(ValueError):
        ShootingConfig(bracket=(0.5, 0.4))
    with pytest.raises(ValueError):
        find_a_n(0)


def test_export_round_trip(tmp_path, w1):
    grid = build_grid(-50.0, 50.0, 201)
    state = export_profile(w1, grid, tmp_path / "w1.dat")
    W, Pi = read_state_file(tmp_path / "w1.dat", grid)
    assert np.array_equal(W, state.W) and np.all(Pi == 0)
    with pytest.raises(ValueError):
        stationary_energy(w1, method="simpson")
