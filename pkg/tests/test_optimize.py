import numpy as np
import pytest

from deconvest.model import ParamBox
from deconvest.optimize import MinimizeResult, NelderMeadOptions, multistart_minimize, nelder_mead_box

BOX = ParamBox(-0.9, 0.9, 0.1, 2.0)


def quad(v):
    return (v[0] - 0.3) ** 2 + 2.0 * (v[1] - 0.8) ** 2


def test_interior_minimum():
    x, f, conv, n_eval = nelder_mead_box(quad, np.array([0.0, 1.5]), BOX)
    assert conv and n_eval > 3
    assert x == pytest.approx([0.3, 0.8], abs=1e-6)


def test_minimum_on_boundary_is_reached_with_iterates_in_box():
    seen = []

    def f(v):
        seen.append(v.copy())
        return (v[0] - 2.0) ** 2 + (v[1] + 1.0) ** 2

    x, _, _, _ = nelder_mead_box(f, np.array([0.0, 1.0]), BOX)
    assert x == pytest.approx([0.9, 0.1], abs=1e-6)
    pts = np.array(seen)
    assert np.all(pts >= BOX.lower) and np.all(pts <= BOX.upper)


def test_multistart_picks_lowest_basin_and_is_deterministic():
    def two_wells(v):
        return min((v[0] + 0.6) ** 2 + 0.1, (v[0] - 0.6) ** 2) + (v[1] - 1.0) ** 2

    r1 = multistart_minimize(two_wells, BOX)
    r2 = multistart_minimize(two_wells, BOX)
    assert isinstance(r1, MinimizeResult)
    assert r1.theta_hat.phi == pytest.approx(0.6, abs=1e-5)
    assert r1 == r2
    assert r1.restarts_used == 9 and r1.converged


def test_ties_keep_first_start():
    res = multistart_minimize(lambda v: 0.0, BOX, starts=np.array([[0.1, 0.5], [0.2, 0.6]]))
    assert res.theta_hat.phi == pytest.approx(0.1)


def test_nonfinite_everywhere_raises():
    with pytest.raises(FloatingPointError):
        multistart_minimize(lambda v: np.nan, BOX, NelderMeadOptions(max_iter=5))


def test_options_validation():
    with pytest.raises(ValueError):
        NelderMeadOptions(xtol=0)
    with pytest.raises(ValueError):
        NelderMeadOptions(initial_step=1.5)


def test_result_to_dict():
    res = multistart_minimize(quad, BOX, NelderMeadOptions(grid=1))
    d = res.to_dict()
    assert set(d) == {"theta_hat", "objective_value", "restarts_used", "converged", "n_evaluations"}
