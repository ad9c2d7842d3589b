import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from deconvest.ingest import (KAPPA_EXACT, MalformedInputError, PriceSeries, prices_from_returns,
                              read_prices_csv, read_series_csv, read_trajectory_csv, to_log_chisq,
                              to_returns, write_series_csv, write_trajectory_csv)
from deconvest.model import Trajectory


def test_constant_prices_give_zero_returns():
    r = to_returns(PriceSeries(np.full(5, 42.0)))
    assert np.all(r == 0.0) and r.size == 4


def test_length_contract_and_centering():
    s = prices_from_returns(np.random.default_rng(0).standard_normal(1000))
    r = to_returns(s)
    assert r.size == 1000
    assert abs(r.mean()) < 1e-13


@given(arrays(float, st.integers(2, 50), elements=st.floats(-5, 5)))
def test_price_round_trip(ret):
    back = 100.0 * np.diff(np.log(prices_from_returns(ret)))
    assert np.allclose(back, ret, atol=1e-10)


def test_log_chisq_modes(caplog):
    assert to_log_chisq(np.array([2.0]))[0] == pytest.approx(np.log(4.0) + 1.27, abs=1e-12)
    assert to_log_chisq(np.array([2.0]))[0] == pytest.approx(2.65629, abs=1e-5)
    assert KAPPA_EXACT == pytest.approx(1.27036, abs=1e-5)
    assert to_log_chisq(np.array([1.0]), mode="exact")[0] == pytest.approx(KAPPA_EXACT)
    with caplog.at_level(logging.WARNING):
        z, count = to_log_chisq(np.array([0.0, 1.0]), return_count=True)
    assert count == 1 and np.isfinite(z[0]) and "floored" in caplog.text
    with pytest.raises(ValueError):
        to_log_chisq(np.array([1.0]), mode="other")


def test_price_validation():
    with pytest.raises(MalformedInputError):
        PriceSeries([100.0])
    with pytest.raises(MalformedInputError):
        PriceSeries([100.0, -1.0])
    with pytest.raises(MalformedInputError):
        PriceSeries([100.0, 101.0], dates=["a"])


def test_csv_round_trips(tmp_path):
    p = tmp_path / "z.csv"
    write_series_csv(p, [0.1, -2.5, 3.0], "z")
    assert np.array_equal(read_series_csv(p), [0.1, -2.5, 3.0])
    t = tmp_path / "traj.csv"
    traj = Trajectory(z=np.array([1.0, 2.0]), x=np.array([0.5, 1.5]))
    write_trajectory_csv(t, traj)
    back = read_trajectory_csv(t)
    assert np.array_equal(back.z, traj.z) and np.array_equal(back.x, traj.x)
    write_trajectory_csv(t, Trajectory(z=np.array([1.0, 2.0])))
    assert read_trajectory_csv(t).x is None


def test_malformed_files(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("price\n100\nabc\n")
    with pytest.raises(MalformedInputError):
        read_prices_csv(bad)
    with pytest.raises(MalformedInputError):
        read_series_csv(bad, "missing")
    with pytest.raises(MalformedInputError):
        read_series_csv(tmp_path / "nope.csv")
    (tmp_path / "short.csv").write_text("z\n")
    with pytest.raises(MalformedInputError):
        read_series_csv(tmp_path / "short.csv")


def test_bundled_synthetic_prices():
    from importlib import resources

    with resources.as_file(resources.files("deconvest") / "data" / "synthetic_prices.csv") as p:
        prices = read_prices_csv(p)
    assert prices.s.size == 1001 and prices.dates is not None
    z = to_log_chisq(to_returns(prices))
    assert z.size == 1000 and np.all(np.isfinite(z))
