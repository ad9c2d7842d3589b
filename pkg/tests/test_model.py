import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deconvest.model import (ModelKind, ModelSpec, NonStationaryError, ParamBox, Theta, Trajectory,
                             as_series, default_box, make_rng, project_into_box, simulate,
                             simulate_ar1, simulate_sv, spawn_rngs, stationary_variance,
                             sv_noise_variance)
from deconvest.special import LOG_CHISQ_MEAN


@pytest.mark.parametrize("phi,s2,expected", [
    (0.0, 0.3, 0.3),
    (0.7, 0.3, 0.3 / 0.51),
    (0.99, 1e-6, 1e-6 / 0.0199),
])
def test_stationary_variance(phi, s2, expected):
    assert stationary_variance(Theta(phi, s2)) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("phi", [1.0, -1.0, 1.5, np.nan])
def test_nonstationary_theta_rejected(phi):
    with pytest.raises(NonStationaryError):
        Theta(phi, 0.3)


def test_theta_rejects_nonpositive_variance():
    with pytest.raises(ValueError):
        Theta(0.5, 0.0)


def test_theta_roundtrip():
    t = Theta(0.25, 0.75)
    assert Theta.from_array(t.as_array()) == t


def test_box_validation_and_grid():
    with pytest.raises(ValueError):
        ParamBox(0.5, 0.4, 0.1, 1.0)
    with pytest.raises(ValueError):
        ParamBox(-0.9, 0.9, 0.0, 1.0)
    g = ParamBox(-0.9, 0.9, 0.1, 1.0).grid(3)
    assert g.shape == (9, 2)
    # phi is the slow index
    assert np.all(g[:3, 0] == g[0, 0]) and g[0, 1] < g[1, 1] < g[2, 1]


def test_model_spec_defaults():
    ar = ModelSpec.ar1(0.1)
    assert ar.kind is ModelKind.GAUSSIAN_AR1
    assert ar.box.s2_lo == pytest.approx(0.15)
    sv = ModelSpec.sv(sigma_eps2=0.1)
    assert sv.beta == pytest.approx(1.0 / (np.sqrt(5.0) * np.pi))
    assert sv.box == default_box(ModelKind.LOG_SV, 0.1)
    with pytest.raises(ValueError):
        ModelSpec(ModelKind.LOG_SV, 0.5, beta=1.0)
    with pytest.raises(ValueError):
        ModelSpec.ar1(0.0)


def test_sv_noise_variance_values():
    assert sv_noise_variance(1.0 / (np.sqrt(5.0) * np.pi)) == pytest.approx(0.1, rel=1e-12)
    assert sv_noise_variance(1.0) == pytest.approx(4.9348, abs=1e-4)


def test_ar1_moments_large_sample():
    t = Theta(0.7, 0.3)
    traj = simulate_ar1(t, 0.1, 100_000, make_rng(11))
    g2 = stationary_variance(t)
    x = traj.x
    # AR(1) long-run inflation for the SE of the sample variance
    se_var = g2 * np.sqrt(2.0 * (1 + 0.49) / (1 - 0.49) / x.size)
    assert abs(x.var() - g2) < 3 * se_var
    acov = np.mean((x[1:] - x.mean()) * (x[:-1] - x.mean()))
    assert abs(acov - 0.7 * g2) < 3 * se_var * 1.5
    assert abs(traj.z.var() - g2 - 0.1) < 3 * se_var * 1.2


def test_white_noise_case_has_no_autocorrelation():
    traj = simulate_ar1(Theta(0.0, 1.0), 1e-12, 100_000, make_rng(12))
    z = traj.z
    r1 = np.corrcoef(z[1:], z[:-1])[0, 1]
    assert abs(r1) < 3 / np.sqrt(z.size)


def test_simulation_is_deterministic():
    a = simulate(ModelSpec.ar1(0.1), Theta(0.7, 0.3), 50, 5)
    b = simulate(ModelSpec.ar1(0.1), Theta(0.7, 0.3), 50, 5)
    assert np.array_equal(a.z, b.z) and np.array_equal(a.x, b.x)


def test_sv_noise_is_centred_with_target_variance(beta_study):
    traj = simulate_sv(Theta(0.7, 0.3), beta_study, 1_000_000, make_rng(13))
    eps = traj.z - traj.x
    assert abs(eps.mean()) < 3 * eps.std() / np.sqrt(eps.size)
    assert eps.var() == pytest.approx(0.1, rel=0.01)
    assert np.allclose(np.log(traj.y**2) - beta_study * LOG_CHISQ_MEAN, traj.z)


def test_sv_and_ar1_share_first_two_moments(beta_study):
    t = Theta(0.7, 0.3)
    zs = simulate_sv(t, beta_study, 200_000, make_rng(14)).z
    za = simulate_ar1(t, 0.1, 200_000, make_rng(15)).z
    se = np.sqrt(2 * (1.49 / 0.51) / zs.size) * za.var()
    assert abs(zs.mean() - za.mean()) < 3 * np.sqrt(2 * za.var() * 1.7 / 0.3 / zs.size)
    assert abs(zs.var() - za.var()) < 3 * np.sqrt(2) * se * 1.5


@pytest.mark.parametrize("raw,expected", [
    ((0.7, 0.3), (0.7, 0.3)),
    ((1.2, 0.3), (0.99, 0.3)),
    ((0.7, 0.05), (0.7, 0.15)),
])
def test_project_into_box_examples(raw, expected):
    box = ParamBox(-0.99, 0.99, 0.15, 2.0)
    assert project_into_box(np.array(raw), box).as_array() == pytest.approx(expected)


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_project_into_box_is_idempotent(a, b):
    box = ParamBox(-0.99, 0.99, 0.15, 2.0)
    once = project_into_box(np.array([a, b]), box)
    assert project_into_box(once, box) == once
    assert box.contains(once)


def test_spawned_streams_differ_and_repeat():
    a = [r.standard_normal(3) for r in spawn_rngs(3, 2)]
    b = [r.standard_normal(3) for r in spawn_rngs(3, 2)]
    assert np.array_equal(a[0], b[0]) and not np.array_equal(a[0], a[1])


def test_as_series_validation():
    assert as_series([[1.0], [2.0]]).shape == (2,)
    with pytest.raises(ValueError):
        as_series([1.0])
    with pytest.raises(ValueError):
        as_series([1.0, np.inf])
    with pytest.raises(ValueError):
        as_series(np.zeros((2, 2)))


def test_trajectory_length_mismatch():
    with pytest.raises(ValueError):
        Trajectory(z=np.zeros(3), x=np.zeros(2))
