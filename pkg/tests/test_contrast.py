import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad, trapezoid
from sklearn.base import clone

from deconvest.contrast import (ContrastEstimator, ContrastObjective, QuadratureConfig, estimate,
                                f_star_eps_sv, gaussian_log_fstar, l2_norm_sq, log_f_star_eps_sv,
                                objective, population_contrast_ar1, u_star_gaussian,
                                u_star_quadrature, u_star_sv)
from deconvest.exceptions import DomainError
from deconvest.model import ModelSpec, ParamBox, Theta, make_rng, simulate, stationary_variance
from deconvest.special import LOG_CHISQ_MEAN

thetas = st.builds(Theta, st.floats(-0.95, 0.95), st.floats(0.16, 2.5))


def l_theta(theta, x):
    g2 = stationary_variance(theta)
    return theta.phi * x * np.exp(-0.5 * x**2 / g2) / np.sqrt(2 * np.pi * g2)


# -- l2 norm ---------------------------------------------------------------

def test_l2_norm_reference_value(theta0):
    assert l2_norm_sq(theta0) == pytest.approx(0.05301, abs=1e-5)
    numeric, _ = quad(lambda x: l_theta(theta0, x) ** 2, -np.inf, np.inf, epsabs=1e-13)
    assert l2_norm_sq(theta0) == pytest.approx(numeric, rel=1e-9)


def test_l2_norm_zero_phi_and_scaling():
    assert l2_norm_sq(Theta(0.0, 0.4)) == 0.0
    # doubling phi at fixed gamma^2 quadruples the norm
    a = Theta(0.3, 0.5 * (1 - 0.09))
    b = Theta(0.6, 0.5 * (1 - 0.36))
    assert l2_norm_sq(b) == pytest.approx(4.0 * l2_norm_sq(a), rel=1e-12)


# -- Gaussian deconvolution --------------------------------------------------

def test_u_star_gaussian_reference(theta0):
    assert u_star_gaussian(theta0, 0.1, 1.0) == pytest.approx(0.17291, abs=1e-4)
    assert u_star_gaussian(theta0, 0.1, 0.0) == 0.0
    assert np.all(u_star_gaussian(Theta(0.0, 0.3), 0.1, np.linspace(-3, 3, 7)) == 0.0)


def test_u_star_gaussian_requires_identifiable_box():
    with pytest.raises(DomainError):
        u_star_gaussian(Theta(0.0, 0.05), 0.1, 1.0)


@given(thetas, st.floats(-6, 6))
def test_u_star_gaussian_is_odd_and_real(theta, y):
    v = u_star_gaussian(theta, 0.1, np.array([y, -y]))
    assert np.isrealobj(v)
    assert v[0] == pytest.approx(-v[1], abs=1e-14)


def test_u_star_gaussian_satisfies_deconvolution_identity(theta0):
    # E[u(x + eps)] = l(x) for eps ~ N(0, 0.1)
    e, w = np.polynomial.hermite_e.hermegauss(80)
    w = w / w.sum()
    for x in (-1.0, 0.3, 1.7):
        val = np.dot(w, u_star_gaussian(theta0, 0.1, x + np.sqrt(0.1) * e))
        assert val == pytest.approx(l_theta(theta0, x), abs=1e-12)


def test_closed_form_matches_generic_quadrature():
    rng = make_rng(2)
    for _ in range(20):
        th = Theta(rng.uniform(-0.9, 0.9), rng.uniform(0.2, 2.0))
        y = rng.uniform(-3, 3)
        ref = u_star_gaussian(th, 0.1, y)
        got = u_star_quadrature(th, np.array([y]), gaussian_log_fstar(0.1), QuadratureConfig())[0]
        assert got == pytest.approx(ref, rel=1e-6, abs=1e-12)


# -- log-chi-square characteristic function ----------------------------------

def test_fstar_sv_basics():
    assert f_star_eps_sv(1.0, 0.0) == pytest.approx(1.0 + 0.0j, abs=1e-15)
    y = np.array([0.5, 1.0, 5.0])
    assert np.abs(f_star_eps_sv(1.0, y)) == pytest.approx(np.cosh(np.pi * y) ** -0.5, abs=1e-10)
    assert np.allclose(f_star_eps_sv(0.3, -y), np.conj(f_star_eps_sv(0.3, y)), atol=1e-12)


def test_fstar_sv_matches_empirical_characteristic_function(beta_study):
    xi = make_rng(21).standard_normal(400_000)
    eps = beta_study * (np.log(xi**2) - LOG_CHISQ_MEAN)
    for y in (0.5, 2.0, 6.0):
        emp = np.exp(1j * y * eps)
        se = np.sqrt(np.var(emp.real) / eps.size) + np.sqrt(np.var(emp.imag) / eps.size)
        assert abs(emp.mean() - f_star_eps_sv(beta_study, y)) < 4 * se


def test_log_fstar_is_finite_far_in_the_tail():
    lf = log_f_star_eps_sv(1.0, np.array([50.0, 200.0]))
    assert np.all(np.isfinite(lf))
    assert lf.real == pytest.approx(-0.5 * np.pi * np.array([50.0, 200.0]) + 0.5 * np.log(2), rel=1e-6)


# -- SV quadrature -------------------------------------------------------------

def test_u_star_sv_zero_phi(beta_study):
    assert np.all(u_star_sv(Theta(0.0, 0.3), beta_study, np.array([-1.0, 0.5])) == 0.0)


def test_u_star_sv_two_rule_cross_validation(theta0, beta_study):
    a = u_star_sv(theta0, beta_study, np.array([1.0]))[0]
    b = u_star_sv(theta0, beta_study, np.array([1.0]), QuadratureConfig(T=37.0, nodes=5001))[0]
    assert b == pytest.approx(a, rel=1e-6)


def test_u_star_sv_node_halving_is_converged(theta0, beta_study):
    y = np.linspace(-2, 2, 9)
    a = u_star_sv(theta0, beta_study, y, QuadratureConfig(nodes=2048))
    b = u_star_sv(theta0, beta_study, y, QuadratureConfig(nodes=4095))
    assert np.allclose(a, b, rtol=1e-6, atol=1e-12)


def test_u_star_sv_satisfies_deconvolution_identity(theta0, beta_study):
    # integrate u(x + beta (w - E w)) against the log-chi-square density of w
    w = np.linspace(-40.0, 5.0, 20001)
    dens = np.exp(0.5 * w - 0.5 * np.exp(w)) / np.sqrt(2 * np.pi)
    for x in (-0.8, 0.4, 1.5):
        u = u_star_sv(theta0, beta_study, x + beta_study * (w - LOG_CHISQ_MEAN))
        assert trapezoid(u * dens, w) == pytest.approx(l_theta(theta0, x), abs=1e-6)


def test_u_star_sv_at_zero_is_not_zero(theta0, beta_study):
    # skewed noise: no odd symmetry, unlike the Gaussian case
    assert abs(u_star_sv(theta0, beta_study, np.array([0.0]))[0]) > 1e-3


# -- empirical objective --------------------------------------------------------

def test_objective_on_zero_data(theta0):
    z = np.zeros(20)
    g = np.sqrt(stationary_variance(theta0))
    expected = 0.49 * g / (4 * np.sqrt(np.pi))
    assert objective(theta0, z, ModelSpec.ar1(0.1)) == pytest.approx(expected, rel=1e-12)
    assert objective(Theta(0.0, 0.5), make_rng(0).standard_normal(30), ModelSpec.ar1(0.1)) == 0.0


def test_sv_pair_sum_matches_pointwise_quadrature(beta_study):
    m = ModelSpec.sv(sigma_eps2=0.1)
    z = simulate(m, Theta(0.7, 0.3), 300, make_rng(4)).z
    obj = ContrastObjective(m, z)
    for th in (Theta(0.7, 0.3), Theta(-0.4, 1.2), Theta(0.95, 0.05)):
        direct = np.dot(z[1:], u_star_sv(th, beta_study, z[:-1]))
        assert obj.pair_sum(th) == pytest.approx(direct, rel=1e-8, abs=1e-10)


def test_grid_argmin_near_truth_large_sample(theta0):
    m = ModelSpec.ar1(0.1)
    z = simulate(m, theta0, 10_000, make_rng(5)).z
    obj = ContrastObjective(m, z)
    phis = np.arange(0.5, 0.91, 0.05)
    s2s = np.arange(0.2, 0.41, 0.025)
    vals = np.array([[obj(Theta(p, s)) for s in s2s] for p in phis])
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    assert abs(phis[i] - 0.7) <= 0.05 + 1e-9 and abs(s2s[j] - 0.3) <= 0.025 + 1e-9


# -- population contrast ---------------------------------------------------------

def test_population_contrast_at_truth(theta0):
    assert population_contrast_ar1(theta0, theta0) == pytest.approx(-0.05301, abs=1e-5)
    assert population_contrast_ar1(Theta(0.0, 0.5), theta0) == 0.0


def test_population_contrast_gradient_vanishes_at_truth(theta0):
    h = 1e-5
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        up = population_contrast_ar1(Theta.from_array(theta0.as_array() + e), theta0)
        dn = population_contrast_ar1(Theta.from_array(theta0.as_array() - e), theta0)
        assert (up - dn) / (2 * h) == pytest.approx(0.0, abs=1e-6)


@given(thetas)
def test_population_contrast_minimised_at_truth(theta):
    t0 = Theta(0.7, 0.3)
    assert population_contrast_ar1(theta, t0) >= population_contrast_ar1(t0, t0) - 1e-15


def test_population_contrast_identity(theta0):
    # P m_theta = ||l_theta - l_theta0||^2 - ||l_theta0||^2
    th = Theta(0.2, 0.9)
    diff, _ = quad(lambda x: (l_theta(th, x) - l_theta(theta0, x)) ** 2, -np.inf, np.inf, epsabs=1e-13)
    assert population_contrast_ar1(th, theta0) == pytest.approx(diff - l2_norm_sq(theta0), abs=1e-10)


# -- estimation ----------------------------------------------------------------

def test_estimate_on_zero_data_sets_phi_to_zero():
    res = estimate(ModelSpec.ar1(0.1), np.zeros(50))
    assert abs(res.theta_hat.phi) < 1e-5


def test_estimate_is_deterministic_and_optimal(theta0):
    m = ModelSpec.ar1(0.1)
    z = simulate(m, theta0, 1000, make_rng(6)).z
    a, b = estimate(m, z), estimate(m, z)
    assert a.theta_hat == b.theta_hat
    assert m.box.contains(a.theta_hat)
    assert a.objective_value <= objective(theta0, z, m)


def test_sv_estimate_study_setting(theta0):
    m = ModelSpec.sv(sigma_eps2=0.1)
    z = simulate(m, theta0, 1000, make_rng(7)).z
    th = estimate(m, z).theta_hat
    assert abs(th.phi - 0.7) < 0.15 and abs(th.sigma2 - 0.3) < 0.15


def test_estimator_api(theta0):
    est = ContrastEstimator(model="ar1", sigma_eps2=0.1, grid=2)
    assert clone(est).get_params() == est.get_params()
    z = simulate(ModelSpec.ar1(0.1), theta0, 800, make_rng(8)).z
    est.fit(z)
    ci = est.confidence_intervals(0.05)
    assert len(ci) == 2 and all(c.lo < c.hi for c in ci)
    assert est.n_obs_ == 800
    boxed = ContrastEstimator(box=ParamBox(0.5, 0.9, 0.2, 0.5)).fit(z)
    assert boxed.spec_.box.contains(boxed.theta_)


def test_quadrature_config_validation():
    with pytest.raises(ValueError):
        QuadratureConfig(nodes=1)
    with pytest.raises(ValueError):
        QuadratureConfig(tol=0.0)
