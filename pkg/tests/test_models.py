import numpy as np
import pytest
import scipy.integrate
import scipy.stats

from gvisid.models import DuffingModel, GaussianPrior, LinearGaussianModel
from gvisid.models.duffing import drift, increment_cov, noise_map, taylor_mean, transition_cov
from util import random_duffing_model, random_linear_model

LOG_2PI = np.log(2 * np.pi)


class TestLinearGaussian:
    def test_transition_standard_normal_at_zero(self):
        m = LinearGaussianModel(A=[[0.0]], B=np.zeros((1, 1)), C=[[1.0]],
                                D=np.zeros((1, 1)), Sw=[[1.0]], Sv=[[1.0]])
        assert m.logp_transition([0.0], [0.0], [0.0]) == pytest.approx(-0.5 * LOG_2PI)

    def test_transition_zero_innovation(self):
        m = LinearGaussianModel(A=[[1.0]], B=np.zeros((1, 1)), C=[[1.0]],
                                D=np.zeros((1, 1)), Sw=[[1.0]], Sv=[[1.0]])
        x = np.array([1.7])
        assert m.logp_transition(x, x, [0.0]) == pytest.approx(-0.5 * LOG_2PI)

    def test_transition_half_gain(self):
        m = LinearGaussianModel(A=[[0.5]], B=np.zeros((1, 1)), C=[[1.0]],
                                D=np.zeros((1, 1)), Sw=[[1.0]], Sv=[[1.0]])
        # innovation 1 - 0.5*2 = 0
        assert m.logp_transition([1.0], [2.0], [0.0]) == pytest.approx(-0.5 * LOG_2PI)

    def test_measurement_identity(self):
        m = LinearGaussianModel(A=np.zeros((2, 2)), B=np.zeros((2, 1)),
                                C=np.eye(2), D=np.zeros((2, 1)),
                                Sw=np.eye(2), Sv=np.eye(2))
        x = np.array([0.3, -0.4])
        assert m.logp_measurement(x, x, [0.0]) == pytest.approx(-LOG_2PI)

    def test_densities_match_scipy(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            m = random_linear_model(rng, nx=3, ny=2, nu=2)
            xk = rng.standard_normal(3)
            xp = rng.standard_normal(3)
            up = rng.standard_normal(2)
            ref = scipy.stats.multivariate_normal(
                m.A @ xp + m.B @ up, m.Sw @ m.Sw.T).logpdf(xk)
            assert m.logp_transition(xk, xp, up) == pytest.approx(ref, abs=1e-12)
            yk = rng.standard_normal(2)
            ref = scipy.stats.multivariate_normal(
                m.C @ xk + m.D @ up, m.Sv @ m.Sv.T).logpdf(yk)
            assert m.logp_measurement(yk, xk, up) == pytest.approx(ref, abs=1e-12)
            ref = scipy.stats.multivariate_normal(
                m.prior.mean, m.prior.chol @ m.prior.chol.T).logpdf(xk)
            assert m.logp_initial(xk) == pytest.approx(ref, abs=1e-12)

    def test_transition_is_quadratic_form(self):
        # second difference along any direction in (x_k, x_{k-1}) is constant
        rng = np.random.default_rng(1)
        m = random_linear_model(rng, nx=2, ny=1, nu=1)
        x = rng.standard_normal(4)
        d = rng.standard_normal(4)
        u = rng.standard_normal(1)

        def f(z):
            return m.logp_transition(z[:2], z[2:], u)

        h = 0.5
        second = []
        for c in (0.0, 1.3, -2.1):
            z = x + c * d
            second.append(f(z + h * d) - 2 * f(z) + f(z - h * d))
        assert np.ptp(second) <= 1e-8 * max(1.0, abs(second[0]))

    def test_theta_round_trip(self):
        rng = np.random.default_rng(2)
        m = random_linear_model(rng, nx=3, ny=2, nu=1)
        m2 = m.with_theta(m.theta)
        for name in ("A", "B", "C", "D", "Sw", "Sv"):
            np.testing.assert_allclose(getattr(m2, name), getattr(m, name),
                                       rtol=1e-10, atol=1e-12)

    def test_flat_prior_contributes_zero(self):
        rng = np.random.default_rng(3)
        m = random_linear_model(rng, prior=None)
        assert m.logp_initial(rng.standard_normal(2)) == 0.0


TABLE_PARAMS = dict(alpha=1.0, beta=-1.0, delta=0.2, gamma=0.3,
                    lsw=-2.3, lsv=-3.0)


class TestDuffing:
    def test_zero_drift_moments(self):
        dt = 0.1
        m = DuffingModel(alpha=0.0, beta=0.0, delta=0.0, gamma=0.0,
                         lsw=-0.7, lsv=0.0, dt=dt)
        x = np.array([0.4, -1.1])
        mean, chol = m.transition_moments(x, t_prev=2.0)
        np.testing.assert_allclose(mean, [x[0] + x[1] * dt, x[1]], rtol=1e-14)
        cov = chol @ chol.T
        ref = np.exp(-1.4) * np.array([[dt ** 3 / 3, dt ** 2 / 2],
                                       [dt ** 2 / 2, dt]])
        np.testing.assert_allclose(cov, ref, rtol=1e-12)

    def test_zero_step_identity(self):
        x = np.array([0.3, 0.7])
        m = taylor_mean(x, 1.0, 0.0, **{k: TABLE_PARAMS[k] for k in
                                        ("alpha", "beta", "delta", "gamma")})
        np.testing.assert_allclose(m, x)

    def test_cov_is_pushforward_of_increment_cov(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            d = rng.standard_normal()
            lsw = rng.standard_normal()
            dt = rng.uniform(0.01, 0.5)
            G = noise_map(d, lsw)
            Q = increment_cov(dt)
            np.testing.assert_allclose(transition_cov(dt, d, lsw), G @ Q @ G.T,
                                       rtol=1e-12)
            # symmetric positive definite for every delta
            eig = np.linalg.eigvalsh(transition_cov(dt, d, lsw))
            assert np.all(eig > 0)

    def test_near_deterministic_mean_matches_ode(self):
        # with diffusion essentially off, one step of the scheme tracks the
        # ODE solution with third-order local error
        dt = 0.1
        m = DuffingModel(**TABLE_PARAMS, dt=dt)
        m.lsw = -20.0
        rng = np.random.default_rng(5)
        for _ in range(5):
            x0 = rng.uniform(-1.5, 1.5, size=2)
            t0 = rng.uniform(0.0, 6.0)
            mean, chol = m.transition_moments(x0, t0)
            sol = scipy.integrate.solve_ivp(
                lambda t, x: drift(x, t, m.alpha, m.beta, m.delta, m.gamma),
                (t0, t0 + dt), x0, rtol=1e-12, atol=1e-12)
            assert np.max(np.abs(mean - sol.y[:, -1])) <= 5.0 * dt ** 3
            assert np.max(np.abs(chol @ chol.T)) <= 1e-16

    def test_measurement_examples(self):
        m = DuffingModel(**TABLE_PARAMS, dt=0.1)
        m.lsv = 0.0
        x = np.array([0.8, 0.0])
        assert m.logp_measurement(0.8, x) == pytest.approx(-0.5 * LOG_2PI)
        assert m.logp_measurement(1.8, x) == pytest.approx(-0.5 * LOG_2PI - 0.5)

    def test_densities_match_scipy(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            m = random_duffing_model(rng)
            xp = rng.standard_normal(2)
            xk = rng.standard_normal(2)
            t0 = rng.uniform(0, 10)
            mean, chol = m.transition_moments(xp, t0)
            ref = scipy.stats.multivariate_normal(mean, chol @ chol.T).logpdf(xk)
            assert m.logp_transition(xk, xp, t0) == pytest.approx(ref, rel=1e-12)
            y = rng.standard_normal()
            ref = scipy.stats.norm(xk[0], np.exp(m.lsv)).logpdf(y)
            assert m.logp_measurement(y, xk) == pytest.approx(ref, abs=1e-12)

    def test_theta_round_trip(self):
        m = DuffingModel(**TABLE_PARAMS, dt=0.1)
        m2 = DuffingModel.from_theta(m.theta, dt=0.1)
        np.testing.assert_array_equal(m2.theta, m.theta)
