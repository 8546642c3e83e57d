import numpy as np
import pytest

from gvisid.elbo import ElboProblem
from gvisid.errors import OptimizerFailure
from gvisid.models import GaussianPrior, LinearGaussianModel
from gvisid.optim import (
    AdamConfig, BatchOptimizerConfig, maximize_adam, maximize_batch,
)
from gvisid.posteriors import TimeVaryingPosterior


def quadratic_bowl(center):
    c = np.asarray(center, dtype=float)

    def value(x):
        return -float(np.sum((x - c) ** 2))

    def grad(x):
        return -2.0 * (x - c)

    def hvp(x, v):
        return -2.0 * v

    return value, grad, hvp


class TestBatchOptimizer:
    def test_quadratic_bowl(self):
        value, grad, hvp = quadratic_bowl([1.0, -2.0, 3.0])
        x, trace, info = maximize_batch(value, grad, hvp, np.zeros(3))
        assert info["success"]
        np.testing.assert_allclose(x, [1.0, -2.0, 3.0], atol=1e-8)

    def test_rosenbrock(self):
        def value(x):
            return -(100.0 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2)

        def grad(x):
            g0 = -(-400.0 * x[0] * (x[1] - x[0] ** 2) - 2.0 * (1 - x[0]))
            g1 = -(200.0 * (x[1] - x[0] ** 2))
            return np.array([g0, g1])

        def hvp(x, v):
            h = 1e-7 * (1 + np.linalg.norm(x))
            nv = np.linalg.norm(v)
            if nv == 0:
                return np.zeros_like(v)
            return (grad(x + h * v / nv) - grad(x - h * v / nv)) / (2 * h) * nv

        cfg = BatchOptimizerConfig(grad_tol=1e-9, max_iter=2000)
        x, trace, info = maximize_batch(value, grad, hvp,
                                        np.array([-1.2, 1.0]), cfg)
        np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-6)

    def test_scalar_elbo_reaches_evidence(self):
        import scipy.stats
        model = LinearGaussianModel(A=[[0.0]], B=np.zeros((1, 0)), C=[[1.0]],
                                    D=np.zeros((1, 0)), Sw=[[1.0]], Sv=[[1.0]],
                                    prior=GaussianPrior([0.0], [[1.0]]))
        post = TimeVaryingPosterior.zeros(0, 1)
        prob = ElboProblem(model, (np.array([[0.0]]), None, None), post,
                           fit_theta=False)
        x, trace, info = maximize_batch(
            prob.value, prob.gradient, prob.hvp, prob.initial_vector(),
            BatchOptimizerConfig(grad_tol=1e-10))
        ref = scipy.stats.norm(0.0, np.sqrt(2.0)).logpdf(0.0)
        assert prob.value(x) == pytest.approx(ref, abs=1e-6)
        assert prob.value(x) == pytest.approx(-1.265512, abs=1e-6)

    def test_accepted_values_nondecreasing_and_radius_positive(self):
        value, grad, hvp = quadratic_bowl(np.arange(5.0))
        x, trace, info = maximize_batch(value, grad, hvp, np.zeros(5))
        fs = trace.values("f")
        assert np.all(np.diff(fs) >= -1e-12)
        assert np.all(trace.values("radius") > 0)
        caps = [r["cg_iters"] for r in trace.records if "cg_iters" in r]
        assert max(caps) <= BatchOptimizerConfig().cg_max_iter

    def test_nonfinite_start_fails(self):
        def value(x):
            return np.nan

        with pytest.raises(OptimizerFailure):
            maximize_batch(value, lambda x: x, lambda x, v: v, np.zeros(2))

    def test_nonfinite_region_is_avoided(self):
        # objective is -inf outside |x| < 2; optimizer must still converge
        def value(x):
            if np.any(np.abs(x) > 2.0):
                return -np.inf
            return -float(np.sum((x - 1.0) ** 2))

        def grad(x):
            return -2.0 * (x - 1.0)

        def hvp(x, v):
            return -2.0 * v

        x, trace, info = maximize_batch(
            value, grad, hvp, np.zeros(3),
            BatchOptimizerConfig(trust_radius=10.0))
        np.testing.assert_allclose(x, np.ones(3), atol=1e-8)

    def test_bad_config_rejected(self):
        with pytest.raises(ValueError):
            BatchOptimizerConfig(grad_tol=-1.0)


class TestAdam:
    def test_single_batch_quadratic_converges(self):
        c = np.array([0.5, -1.5])

        def bg(x, j):
            return -float(np.sum((x - c) ** 2)), -2.0 * (x - c)

        cfg = AdamConfig(step_size=0.05, decay=1.0, epochs=400, shuffle_seed=1)
        x, trace, info = maximize_adam(bg, 1, np.zeros(2), cfg)
        np.testing.assert_allclose(x, c, atol=1e-3)

    def test_seeded_permutation_reproducible(self):
        rng = np.random.default_rng(0)
        targets = [rng.standard_normal(3) for _ in range(4)]

        def bg(x, j):
            return -float(np.sum((x - targets[j]) ** 2)), -2.0 * (x - targets[j])

        cfg = AdamConfig(step_size=0.02, epochs=5, shuffle_seed=7)
        x1, t1, _ = maximize_adam(bg, 4, np.zeros(3), cfg)
        x2, t2, _ = maximize_adam(bg, 4, np.zeros(3), cfg)
        np.testing.assert_array_equal(x1, x2)
        np.testing.assert_array_equal(t1.values("f"), t2.values("f"))

    def test_invariant_to_batch_storage_order(self):
        rng = np.random.default_rng(1)
        targets = {j: rng.standard_normal(2) for j in range(4)}

        def bg(x, j):
            return -float(np.sum((x - targets[j]) ** 2)), -2.0 * (x - targets[j])

        cfg = AdamConfig(step_size=0.02, epochs=6, shuffle_seed=3)
        x1, _, _ = maximize_adam(bg, 4, np.zeros(2), cfg,
                                 batch_ids=[0, 1, 2, 3])
        x2, _, _ = maximize_adam(bg, 4, np.zeros(2), cfg,
                                 batch_ids=[3, 1, 0, 2])
        np.testing.assert_array_equal(x1, x2)

    def test_nonfinite_gradient_skipped(self):
        calls = []

        def bg(x, j):
            calls.append(j)
            if j == 1:
                return np.nan, np.full(2, np.nan)
            return -float(np.sum(x ** 2)), -2.0 * x

        cfg = AdamConfig(step_size=0.05, epochs=3, shuffle_seed=0)
        x, trace, info = maximize_adam(bg, 2, np.ones(2), cfg)
        assert info["skipped_steps"] == 3
        assert np.all(np.isfinite(x))

    def test_decay_schedule(self):
        def bg(x, j):
            return 0.0, np.zeros_like(x)

        cfg = AdamConfig(step_size=0.1, decay=0.5, epochs=3, shuffle_seed=0)
        _, trace, _ = maximize_adam(bg, 1, np.zeros(1), cfg)
        np.testing.assert_allclose(trace.values("step"), [0.1, 0.05, 0.025])

    def test_bad_config_rejected(self):
        with pytest.raises(ValueError):
            AdamConfig(decay=0.0)
        with pytest.raises(ValueError):
            AdamConfig(beta1=1.0)
