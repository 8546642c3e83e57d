import math

import numpy as np
import pytest

from gvisid.errors import QuadratureBudgetError
from gvisid.quadrature import expect, gauss_hermite_rule


def gaussian_monomial_moment(d: int) -> float:
    """E[Z^d] for standard normal Z: (d-1)!! for even d, 0 for odd."""
    if d % 2 == 1:
        return 0.0
    out = 1.0
    x = d - 1
    while x > 0:
        out *= x
        x -= 2
    return out


class TestRuleConstruction:
    def test_order_two_1d(self):
        rule = gauss_hermite_rule(1, 2)
        np.testing.assert_allclose(sorted(rule.points.ravel()), [-1.0, 1.0])
        np.testing.assert_allclose(rule.weights, [0.5, 0.5])

    def test_order_two_2d_tensor(self):
        rule = gauss_hermite_rule(2, 2)
        assert rule.count == 4
        pts = {tuple(p) for p in rule.points}
        assert pts == {(-1, -1), (-1, 1), (1, -1), (1, 1)}
        np.testing.assert_allclose(rule.weights, 0.25)

    def test_order_one_is_mean_rule(self):
        rule = gauss_hermite_rule(1, 1)
        np.testing.assert_array_equal(rule.points, [[0.0]])
        np.testing.assert_array_equal(rule.weights, [1.0])

    @pytest.mark.parametrize("dim,order", [(1, 5), (2, 3), (3, 2), (1, 12)])
    def test_invariants(self, dim, order):
        rule = gauss_hermite_rule(dim, order)
        assert rule.count == order ** dim
        assert abs(rule.weights.sum() - 1.0) <= 1e-12
        # symmetric under negation
        pts = {tuple(np.round(p, 12)) for p in rule.points}
        neg = {tuple(np.round(-p, 12)) for p in rule.points}
        assert pts == neg

    def test_budget(self):
        with pytest.raises(QuadratureBudgetError):
            gauss_hermite_rule(8, 12, max_points=10_000)

    def test_bad_args(self):
        with pytest.raises(ValueError):
            gauss_hermite_rule(0, 2)


class TestExactness:
    @pytest.mark.parametrize("order", [1, 2, 3, 5, 8])
    def test_exact_up_to_degree(self, order):
        rule = gauss_hermite_rule(1, order)
        for d in range(2 * order):
            got = expect(rule, lambda z, d=d: z[0] ** d)
            ref = gaussian_monomial_moment(d)
            assert abs(got - ref) <= 1e-10 * max(1.0, abs(ref)), (order, d)

    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_sharpness_fails_at_next_degree(self, order):
        rule = gauss_hermite_rule(1, order)
        d = 2 * order
        got = expect(rule, lambda z: z[0] ** d)
        assert abs(got - gaussian_monomial_moment(d)) > 1e-3

    def test_tensor_product_mixed_monomials(self):
        rule = gauss_hermite_rule(3, 3)
        rng = np.random.default_rng(0)
        for _ in range(20):
            degs = rng.integers(0, 6, size=3)  # per-coordinate degree <= 2*3-1
            got = expect(rule, lambda z, d=degs: float(np.prod(z ** d)))
            ref = math.prod(gaussian_monomial_moment(int(d)) for d in degs)
            assert abs(got - ref) <= 1e-10


class TestExpect:
    def test_constant(self):
        rule = gauss_hermite_rule(2, 3)
        assert abs(expect(rule, lambda z: 1.0) - 1.0) <= 1e-12

    def test_variance_exact_order_two(self):
        rule = gauss_hermite_rule(1, 2)
        assert abs(expect(rule, lambda z: z[0] ** 2) - 1.0) <= 1e-12

    def test_odd_vanishes(self):
        rule = gauss_hermite_rule(1, 4)
        assert abs(expect(rule, lambda z: z[0])) <= 1e-12

    def test_nonfinite_propagates(self):
        rule = gauss_hermite_rule(1, 2)
        assert not np.isfinite(expect(rule, lambda z: np.inf if z[0] > 0 else 0.0))
