"""Unit-Gaussian sigma-point rules for approximating expectations.

The package default is the tensor-product Gauss-Hermite rule (order 2
unless configured otherwise); any object with ``points``/``weights``
arrays can be plugged in instead, e.g. for Monte Carlo rules.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import QuadratureBudgetError

DEFAULT_POINT_BUDGET = 1 << 20


@dataclass(frozen=True)
class SigmaPointRule:
    """Samples and weights of a unit-Gaussian expectation rule.

    points has shape (count, dim), weights shape (count,) and sums to one.
    """

    dim: int
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "points", np.ascontiguousarray(self.points, dtype=float))
        object.__setattr__(self, "weights", np.ascontiguousarray(self.weights, dtype=float))
        if self.points.ndim != 2 or self.points.shape[1] != self.dim:
            raise ValueError("points must have shape (count, dim)")
        if self.weights.shape != (self.points.shape[0],):
            raise ValueError("weights must have shape (count,)")

    @property
    def count(self) -> int:
        return self.points.shape[0]


def _hermite_nodes_1d(order: int):
    """Nodes/weights of the probabilists' Gauss-Hermite rule on one axis."""
    if order == 1:
        return np.array([0.0]), np.array([1.0])
    if order == 2:
        return np.array([-1.0, 1.0]), np.array([0.5, 0.5])
    if order == 3:
        r = np.sqrt(3.0)
        return np.array([-r, 0.0, r]), np.array([1 / 6, 2 / 3, 1 / 6])
    nodes, weights = np.polynomial.hermite_e.hermegauss(order)
    return nodes, weights / np.sqrt(2.0 * np.pi)


def gauss_hermite_rule(dim: int, order: int,
                       max_points: int = DEFAULT_POINT_BUDGET) -> SigmaPointRule:
    """Tensor-product Gauss-Hermite rule for a dim-dimensional unit Gaussian.

    Exact for every monomial whose per-coordinate degree is at most
    2*order - 1.  Raises :class:`QuadratureBudgetError` when order**dim
    exceeds ``max_points``.
    """
    if dim < 1 or order < 1:
        raise ValueError("dim and order must both be >= 1")
    count = order ** dim
    if count > max_points:
        raise QuadratureBudgetError(
            f"rule would need {count} points (order {order}, dim {dim}), "
            f"budget is {max_points}")
    nodes, weights = _hermite_nodes_1d(order)
    grids = np.meshgrid(*([nodes] * dim), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)
    wgrids = np.meshgrid(*([weights] * dim), indexing="ij")
    w = np.ones(count)
    for g in wgrids:
        w = w * g.ravel()
    return SigmaPointRule(dim=dim, points=points, weights=w)


def expect(rule: SigmaPointRule, f) -> float:
    """Weighted sum of f over the rule's points: approximates E[f(Z)]."""
    vals = np.array([f(p) for p in rule.points], dtype=float)
    return float(np.dot(rule.weights, vals))
