"""Shared pieces of the probabilistic state-space model interface.

A model provides three evaluable log-densities (initial state, transition,
measurement) plus the plumbing the objective engine needs: a flat parameter
vector, per-evaluation precomputes, and quadrature accumulation kernels.
"""

from dataclasses import dataclass

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GaussianPrior:
    """Proper Gaussian initial-state prior N(mean, chol @ chol.T)."""

    mean: np.ndarray
    chol: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "chol", np.asarray(self.chol, dtype=float))
        if self.chol.shape != (self.mean.size, self.mean.size):
            raise ValueError("prior chol must be square and match the mean")

    @property
    def dim(self) -> int:
        return self.mean.size

    def logpdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        e = np.linalg.solve(self.chol, (x - self.mean).T).T
        quad = np.sum(np.square(e), axis=-1)
        logdet = float(np.sum(np.log(np.diagonal(self.chol))))
        return -0.5 * self.dim * LOG_2PI - logdet - 0.5 * quad


def mvn_logpdf(x, mean, chol):
    """Gaussian log-density with a lower-triangular covariance factor."""
    x = np.asarray(x, dtype=float)
    e = np.linalg.solve(chol, (x - mean).T).T
    quad = np.sum(np.square(np.atleast_1d(e)), axis=-1)
    n = chol.shape[0]
    logdet = float(np.sum(np.log(np.diagonal(chol))))
    return -0.5 * n * LOG_2PI - logdet - 0.5 * quad
