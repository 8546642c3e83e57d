"""Gaussian variational inference for state-space system identification.

The package estimates parameters of linear and nonlinear Gaussian
state-space models by maximizing a quadrature-approximated evidence lower
bound over one of three posterior parameterizations (time-varying,
steady-state, convolution smoother), with batch second-order and
stochastic first-order optimizers, simulators, prediction-error baselines
and evaluation metrics.  See the ``gvisid`` command line for the
experiment pipeline.
"""

from .elbo import ElboProblem, ObjectiveEvaluation, elbo, elbo_gradient, elbo_hvp, elbo_minibatch_sum
from .models import DuffingModel, GaussianPrior, LinearGaussianModel
from .optim import AdamConfig, BatchOptimizerConfig, maximize_adam, maximize_batch
from .posteriors import (
    ConvolutionSmootherPosterior, SteadyStatePosterior, TimeVaryingPosterior,
    draw_joint_pair_samples, draw_marginal_samples, entropy, marginal_chols,
    reconstruct_chol, smoother_mean,
)
from .quadrature import SigmaPointRule, expect, gauss_hermite_rule
from .trimat import expm_tril, matl, tria, vech

__version__ = "0.1.0"

__all__ = [
    "AdamConfig", "BatchOptimizerConfig", "ConvolutionSmootherPosterior",
    "DuffingModel", "ElboProblem", "GaussianPrior", "LinearGaussianModel",
    "ObjectiveEvaluation", "SigmaPointRule", "SteadyStatePosterior",
    "TimeVaryingPosterior", "draw_joint_pair_samples", "draw_marginal_samples",
    "elbo", "elbo_gradient", "elbo_hvp", "elbo_minibatch_sum", "entropy",
    "expect", "expm_tril", "gauss_hermite_rule", "marginal_chols", "matl",
    "maximize_adam", "maximize_batch", "reconstruct_chol", "smoother_mean",
    "tria", "vech",
]
