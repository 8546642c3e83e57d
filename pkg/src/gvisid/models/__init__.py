from .base import GaussianPrior, mvn_logpdf
from .duffing import DuffingModel
from .linear import LinearGaussianModel

__all__ = ["GaussianPrior", "mvn_logpdf", "DuffingModel", "LinearGaussianModel"]
