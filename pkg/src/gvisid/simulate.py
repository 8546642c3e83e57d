"""Data generation: random stable linear systems, binary excitation,
linear simulation and strong Taylor simulation of the Duffing SDE.

Every generator is a pure function of its arguments and seed, so repeated
calls reproduce bit-identical outputs.  Independent realizations should be
driven by distinct seeds (e.g. spawned from one experiment seed).
"""

from dataclasses import dataclass

import numpy as np

from .models import DuffingModel, GaussianPrior, LinearGaussianModel
from .models.duffing import increment_cov, noise_map, taylor_mean


@dataclass
class RandomSystemSpec:
    nx: int
    nu: int
    ny: int
    rho_max: float = 0.95
    noise_std_w: float = 0.1
    noise_std_v: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.rho_max < 1.0:
            raise ValueError("rho_max must be in (0, 1)")


@dataclass
class SdeSimConfig:
    dt_sim: float = 0.025
    t_final: float = 50.0
    sample_time: float = 0.1
    seed: int = 0

    def __post_init__(self):
        ratio = self.sample_time / self.dt_sim
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("sample_time must be an integer multiple of dt_sim")

    @property
    def substeps(self) -> int:
        return int(round(self.sample_time / self.dt_sim))

    @property
    def n_samples(self) -> int:
        """Number of measurement steps N (samples are 0..N)."""
        return int(round(self.t_final / self.sample_time))


def random_stable_system(spec: RandomSystemSpec,
                         prior: GaussianPrior | None = None) -> LinearGaussianModel:
    """Draw a dense random system whose A has spectral radius below the bound.

    A dense Gaussian draw is rescaled to a radius spread over
    (0.5, 1)^(1/nx) of the bound, which keeps the draws strictly stable
    while exercising a range of pole radii.
    """
    rng = np.random.default_rng(spec.seed)
    A = rng.standard_normal((spec.nx, spec.nx))
    rho = max(np.abs(np.linalg.eigvals(A)))
    u = rng.uniform(0.5, 1.0)
    A *= spec.rho_max * 0.999 * u ** (1.0 / spec.nx) / max(rho, 1e-12)
    B = rng.standard_normal((spec.nx, spec.nu))
    C = rng.standard_normal((spec.ny, spec.nx))
    D = rng.standard_normal((spec.ny, spec.nu))
    Sw = spec.noise_std_w * np.eye(spec.nx)
    Sv = spec.noise_std_v * np.eye(spec.ny)
    return LinearGaussianModel(A, B, C, D, Sw, Sv, prior=prior)


def random_binary_input(nu: int, n_samples: int, seed: int = 0,
                        hold: int = 1) -> np.ndarray:
    """Random +/-1 signal, independent per channel and switching interval."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    blocks = -(-n_samples // hold)
    u = rng.choice(np.array([-1.0, 1.0]), size=(blocks, nu))
    return np.repeat(u, hold, axis=0)[:n_samples]


def simulate_linear(model: LinearGaussianModel, u, x0=None, seed: int = 0):
    """Simulate the linear recursion with seeded Gaussian noise.

    Returns states x_{0:N+1} (one longer than the input) and outputs
    y_{0:N}.  Passing noise-free factors reproduces the deterministic
    response exactly.
    """
    u = np.asarray(u, dtype=float).reshape(-1, model.nu)
    n = u.shape[0]
    rng = np.random.default_rng(seed)
    x = np.zeros((n + 1, model.nx))
    if x0 is not None:
        x[0] = np.asarray(x0, dtype=float)
    y = np.zeros((n, model.ny))
    wn = rng.standard_normal((n, model.nx)) @ model.Sw.T
    vn = rng.standard_normal((n, model.ny)) @ model.Sv.T
    for k in range(n):
        y[k] = model.C @ x[k] + model.D @ u[k] + vn[k]
        x[k + 1] = model.A @ x[k] + model.B @ u[k] + wn[k]
    return x, y


def sample_increments(rng, dt, size):
    """Correlated (dW, dZ) pairs of the strong Taylor scheme."""
    L = np.linalg.cholesky(increment_cov(dt))
    return rng.standard_normal(size + (2,)) @ L.T


def simulate_duffing(model: DuffingModel, config: SdeSimConfig):
    """Integrate the oscillator SDE on the fine grid and sample measurements.

    Returns ``(t_fine, x_fine, y)``: the fine-grid times and states, and the
    N+1 noisy measurements of x1 taken every ``sample_time``.  The same
    Taylor step as the estimation model is applied at the fine resolution.
    """
    rng = np.random.default_rng(config.seed)
    n_fine = config.substeps * config.n_samples
    dt = config.dt_sim
    t_fine = np.arange(n_fine + 1) * dt
    x = np.zeros((n_fine + 1, 2))
    G = noise_map(model.delta, model.lsw)
    dwz = sample_increments(rng, dt, (n_fine,))
    for k in range(n_fine):
        x[k + 1] = taylor_mean(x[k], t_fine[k], dt, model.alpha, model.beta,
                               model.delta, model.gamma) + G @ dwz[k]
    idx = np.arange(0, n_fine + 1, config.substeps)
    meas_noise = rng.standard_normal(idx.size) * np.exp(model.lsv)
    y = x[idx, 0] + meas_noise
    return t_fine, x, y.reshape(-1, 1)
