"""Shared helpers for the test suite: finite differences, random instances,
and an independent joint-Gaussian assembly of the assumed density."""

import numpy as np

from gvisid.models import DuffingModel, GaussianPrior, LinearGaussianModel
from gvisid.posteriors import (
    ConvolutionSmootherPosterior, SteadyStatePosterior, TimeVaryingPosterior,
    reconstruct_chol,
)
from gvisid.trimat import expm_tril, matl, vech_len


def fd_gradient(func, x, h=1e-6, relative=True):
    """Central-difference gradient with per-coordinate steps."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        hi = h * (1.0 + abs(x[i])) if relative else h
        xp = x.copy(); xp[i] += hi
        xm = x.copy(); xm[i] -= hi
        g[i] = (func(xp) - func(xm)) / (2.0 * hi)
    return g


def rand_tril_posdiag(rng, n, scale=0.4):
    return expm_tril(np.tril(rng.standard_normal((n, n)) * scale))


def random_linear_model(rng, nx=2, ny=1, nu=1, stable=True, prior="gaussian"):
    A = rng.standard_normal((nx, nx))
    if stable:
        rho = max(abs(np.linalg.eigvals(A)))
        A *= 0.8 / max(rho, 1e-6)
    B = rng.standard_normal((nx, nu))
    C = rng.standard_normal((ny, nx))
    D = rng.standard_normal((ny, nu))
    Sw = rand_tril_posdiag(rng, nx)
    Sv = rand_tril_posdiag(rng, ny)
    pr = None
    if prior == "gaussian":
        pr = GaussianPrior(rng.standard_normal(nx) * 0.3, np.eye(nx))
    return LinearGaussianModel(A, B, C, D, Sw, Sv, prior=pr)


def random_duffing_model(rng, dt=0.1, prior=None):
    return DuffingModel(alpha=1.0 + 0.2 * rng.standard_normal(),
                        beta=-1.0 + 0.2 * rng.standard_normal(),
                        delta=0.2 + 0.05 * rng.standard_normal(),
                        gamma=0.3 + 0.05 * rng.standard_normal(),
                        lsw=-2.3 + 0.2 * rng.standard_normal(),
                        lsv=-3.0 + 0.2 * rng.standard_normal(),
                        dt=dt, prior=prior)


def random_tv_posterior(rng, n_steps, nx, scale=0.3):
    m = vech_len(nx)
    return TimeVaryingPosterior(
        mu=rng.standard_normal((n_steps + 1, nx)),
        zeta0=rng.standard_normal(m) * scale,
        zeta=rng.standard_normal((n_steps, m)) * scale,
        scross=rng.standard_normal((n_steps, nx, nx)) * scale)


def random_ss_posterior(rng, n_steps, nx, scale=0.3):
    return SteadyStatePosterior(
        mu=rng.standard_normal((n_steps + 1, nx)),
        zeta=rng.standard_normal(vech_len(nx)) * scale,
        scross=rng.standard_normal((nx, nx)) * scale)


def random_conv_posterior(rng, nx, nz, window, scale=0.3):
    return ConvolutionSmootherPosterior(
        kernel=rng.standard_normal((nx, nz, 2 * window + 1)) * scale,
        window=window,
        zeta=rng.standard_normal(vech_len(nx)) * scale,
        scross=rng.standard_normal((nx, nx)) * scale)


def assemble_joint_gaussian(posterior, n_steps=None):
    """Independent assembly of the full joint Gaussian implied by the chain.

    Works from the node densities directly: the initial marginal, the
    conditional gains G_k = S_cross S_marg(k-1)^-1 and the conditional
    covariances, propagated into a dense ((N+1)nx, (N+1)nx) covariance.
    """
    if isinstance(posterior, SteadyStatePosterior):
        tv = posterior.as_time_varying()
    else:
        tv = posterior
    n = tv.num_steps
    nx = tv.nx
    s0 = reconstruct_chol(tv.zeta0, tv.chol_mode)
    mean = tv.mu.ravel().copy()
    cov = np.zeros(((n + 1) * nx, (n + 1) * nx))
    cov[:nx, :nx] = s0 @ s0.T
    margs = [s0 @ s0.T]
    for k in range(1, n + 1):
        P = reconstruct_chol(tv.zeta[k - 1], tv.chol_mode)
        Ck = tv.scross[k - 1]
        Sprev = np.linalg.cholesky(margs[k - 1])
        G = Ck @ np.linalg.inv(Sprev)
        cond_cov = P @ P.T
        rows = slice(k * nx, (k + 1) * nx)
        # cross covariances with everything before k
        for j in range(k):
            cols = slice(j * nx, (j + 1) * nx)
            prev_rows = slice((k - 1) * nx, k * nx)
            cov[rows, cols] = G @ cov[prev_rows, cols]
            cov[cols, rows] = cov[rows, cols].T
        prev = slice((k - 1) * nx, k * nx)
        cov[rows, rows] = cond_cov + G @ cov[prev, prev] @ G.T
        margs.append(cov[rows, rows].copy())
    return mean, cov
