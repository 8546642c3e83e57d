"""Parameterizations of the assumed Gaussian density over the state path.

The assumed density factors as a Gaussian Markov chain
q(x_0) prod_k q(x_k | x_{k-1}).  Three parameterizations are provided:

* time-varying: per-step conditional log-Cholesky vectors and cross blocks,
* steady-state: a single conditional log-Cholesky vector and cross block
  shared by every step (exactly the time-varying family with tied blocks,
  including the initial block),
* convolution smoother: steady-state covariances with the means produced
  by a finite-window linear smoother of the measurements and inputs.

Unconstrained covariance storage: a conditional factor S is kept as the
half-vectorized matrix logarithm zeta with S = expm_tril(matl(zeta)), so
log det S = tr matl(zeta) and no positivity constraints are needed.  The
marginal factor of step k is the triangularization of the stacked block
[S_cond, S_cross], which squares to the marginal covariance recursion.
"""

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .trimat import expm_tril, matl, vech_dim, vech_len

LOG_2PI_E = float(np.log(2.0 * np.pi) + 1.0)
CHOL_MODES = ("expm", "diag")


@lru_cache(maxsize=None)
def _diag_positions(n: int) -> np.ndarray:
    """Positions of the matrix diagonal inside the column-major vech layout."""
    out = np.empty(n, dtype=int)
    pos = 0
    for j in range(n):
        out[j] = pos
        pos += n - j
    return out


def reconstruct_chol(zeta, mode: str = "expm") -> np.ndarray:
    """Conditional Cholesky factor from its unconstrained vector (batched).

    ``expm`` takes the full lower-triangular matrix exponential; ``diag``
    keeps the strict lower triangle and exponentiates only the diagonal.
    Both give log det S = tr matl(zeta).
    """
    L = matl(zeta)
    if mode == "expm":
        return expm_tril(L)
    if mode == "diag":
        n = L.shape[-1]
        idx = np.arange(n)
        S = L.copy()
        S[..., idx, idx] = np.exp(L[..., idx, idx])
        return S
    raise ValueError(f"unknown chol mode {mode!r}")


def reconstruct_chol_vjp_diag(zeta, Sbar) -> np.ndarray:
    """Adjoint of the ``diag`` reconstruction mode (the ``expm`` mode uses
    :func:`gvisid.trimat.expm_tril_vjp`)."""
    L = matl(zeta)
    n = L.shape[-1]
    idx = np.arange(n)
    G = np.tril(np.asarray(Sbar, dtype=float)).copy()
    G[..., idx, idx] = G[..., idx, idx] * np.exp(L[..., idx, idx])
    from .trimat import vech
    return vech(G)


def marginal_chols(s0, cond, cross) -> np.ndarray:
    """Marginal Cholesky factors of every step of the chain.

    The step-k marginal satisfies Sigma_k = S_cond S_cond' + S_cross S_cross'
    so its factor is the (sign-fixed) triangularization of [S_cond, S_cross],
    computed here as the Cholesky factor of the assembled square.  Step 0 is
    the supplied initial factor.
    """
    cond = np.asarray(cond, dtype=float)
    cross = np.asarray(cross, dtype=float)
    sq = cond @ np.swapaxes(cond, -1, -2) + cross @ np.swapaxes(cross, -1, -2)
    marg = np.linalg.cholesky(sq)
    return np.concatenate([np.asarray(s0, dtype=float)[None], marg], axis=0)


def smoother_mean(kernel, window: int, y, u=None) -> np.ndarray:
    """Posterior means from the finite-window convolution smoother.

    mu_k = sum_{j=-M..M} K^(j) [y_{k+j}; u_{k+j}] with zero padding outside
    the record.  ``kernel`` has shape (nx, ny+nu, 2*window+1).
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    Z = y if u is None or np.size(u) == 0 else np.hstack([y, np.atleast_2d(u)])
    kernel = np.asarray(kernel, dtype=float)
    nx, nz, width = kernel.shape
    if nz != Z.shape[1]:
        raise ValueError(f"kernel expects {nz} data channels, got {Z.shape[1]}")
    if width != 2 * window + 1:
        raise ValueError("kernel depth must be 2*window + 1")
    n = Z.shape[0]
    mu = np.zeros((n, nx))
    for idx in range(width):
        j = idx - window
        Kj = kernel[:, :, idx]
        if j >= 0:
            if j < n:
                mu[: n - j] += Z[j:] @ Kj.T
        else:
            if -j < n:
                mu[-j:] += Z[: n + j] @ Kj.T
    return mu


def smoother_mean_vjp(mubar, window: int, y, u=None) -> np.ndarray:
    """Adjoint of :func:`smoother_mean` with respect to the kernel."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    Z = y if u is None or np.size(u) == 0 else np.hstack([y, np.atleast_2d(u)])
    mubar = np.asarray(mubar, dtype=float)
    n, nx = mubar.shape
    nz = Z.shape[1]
    Kbar = np.zeros((nx, nz, 2 * window + 1))
    for idx in range(2 * window + 1):
        j = idx - window
        if j >= 0:
            if j < n:
                Kbar[:, :, idx] = mubar[: n - j].T @ Z[j:]
        else:
            if -j < n:
                Kbar[:, :, idx] = mubar[-j:].T @ Z[: n + j]
    return Kbar


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------

@dataclass
class TimeVaryingPosterior:
    """Per-step means, conditional log-Cholesky vectors and cross blocks."""

    mu: np.ndarray                # (N+1, nx)
    zeta0: np.ndarray             # (nx(nx+1)/2,)
    zeta: np.ndarray              # (N, nx(nx+1)/2)
    scross: np.ndarray            # (N, nx, nx)
    chol_mode: str = "expm"

    kind = "time-varying"

    def __post_init__(self):
        self.mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        self.zeta0 = np.asarray(self.zeta0, dtype=float)
        if self.zeta0.size != vech_len(self.nx):
            raise ValueError("zeta0 length does not match the state dimension")
        self.zeta = np.asarray(self.zeta, dtype=float).reshape(
            self.num_steps, self.zeta0.size)
        self.scross = np.asarray(self.scross, dtype=float).reshape(
            self.num_steps, self.nx, self.nx)
        if self.chol_mode not in CHOL_MODES:
            raise ValueError(f"chol_mode must be one of {CHOL_MODES}")

    @property
    def nx(self) -> int:
        return self.mu.shape[1]

    @property
    def num_steps(self) -> int:
        return self.mu.shape[0] - 1

    @classmethod
    def zeros(cls, num_steps: int, nx: int, chol_mode: str = "expm"):
        m = vech_len(nx)
        return cls(np.zeros((num_steps + 1, nx)), np.zeros(m),
                   np.zeros((num_steps, m)), np.zeros((num_steps, nx, nx)),
                   chol_mode=chol_mode)

    # flat parameter block: [mu, zeta0, zeta, scross]
    @property
    def param_dim(self) -> int:
        return self.mu.size + self.zeta0.size + self.zeta.size + self.scross.size

    def param_vector(self) -> np.ndarray:
        return np.concatenate([self.mu.ravel(), self.zeta0,
                               self.zeta.ravel(), self.scross.ravel()])

    def with_params(self, vec) -> "TimeVaryingPosterior":
        vec = np.asarray(vec, dtype=float)
        sizes = [self.mu.size, self.zeta0.size, self.zeta.size, self.scross.size]
        p = np.split(vec, np.cumsum(sizes)[:-1])
        return replace(self, mu=p[0].reshape(self.mu.shape), zeta0=p[1],
                       zeta=p[2].reshape(self.zeta.shape),
                       scross=p[3].reshape(self.scross.shape))


@dataclass
class SteadyStatePosterior:
    """Shared conditional block and cross block; per-step means."""

    mu: np.ndarray                # (N+1, nx)
    zeta: np.ndarray              # (nx(nx+1)/2,)
    scross: np.ndarray            # (nx, nx)
    chol_mode: str = "expm"

    kind = "steady-state"

    def __post_init__(self):
        self.mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        self.zeta = np.asarray(self.zeta, dtype=float)
        self.scross = np.asarray(self.scross, dtype=float).reshape(self.nx, self.nx)
        if self.zeta.size != vech_len(self.nx):
            raise ValueError("zeta length does not match the state dimension")
        if self.chol_mode not in CHOL_MODES:
            raise ValueError(f"chol_mode must be one of {CHOL_MODES}")

    @property
    def nx(self) -> int:
        return self.mu.shape[1]

    @property
    def num_steps(self) -> int:
        return self.mu.shape[0] - 1

    @classmethod
    def zeros(cls, num_steps: int, nx: int, chol_mode: str = "expm"):
        return cls(np.zeros((num_steps + 1, nx)), np.zeros(vech_len(nx)),
                   np.zeros((nx, nx)), chol_mode=chol_mode)

    @property
    def param_dim(self) -> int:
        return self.mu.size + self.zeta.size + self.scross.size

    def param_vector(self) -> np.ndarray:
        return np.concatenate([self.mu.ravel(), self.zeta, self.scross.ravel()])

    def with_params(self, vec) -> "SteadyStatePosterior":
        vec = np.asarray(vec, dtype=float)
        sizes = [self.mu.size, self.zeta.size, self.scross.size]
        p = np.split(vec, np.cumsum(sizes)[:-1])
        return replace(self, mu=p[0].reshape(self.mu.shape), zeta=p[1],
                       scross=p[2].reshape(self.scross.shape))

    def as_time_varying(self) -> TimeVaryingPosterior:
        """The identical density in the time-varying parameterization."""
        n = self.num_steps
        return TimeVaryingPosterior(
            self.mu.copy(), self.zeta.copy(),
            np.tile(self.zeta, (n, 1)), np.tile(self.scross, (n, 1, 1)),
            chol_mode=self.chol_mode)


@dataclass
class ConvolutionSmootherPosterior:
    """Steady-state covariances with kernel-generated means."""

    kernel: np.ndarray            # (nx, ny+nu, 2*window+1)
    window: int
    zeta: np.ndarray              # (nx(nx+1)/2,)
    scross: np.ndarray            # (nx, nx)
    chol_mode: str = "expm"

    kind = "conv-smoother"

    def __post_init__(self):
        self.kernel = np.asarray(self.kernel, dtype=float)
        self.zeta = np.asarray(self.zeta, dtype=float)
        if self.kernel.ndim != 3 or self.kernel.shape[2] != 2 * self.window + 1:
            raise ValueError("kernel must have shape (nx, channels, 2*window+1)")
        self.scross = np.asarray(self.scross, dtype=float).reshape(self.nx, self.nx)
        if self.zeta.size != vech_len(self.nx):
            raise ValueError("zeta length does not match the state dimension")
        if self.window < 0:
            raise ValueError("window must be >= 0")
        if self.chol_mode not in CHOL_MODES:
            raise ValueError(f"chol_mode must be one of {CHOL_MODES}")

    @property
    def nx(self) -> int:
        return self.kernel.shape[0]

    @classmethod
    def zeros(cls, nx: int, nz: int, window: int, chol_mode: str = "expm"):
        return cls(np.zeros((nx, nz, 2 * window + 1)), window,
                   np.zeros(vech_len(nx)), np.zeros((nx, nx)), chol_mode=chol_mode)

    @property
    def param_dim(self) -> int:
        return self.kernel.size + self.zeta.size + self.scross.size

    def param_vector(self) -> np.ndarray:
        return np.concatenate([self.kernel.ravel(), self.zeta, self.scross.ravel()])

    def with_params(self, vec) -> "ConvolutionSmootherPosterior":
        vec = np.asarray(vec, dtype=float)
        sizes = [self.kernel.size, self.zeta.size, self.scross.size]
        p = np.split(vec, np.cumsum(sizes)[:-1])
        return replace(self, kernel=p[0].reshape(self.kernel.shape), zeta=p[1],
                       scross=p[2].reshape(self.scross.shape))

    def steady_state(self, y, u=None) -> SteadyStatePosterior:
        """Materialize the equivalent steady-state posterior for one record."""
        mu = smoother_mean(self.kernel, self.window, y, u)
        return SteadyStatePosterior(mu, self.zeta.copy(), self.scross.copy(),
                                    chol_mode=self.chol_mode)


# ---------------------------------------------------------------------------
# entropy, materialization, sampling
# ---------------------------------------------------------------------------

def entropy(posterior, num_steps: int | None = None) -> float:
    """Differential entropy of the assumed density.

    Chain rule over the Markov factorization: the initial block plus one
    conditional block per step, each contributing the trace of its
    unconstrained log-factor, plus the Gaussian constant.
    """
    if isinstance(posterior, TimeVaryingPosterior):
        n = posterior.num_steps
        nx = posterior.nx
        d = _diag_positions(nx)
        traces = np.empty(n + 1)
        traces[0] = np.sum(posterior.zeta0[d])
        if n:
            traces[1:] = np.sum(posterior.zeta[:, d], axis=1)
    elif isinstance(posterior, (SteadyStatePosterior, ConvolutionSmootherPosterior)):
        if isinstance(posterior, ConvolutionSmootherPosterior):
            if num_steps is None:
                raise ValueError("num_steps is required for the smoother posterior")
            n = num_steps
        else:
            n = posterior.num_steps
        nx = posterior.nx
        # full-length block vector so tied parameterizations sum identically
        traces = np.full(n + 1, np.sum(posterior.zeta[_diag_positions(nx)]))
    else:
        raise TypeError(f"unsupported posterior type {type(posterior)!r}")
    return float(np.sum(traces)) + 0.5 * (n + 1) * nx * LOG_2PI_E


@dataclass
class MaterializedPosterior:
    """Arrays the objective engine and samplers consume directly."""

    mu: np.ndarray        # (N+1, nx)
    cond: np.ndarray      # (N, nx, nx)  conditional factors S_{k|k-1}
    cross: np.ndarray     # (N, nx, nx)  cross blocks S_{k,k-1}
    marg: np.ndarray      # (N+1, nx, nx) marginal factors (index 0 = initial)

    @property
    def num_steps(self) -> int:
        return self.mu.shape[0] - 1


def materialize(posterior, y=None, u=None, num_steps: int | None = None
                ) -> MaterializedPosterior:
    """Reconstruct per-step factors and marginals from the parameters."""
    if isinstance(posterior, TimeVaryingPosterior):
        s0 = reconstruct_chol(posterior.zeta0, posterior.chol_mode)
        cond = reconstruct_chol(posterior.zeta, posterior.chol_mode)
        cross = posterior.scross
        marg = marginal_chols(s0, cond, cross)
        return MaterializedPosterior(posterior.mu, cond, cross, marg)
    if isinstance(posterior, SteadyStatePosterior):
        n = posterior.num_steps
        mu = posterior.mu
    elif isinstance(posterior, ConvolutionSmootherPosterior):
        if y is None:
            raise ValueError("the smoother posterior needs data to materialize")
        mu = smoother_mean(posterior.kernel, posterior.window, y, u)
        n = mu.shape[0] - 1
    else:
        raise TypeError(f"unsupported posterior type {type(posterior)!r}")
    nx = posterior.nx
    P = reconstruct_chol(posterior.zeta, posterior.chol_mode)
    C = posterior.scross
    marg1 = np.linalg.cholesky(P @ P.T + C @ C.T)
    cond = np.ascontiguousarray(np.broadcast_to(P, (n, nx, nx)))
    cross = np.ascontiguousarray(np.broadcast_to(C, (n, nx, nx)))
    marg = np.empty((n + 1, nx, nx))
    marg[0] = P
    marg[1:] = marg1
    return MaterializedPosterior(mu, cond, cross, marg)


def draw_marginal_samples(posterior, k: int, rule, y=None, u=None):
    """Sigma-point samples of the step-k marginal: (points, weights)."""
    mat = posterior if isinstance(posterior, MaterializedPosterior) \
        else materialize(posterior, y, u)
    if not 0 <= k <= mat.num_steps:
        raise IndexError(f"step {k} outside 0..{mat.num_steps}")
    pts = mat.mu[k] + rule.points @ mat.marg[k].T
    return pts, rule.weights


def posterior_to_dict(posterior) -> dict:
    """JSON-ready parameter dict (inverse of :func:`posterior_from_dict`)."""
    if isinstance(posterior, TimeVaryingPosterior):
        return {"type": posterior.kind, "chol_mode": posterior.chol_mode,
                "mu": posterior.mu, "zeta0": posterior.zeta0,
                "zeta": posterior.zeta, "scross": posterior.scross}
    if isinstance(posterior, SteadyStatePosterior):
        return {"type": posterior.kind, "chol_mode": posterior.chol_mode,
                "mu": posterior.mu, "zeta": posterior.zeta,
                "scross": posterior.scross}
    if isinstance(posterior, ConvolutionSmootherPosterior):
        return {"type": posterior.kind, "chol_mode": posterior.chol_mode,
                "kernel": posterior.kernel, "window": posterior.window,
                "zeta": posterior.zeta, "scross": posterior.scross}
    raise TypeError(f"unsupported posterior type {type(posterior)!r}")


def posterior_from_dict(payload: dict):
    kind = payload["type"]
    mode = payload.get("chol_mode", "expm")
    if kind == TimeVaryingPosterior.kind:
        return TimeVaryingPosterior(payload["mu"], payload["zeta0"],
                                    payload["zeta"], payload["scross"],
                                    chol_mode=mode)
    if kind == SteadyStatePosterior.kind:
        return SteadyStatePosterior(payload["mu"], payload["zeta"],
                                    payload["scross"], chol_mode=mode)
    if kind == ConvolutionSmootherPosterior.kind:
        return ConvolutionSmootherPosterior(payload["kernel"],
                                            int(payload["window"]),
                                            payload["zeta"], payload["scross"],
                                            chol_mode=mode)
    raise ValueError(f"unknown posterior type {kind!r}")


def draw_joint_pair_samples(posterior, k: int, rule, y=None, u=None):
    """Sigma-point samples of the (x_{k-1}, x_k) pair: (prev, cur, weights).

    The rule must have dimension 2*nx; its first nx coordinates drive the
    previous state, the last nx the conditional step.
    """
    mat = posterior if isinstance(posterior, MaterializedPosterior) \
        else materialize(posterior, y, u)
    if not 1 <= k <= mat.num_steps:
        raise IndexError(f"pair step {k} outside 1..{mat.num_steps}")
    nx = mat.mu.shape[1]
    if rule.dim != 2 * nx:
        raise ValueError("pair rule dimension must be 2*nx")
    nu_prev = rule.points[:, :nx]
    nu_cur = rule.points[:, nx:]
    prev = mat.mu[k - 1] + nu_prev @ mat.marg[k - 1].T
    cur = mat.mu[k] + nu_prev @ mat.cross[k - 1].T + nu_cur @ mat.cond[k - 1].T
    return prev, cur, rule.weights
