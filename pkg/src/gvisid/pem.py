"""Prediction-error baselines and linear-Gaussian oracles.

Contains the exact Kalman-filter log-likelihood and RTS smoother (the
oracles that variational bounds are checked against), plus one-step
predictors in innovations form: a linear steady-state predictor and an
extended predictor for the Duffing model, both with the Gaussian
prediction-error objective and exact reverse-sweep gradients.
"""

from dataclasses import dataclass

import numpy as np

from ._backend import njit, select
from .errors import NumericalError
from .models import DuffingModel, LinearGaussianModel
from .models.base import LOG_2PI
from .trimat import expm_tril, expm_tril_vjp, logm_tril, matl, vech, vech_len

DIFFUSE_VARIANCE = 1e6


def _prior_moments(model):
    if model.prior is not None:
        return model.prior.mean.copy(), model.prior.chol @ model.prior.chol.T
    # diffuse stand-in for improper flat priors
    return np.zeros(model.nx), DIFFUSE_VARIANCE * np.eye(model.nx)


def kalman_filter(model: LinearGaussianModel, y, u=None):
    """Forward pass: filtered/predicted moments and the exact log-likelihood.

    Returns a dict of per-step arrays; raises :class:`NumericalError` with
    the step index if an innovation covariance loses positive definiteness.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    n1 = y.shape[0]
    u = np.zeros((n1, 0)) if u is None or np.size(u) == 0 \
        else np.asarray(u, dtype=float).reshape(n1, -1)
    A, B, C, D = model.A, model.B, model.C, model.D
    Q = model.Sw @ model.Sw.T
    R = model.Sv @ model.Sv.T
    m, P = _prior_moments(model)
    out = {
        "pred_mean": np.zeros((n1, model.nx)),
        "pred_cov": np.zeros((n1, model.nx, model.nx)),
        "filt_mean": np.zeros((n1, model.nx)),
        "filt_cov": np.zeros((n1, model.nx, model.nx)),
    }
    ll = 0.0
    eye = np.eye(model.nx)
    for k in range(n1):
        out["pred_mean"][k] = m
        out["pred_cov"][k] = P
        S = C @ P @ C.T + R
        try:
            Ls = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            raise NumericalError(
                f"innovation covariance not positive definite at step {k}",
                index=k) from None
        e = y[k] - C @ m - D @ u[k]
        z = np.linalg.solve(Ls, e)
        ll += -0.5 * model.ny * LOG_2PI - np.sum(np.log(np.diagonal(Ls))) \
            - 0.5 * z @ z
        K = np.linalg.solve(S, C @ P).T
        m = m + K @ e
        IKC = eye - K @ C
        P = IKC @ P @ IKC.T + K @ R @ K.T
        out["filt_mean"][k] = m
        out["filt_cov"][k] = P
        if k + 1 < n1:
            m = A @ m + B @ u[k]
            P = A @ P @ A.T + Q
    out["loglik"] = float(ll)
    return out


def kalman_loglik(model: LinearGaussianModel, y, u=None) -> float:
    """Exact log p(y_{0:N}) by the prediction-error decomposition."""
    return kalman_filter(model, y, u)["loglik"]


def rts_smoother(model: LinearGaussianModel, y, u=None):
    """Exact smoothed means and covariances (forward filter + backward pass)."""
    fw = kalman_filter(model, y, u)
    n1 = fw["filt_mean"].shape[0]
    A = model.A
    means = fw["filt_mean"].copy()
    covs = fw["filt_cov"].copy()
    for k in range(n1 - 2, -1, -1):
        P_pred = fw["pred_cov"][k + 1]
        G = np.linalg.solve(P_pred, A @ fw["filt_cov"][k]).T
        means[k] = fw["filt_mean"][k] + G @ (means[k + 1] - fw["pred_mean"][k + 1])
        covs[k] = fw["filt_cov"][k] + G @ (covs[k + 1] - P_pred) @ G.T
    return means, covs


# ---------------------------------------------------------------------------
# linear innovations-form predictor
# ---------------------------------------------------------------------------

@dataclass
class InnovationsPredictor:
    """One-step predictor x_{k+1} = A x_k + B u_k + K e_k, yhat = C x_k + D u_k.

    ``Se`` is the (estimated, log-Cholesky parameterized) innovation
    covariance factor used by the prediction-error objective.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    K: np.ndarray
    Se: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        nx = self.A.shape[0]
        self.B = np.asarray(self.B, dtype=float).reshape(nx, -1)
        self.C = np.asarray(self.C, dtype=float).reshape(-1, nx)
        ny = self.C.shape[0]
        self.D = np.asarray(self.D, dtype=float).reshape(ny, self.B.shape[1])
        self.K = np.asarray(self.K, dtype=float).reshape(nx, ny)
        self.Se = np.atleast_2d(np.asarray(self.Se, dtype=float))

    @property
    def nx(self):
        return self.A.shape[0]

    @property
    def ny(self):
        return self.C.shape[0]

    @property
    def nu(self):
        return self.B.shape[1]

    @staticmethod
    def theta_dim(nx, ny, nu):
        return nx * nx + nx * nu + ny * nx + ny * nu + nx * ny + vech_len(ny)

    @property
    def theta(self):
        return np.concatenate([
            self.A.ravel(), self.B.ravel(), self.C.ravel(), self.D.ravel(),
            self.K.ravel(), vech(logm_tril(self.Se))])

    @classmethod
    def from_theta(cls, theta, nx, ny, nu):
        theta = np.asarray(theta, dtype=float)
        sizes = [nx * nx, nx * nu, ny * nx, ny * nu, nx * ny, vech_len(ny)]
        if theta.size != sum(sizes):
            raise ValueError("theta has the wrong length")
        p = np.split(theta, np.cumsum(sizes)[:-1])
        return cls(p[0].reshape(nx, nx), p[1].reshape(nx, nu),
                   p[2].reshape(ny, nx), p[3].reshape(ny, nu),
                   p[4].reshape(nx, ny), expm_tril(matl(p[5])))

    @classmethod
    def from_steady_state_kalman(cls, model: LinearGaussianModel):
        """Predictor gain and innovation covariance of the stationary filter."""
        import scipy.linalg
        Q = model.Sw @ model.Sw.T
        R = model.Sv @ model.Sv.T
        P = scipy.linalg.solve_discrete_are(model.A.T, model.C.T, Q, R)
        S = model.C @ P @ model.C.T + R
        K = model.A @ P @ model.C.T @ np.linalg.inv(S)
        return cls(model.A, model.B, model.C, model.D, K, np.linalg.cholesky(S))


def predictor_innovations(pred: InnovationsPredictor, y, u=None):
    """Run the predictor open-loop over one record; returns the innovations."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    n1 = y.shape[0]
    u = np.zeros((n1, 0)) if u is None or np.size(u) == 0 \
        else np.asarray(u, dtype=float).reshape(n1, -1)
    x = np.zeros(pred.nx)
    e = np.zeros((n1, pred.ny))
    for k in range(n1):
        e[k] = y[k] - pred.C @ x - pred.D @ u[k]
        x = pred.A @ x + pred.B @ u[k] + pred.K @ e[k]
    return e


def pem_objective(pred: InnovationsPredictor, y, u=None) -> float:
    """Gaussian negative log-likelihood of the one-step innovations.

    Lower is better.  Divergence of the predictor state is reported as a
    (tagged) non-finite value rather than an exception.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    n1 = y.shape[0]
    u = np.zeros((n1, 0)) if u is None or np.size(u) == 0 \
        else np.asarray(u, dtype=float).reshape(n1, -1)
    Re = pred.Se @ pred.Se.T
    val, *_ = _PEM_LIN_KERNEL(y, u, pred.A, pred.B, pred.C, pred.D, pred.K,
                              np.linalg.inv(Re),
                              float(np.sum(np.log(np.diagonal(pred.Se)))))
    return float(val)


def _pem_linear_numpy(Y, U, A, B, C, D, K, Reinv, logdetSe):
    n1, ny = Y.shape
    nx = A.shape[0]
    nu = U.shape[1]
    x = np.zeros((n1 + 1, nx))
    e = np.zeros((n1, ny))
    val = n1 * (0.5 * ny * LOG_2PI + logdetSe)
    diverged = False
    for k in range(n1):
        e[k] = Y[k] - C @ x[k] - D @ U[k]
        val += 0.5 * e[k] @ Reinv @ e[k]
        x[k + 1] = A @ x[k] + B @ U[k] + K @ e[k]
        if not np.all(np.abs(x[k + 1]) < 1e100):
            diverged = True
            break
    Abar = np.zeros_like(A); Bbar = np.zeros_like(B)
    Cbar = np.zeros_like(C); Dbar = np.zeros_like(D)
    Kbar = np.zeros_like(K); Rebar = np.zeros_like(Reinv)
    if diverged or not np.isfinite(val):
        return np.inf, e, Abar, Bbar, Cbar, Dbar, Kbar, Rebar
    lam = np.zeros(nx)
    for k in range(n1 - 1, -1, -1):
        ge = Reinv @ e[k]
        me = ge + K.T @ lam
        Kbar += np.outer(lam, e[k])
        Abar += np.outer(lam, x[k])
        Bbar += np.outer(lam, U[k])
        Cbar -= np.outer(me, x[k])
        Dbar -= np.outer(me, U[k])
        Rebar += 0.5 * (Reinv - np.outer(ge, ge))
        lam = A.T @ lam - C.T @ me
    return val, e, Abar, Bbar, Cbar, Dbar, Kbar, Rebar


@njit(cache=True)
def _pem_linear_numba(Y, U, A, B, C, D, K, Reinv, logdetSe):
    n1, ny = Y.shape
    nx = A.shape[0]
    nu = U.shape[1]
    x = np.zeros((n1 + 1, nx))
    e = np.zeros((n1, ny))
    val = n1 * (0.5 * ny * LOG_2PI + logdetSe)
    Abar = np.zeros((nx, nx)); Bbar = np.zeros((nx, nu))
    Cbar = np.zeros((ny, nx)); Dbar = np.zeros((ny, nu))
    Kbar = np.zeros((nx, ny)); Rebar = np.zeros((ny, ny))
    diverged = False
    for k in range(n1):
        for i in range(ny):
            s = Y[k, i]
            for a in range(nx):
                s -= C[i, a] * x[k, a]
            for b in range(nu):
                s -= D[i, b] * U[k, b]
            e[k, i] = s
        q = 0.0
        for i in range(ny):
            s = 0.0
            for jj in range(ny):
                s += Reinv[i, jj] * e[k, jj]
            q += s * e[k, i]
        val += 0.5 * q
        for a in range(nx):
            s = 0.0
            for b in range(nx):
                s += A[a, b] * x[k, b]
            for b in range(nu):
                s += B[a, b] * U[k, b]
            for i in range(ny):
                s += K[a, i] * e[k, i]
            x[k + 1, a] = s
            if not (abs(s) < 1e100):
                diverged = True
        if diverged:
            break
    if diverged or not np.isfinite(val):
        return np.inf, e, Abar, Bbar, Cbar, Dbar, Kbar, Rebar
    lam = np.zeros(nx)
    lam_next = np.zeros(nx)
    ge = np.zeros(ny)
    me = np.zeros(ny)
    for k in range(n1 - 1, -1, -1):
        for i in range(ny):
            s = 0.0
            for jj in range(ny):
                s += Reinv[i, jj] * e[k, jj]
            ge[i] = s
        for i in range(ny):
            s = ge[i]
            for a in range(nx):
                s += K[a, i] * lam[a]
            me[i] = s
        for a in range(nx):
            for i in range(ny):
                Kbar[a, i] += lam[a] * e[k, i]
            for b in range(nx):
                Abar[a, b] += lam[a] * x[k, b]
            for b in range(nu):
                Bbar[a, b] += lam[a] * U[k, b]
        for i in range(ny):
            for a in range(nx):
                Cbar[i, a] -= me[i] * x[k, a]
            for b in range(nu):
                Dbar[i, b] -= me[i] * U[k, b]
            for jj in range(ny):
                Rebar[i, jj] += 0.5 * (Reinv[i, jj] - ge[i] * ge[jj])
        for a in range(nx):
            s = 0.0
            for b in range(nx):
                s += A[b, a] * lam[b]
            for i in range(ny):
                s -= C[i, a] * me[i]
            lam_next[a] = s
        for a in range(nx):
            lam[a] = lam_next[a]
    return val, e, Abar, Bbar, Cbar, Dbar, Kbar, Rebar


_PEM_LIN_KERNEL = select(_pem_linear_numba, _pem_linear_numpy)


class LinearPemProblem:
    """Prediction-error objective over mini-batches of one linear record.

    Decision vector: [A, B, C, D, K, vech(log Se)].  ``value``/``gradient``
    are of the summed negative log-likelihood (minimization semantics).
    """

    def __init__(self, nx, ny, nu, batches):
        self.nx, self.ny, self.nu = nx, ny, nu
        self.batches = []
        for b in batches:
            y = np.atleast_2d(np.asarray(b[0], dtype=float))
            u = b[1]
            u = np.zeros((y.shape[0], 0)) if u is None or np.size(u) == 0 \
                else np.asarray(u, dtype=float).reshape(y.shape[0], -1)
            self.batches.append((y, u))

    @property
    def dim(self):
        return InnovationsPredictor.theta_dim(self.nx, self.ny, self.nu)

    def null_init(self, seed=0, gain_std=1e-3):
        """Null matrices with a near-zero random gain (and unit Se)."""
        rng = np.random.default_rng(seed)
        x = np.zeros(self.dim)
        base = self.nx * self.nx + self.nx * self.nu \
            + self.ny * self.nx + self.ny * self.nu
        x[base:base + self.nx * self.ny] = gain_std * rng.standard_normal(
            self.nx * self.ny)
        return x

    def _unpack(self, x):
        nx, ny, nu = self.nx, self.ny, self.nu
        sizes = [nx * nx, nx * nu, ny * nx, ny * nu, nx * ny, vech_len(ny)]
        p = np.split(np.asarray(x, dtype=float), np.cumsum(sizes)[:-1])
        return (p[0].reshape(nx, nx), p[1].reshape(nx, nu),
                p[2].reshape(ny, nx), p[3].reshape(ny, nu),
                p[4].reshape(nx, ny), p[5])

    def batch_value_and_grad(self, x, j):
        A, B, C, D, K, sevec = self._unpack(x)
        y, u = self.batches[j]
        Lse = matl(sevec)
        Se = expm_tril(Lse)
        Reinv = np.linalg.inv(Se @ Se.T)
        out = _PEM_LIN_KERNEL(y, u, A, B, C, D, K, Reinv,
                              float(np.sum(np.log(np.diagonal(Se)))))
        val, _, Abar, Bbar, Cbar, Dbar, Kbar, Rebar = out
        if not np.isfinite(val):
            return np.inf, np.full(self.dim, np.nan)
        Sebar = (Rebar + Rebar.T) @ Se
        sebar = vech(expm_tril_vjp(Lse, Sebar))
        grad = np.concatenate([Abar.ravel(), Bbar.ravel(), Cbar.ravel(),
                               Dbar.ravel(), Kbar.ravel(), sebar])
        return float(val), grad

    def value_and_grad(self, x):
        tot = 0.0
        g = np.zeros(self.dim)
        for j in range(len(self.batches)):
            v, gj = self.batch_value_and_grad(x, j)
            tot += v
            g = g + gj
        return tot, g

    def value(self, x):
        return self.value_and_grad(x)[0]


# ---------------------------------------------------------------------------
# Duffing extended predictor in innovations form
# ---------------------------------------------------------------------------

def ekf_steady_state_predictor(theta, gain, y, t, dt):
    """Innovations of the fixed-gain extended predictor on the mean map.

    x_{k+1} = taylor_mean(x_k, t_k) + gain * e_k with e_k = y_k - x_k[0]
    and x_0 = (y_0, 0).  Divergence yields non-finite trailing innovations.
    """
    theta = np.asarray(theta, dtype=float)
    gain = np.asarray(gain, dtype=float).reshape(2)
    y = np.asarray(y, dtype=float).reshape(-1)
    t = np.asarray(t, dtype=float).reshape(-1)
    out = _PEM_DUFF_KERNEL(y, t, theta[0], theta[1], theta[2], theta[3],
                           gain, dt, 0.0)
    return out[1]


def _pem_duffing_numpy(y, t, a, b, d, g, K, dt, lse):
    from .models.duffing import taylor_mean
    n1 = y.shape[0]
    h = 0.5 * dt * dt
    rho = np.exp(-2.0 * lse)
    x = np.zeros((n1 + 1, 2))
    x[0, 0] = y[0]
    e = np.full(n1, np.nan)
    val = n1 * (0.5 * LOG_2PI + lse)
    th = np.zeros(7)
    for k in range(n1):
        e[k] = y[k] - x[k, 0]
        val += 0.5 * rho * e[k] * e[k]
        x[k + 1] = taylor_mean(x[k], t[k], dt, a, b, d, g) + K * e[k]
        if not np.all(np.abs(x[k + 1]) < 1e100):
            return np.inf, e, th
    if not np.isfinite(val):
        return np.inf, e, th
    lam = np.zeros(2)
    for k in range(n1 - 1, -1, -1):
        x1, x2 = x[k]
        ct = np.cos(t[k]); st = np.sin(t[k])
        f = a * x1 + b * x1 ** 3 - d * x2 + g * ct
        f1 = a + 3.0 * b * x1 * x1
        ge = rho * e[k]
        me = ge + K @ lam
        th[6] += 1.0 - rho * e[k] * e[k]
        th[4] += lam[0] * e[k]
        th[5] += lam[1] * e[k]
        th[0] += lam[0] * h * x1 + lam[1] * (dt * x1 + h * (x2 - d * x1))
        th[1] += lam[0] * h * x1 ** 3 + lam[1] * (dt * x1 ** 3 + h * (3 * x1 * x1 * x2 - d * x1 ** 3))
        th[2] += lam[0] * (-h * x2) + lam[1] * (-dt * x2 + h * (-f + d * x2))
        th[3] += lam[0] * h * ct + lam[1] * (dt * ct + h * (-st - d * ct))
        j11 = 1.0 + h * f1
        j12 = dt - h * d
        j21 = f1 * dt + h * (6.0 * b * x1 * x2 - d * f1)
        j22 = 1.0 - d * dt + h * (f1 + d * d)
        lam = np.array([j11 * lam[0] + j21 * lam[1] - me,
                        j12 * lam[0] + j22 * lam[1]])
    return val, e, th


@njit(cache=True)
def _pem_duffing_numba(y, t, a, b, d, g, K, dt, lse):
    n1 = y.shape[0]
    h = 0.5 * dt * dt
    rho = np.exp(-2.0 * lse)
    x = np.zeros((n1 + 1, 2))
    x[0, 0] = y[0]
    e = np.full(n1, np.nan)
    val = n1 * (0.5 * LOG_2PI + lse)
    th = np.zeros(7)
    for k in range(n1):
        x1 = x[k, 0]
        x2 = x[k, 1]
        e[k] = y[k] - x1
        val += 0.5 * rho * e[k] * e[k]
        ct = np.cos(t[k]); st = np.sin(t[k])
        f = a * x1 + b * x1 ** 3 - d * x2 + g * ct
        f1 = a + 3.0 * b * x1 * x1
        x[k + 1, 0] = x1 + x2 * dt + h * f + K[0] * e[k]
        x[k + 1, 1] = x2 + f * dt + h * (-g * st + f1 * x2 - d * f) + K[1] * e[k]
        if not (abs(x[k + 1, 0]) < 1e100 and abs(x[k + 1, 1]) < 1e100):
            return np.inf, e, th
    if not np.isfinite(val):
        return np.inf, e, th
    lam0 = 0.0
    lam1 = 0.0
    for k in range(n1 - 1, -1, -1):
        x1 = x[k, 0]
        x2 = x[k, 1]
        ct = np.cos(t[k]); st = np.sin(t[k])
        f = a * x1 + b * x1 ** 3 - d * x2 + g * ct
        f1 = a + 3.0 * b * x1 * x1
        ge = rho * e[k]
        me = ge + K[0] * lam0 + K[1] * lam1
        th[6] += 1.0 - rho * e[k] * e[k]
        th[4] += lam0 * e[k]
        th[5] += lam1 * e[k]
        x13 = x1 ** 3
        th[0] += lam0 * h * x1 + lam1 * (dt * x1 + h * (x2 - d * x1))
        th[1] += lam0 * h * x13 + lam1 * (dt * x13 + h * (3 * x1 * x1 * x2 - d * x13))
        th[2] += lam0 * (-h * x2) + lam1 * (-dt * x2 + h * (-f + d * x2))
        th[3] += lam0 * h * ct + lam1 * (dt * ct + h * (-st - d * ct))
        j11 = 1.0 + h * f1
        j12 = dt - h * d
        j21 = f1 * dt + h * (6.0 * b * x1 * x2 - d * f1)
        j22 = 1.0 - d * dt + h * (f1 + d * d)
        new0 = j11 * lam0 + j21 * lam1 - me
        new1 = j12 * lam0 + j22 * lam1
        lam0 = new0
        lam1 = new1
    return val, e, th


_PEM_DUFF_KERNEL = select(_pem_duffing_numba, _pem_duffing_numpy)


class DuffingPemProblem:
    """Prediction-error objective for the extended Duffing predictor.

    Decision vector: [alpha, beta, delta, gamma, k1, k2, log_std_innov].
    """

    def __init__(self, y, t, dt):
        self.y = np.asarray(y, dtype=float).reshape(-1)
        self.t = np.asarray(t, dtype=float).reshape(-1)
        self.dt = float(dt)

    dim = 7

    @staticmethod
    def init_from_model(model: DuffingModel, gain=(0.5, 0.5)):
        return np.array([model.alpha, model.beta, model.delta, model.gamma,
                         gain[0], gain[1], model.lsv])

    def value_and_grad(self, x):
        x = np.asarray(x, dtype=float)
        val, e, th = _PEM_DUFF_KERNEL(
            self.y, self.t, x[0], x[1], x[2], x[3],
            np.ascontiguousarray(x[4:6]), self.dt, x[6])
        if not np.isfinite(val):
            return np.inf, np.full(7, np.nan)
        return float(val), th

    def batch_value_and_grad(self, x, j):
        return self.value_and_grad(x)

    @property
    def batch_count(self):
        return 1

    def value(self, x):
        return self.value_and_grad(x)[0]
