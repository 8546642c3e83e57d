"""Linear-Gaussian state-space model.

    x_{k}   = A x_{k-1} + B u_{k-1} + w_k,   w_k ~ N(0, Sw Sw')
    y_k     = C x_k     + D u_k     + v_k,   v_k ~ N(0, Sv Sv')

The free parameter vector stacks every entry of A, B, C, D (the model is
deliberately overparameterized; estimates are compared through their
input-output behavior) followed by the half-vectorized matrix logarithms
of Sw and Sv.
"""

import numpy as np

from .._backend import njit, prange, select
from ..trimat import expm_tril, expm_tril_vjp, logm_tril, matl, vech, vech_len
from .base import LOG_2PI, GaussianPrior, mvn_logpdf


class LinearGaussianModel:
    """Concrete linear-Gaussian model instance (also the parameter template)."""

    kind = "linear"

    def __init__(self, A, B, C, D, Sw, Sv, prior: GaussianPrior | None = None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.nx = self.A.shape[0]
        self.B = np.asarray(B, dtype=float).reshape(self.nx, -1)
        self.nu = self.B.shape[1]
        self.C = np.asarray(C, dtype=float).reshape(-1, self.nx)
        self.ny = self.C.shape[0]
        self.D = np.asarray(D, dtype=float).reshape(self.ny, self.nu)
        self.Sw = np.atleast_2d(np.asarray(Sw, dtype=float))
        self.Sv = np.atleast_2d(np.asarray(Sv, dtype=float))
        if self.A.shape != (self.nx, self.nx):
            raise ValueError("A must be square")
        if self.Sw.shape != (self.nx, self.nx) or self.Sv.shape != (self.ny, self.ny):
            raise ValueError("noise factors must be nx*nx and ny*ny")
        self.prior = prior

    # -- parameter vector ---------------------------------------------------

    @staticmethod
    def theta_dim(nx: int, ny: int, nu: int) -> int:
        return nx * nx + nx * nu + ny * nx + ny * nu + vech_len(nx) + vech_len(ny)

    @property
    def ntheta(self) -> int:
        return self.theta_dim(self.nx, self.ny, self.nu)

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([
            self.A.ravel(), self.B.ravel(), self.C.ravel(), self.D.ravel(),
            vech(logm_tril(self.Sw)), vech(logm_tril(self.Sv)),
        ])

    @classmethod
    def from_theta(cls, theta, nx, ny, nu, prior=None) -> "LinearGaussianModel":
        theta = np.asarray(theta, dtype=float)
        if theta.size != cls.theta_dim(nx, ny, nu):
            raise ValueError("theta has the wrong length")
        A, B, C, D, w, v = _split_theta(theta, nx, ny, nu)
        return cls(A, B, C, D, expm_tril(matl(w)), expm_tril(matl(v)), prior=prior)

    def with_theta(self, theta) -> "LinearGaussianModel":
        return self.from_theta(theta, self.nx, self.ny, self.nu, prior=self.prior)

    # -- log-densities ------------------------------------------------------

    def logp_initial(self, x0):
        """Flat prior contributes zero; proper priors use their Gaussian density."""
        if self.prior is None:
            return np.zeros(np.shape(np.atleast_2d(x0))[0]) if np.ndim(x0) > 1 else 0.0
        return self.prior.logpdf(x0)

    def logp_transition(self, x_k, x_prev, u_prev=None):
        mean = np.asarray(x_prev, dtype=float) @ self.A.T
        if u_prev is not None and self.nu:
            mean = mean + np.asarray(u_prev, dtype=float) @ self.B.T
        return mvn_logpdf(x_k, mean, self.Sw)

    def logp_measurement(self, y_k, x_k, u=None):
        mean = np.asarray(x_k, dtype=float) @ self.C.T
        if u is not None and self.nu:
            mean = mean + np.asarray(u, dtype=float) @ self.D.T
        return mvn_logpdf(y_k, mean, self.Sv)

    # -- objective-engine hooks ----------------------------------------------

    def precompute(self, theta):
        return _LinearEval(self, np.asarray(theta, dtype=float))

    def kernels(self):
        return {"meas": _MEAS_KERNEL, "trans": _TRANS_KERNEL}


def _split_theta(theta, nx, ny, nu):
    sizes = [nx * nx, nx * nu, ny * nx, ny * nu, vech_len(nx), vech_len(ny)]
    parts = np.split(theta, np.cumsum(sizes)[:-1])
    return (parts[0].reshape(nx, nx), parts[1].reshape(nx, nu),
            parts[2].reshape(ny, nx), parts[3].reshape(ny, nu),
            parts[4], parts[5])


class _LinearEval:
    """Per-evaluation cache: unpacked matrices and solved noise inverses."""

    def __init__(self, model: LinearGaussianModel, theta: np.ndarray):
        nx, ny, nu = model.nx, model.ny, model.nu
        self.model = model
        self.A, self.B, self.C, self.D, self.wvec, self.vvec = \
            _split_theta(theta, nx, ny, nu)
        self.Lw = matl(self.wvec)
        self.Lv = matl(self.vvec)
        self.Sw = expm_tril(self.Lw)
        self.Sv = expm_tril(self.Lv)
        Q = self.Sw @ self.Sw.T
        R = self.Sv @ self.Sv.T
        self.Qinv = np.linalg.inv(Q)
        self.Rinv = np.linalg.inv(R)
        self.trans_const = -0.5 * nx * LOG_2PI - np.sum(np.log(np.diagonal(self.Sw)))
        self.meas_const = -0.5 * ny * LOG_2PI - np.sum(np.log(np.diagonal(self.Sv)))

    def run_meas(self, Y, U, mu, S, xi, om):
        return _MEAS_KERNEL(Y, U, mu, S, xi, om,
                            self.C, self.D, self.Rinv, self.meas_const)

    def run_trans(self, Uprev, mu_prev, mu_cur, S_prev, Pst, Cst, nup, nuc, psi, tprev):
        return _TRANS_KERNEL(Uprev, mu_prev, mu_cur, S_prev, Pst, Cst, nup, nuc,
                             psi, self.A, self.B, self.Qinv, self.trans_const)

    def fold_theta_bar(self, meas_out, trans_out):
        """Reduce per-step adjoint slots into the packed-theta gradient."""
        _, _, _, Cbar, Dbar, Rbar = meas_out
        _, _, _, _, _, _, Abar, Bbar, Qbar = trans_out
        Qb = Qbar.sum(axis=0)
        Rb = Rbar.sum(axis=0)
        Swbar = (Qb + Qb.T) @ self.Sw
        Svbar = (Rb + Rb.T) @ self.Sv
        wbar = vech(expm_tril_vjp(self.Lw, Swbar))
        vbar = vech(expm_tril_vjp(self.Lv, Svbar))
        return np.concatenate([
            Abar.sum(axis=0).ravel(), Bbar.sum(axis=0).ravel(),
            Cbar.sum(axis=0).ravel(), Dbar.sum(axis=0).ravel(), wbar, vbar,
        ])


# ---------------------------------------------------------------------------
# measurement term kernels
# ---------------------------------------------------------------------------

def _meas_numpy(Y, U, mu, S, xi, om, Cm, Dm, Rinv, const):
    X = mu[:, None, :] + np.einsum("ib,kab->kia", xi, S)
    E = Y[:, None, :] - X @ Cm.T - (U @ Dm.T)[:, None, :]
    G = E @ Rinv
    quad = np.sum(E * G, axis=-1)
    val = (const - 0.5 * quad) @ om
    GW = om[None, :, None] * G
    Xbar = GW @ Cm
    mubar = Xbar.sum(axis=1)
    Sbar = np.einsum("kia,ib->kab", Xbar, xi)
    Cbar = np.einsum("kiy,kia->kya", GW, X)
    Dbar = np.einsum("kiy,ka->kya", GW, U)
    Rbar = 0.5 * (np.einsum("kiy,kiz->kyz", GW, G) - Rinv[None])
    return val, mubar, Sbar, Cbar, Dbar, Rbar


@njit(cache=True, parallel=True, fastmath={"contract", "reassoc", "nsz"})
def _meas_numba(Y, U, mu, S, xi, om, Cm, Dm, Rinv, const):
    Np1, ny = Y.shape
    nx = mu.shape[1]
    nup = U.shape[1]
    P = xi.shape[0]
    val = np.zeros(Np1)
    mubar = np.zeros((Np1, nx))
    Sbar = np.zeros((Np1, nx, nx))
    Cbar = np.zeros((Np1, ny, nx))
    Dbar = np.zeros((Np1, ny, nup))
    Rbar = np.zeros((Np1, ny, ny))
    for k in prange(Np1):
        x = np.empty(nx)
        e = np.empty(ny)
        g = np.empty(ny)
        xb = np.empty(nx)
        du = np.zeros(ny)
        for yy in range(ny):
            s = 0.0
            for uu in range(nup):
                s += Dm[yy, uu] * U[k, uu]
            du[yy] = s
        acc = 0.0
        for i in range(P):
            for a in range(nx):
                s = mu[k, a]
                for b in range(nx):
                    s += S[k, a, b] * xi[i, b]
                x[a] = s
            for yy in range(ny):
                s = Y[k, yy] - du[yy]
                for a in range(nx):
                    s -= Cm[yy, a] * x[a]
                e[yy] = s
            quad = 0.0
            for yy in range(ny):
                s = 0.0
                for zz in range(ny):
                    s += Rinv[yy, zz] * e[zz]
                g[yy] = s
                quad += s * e[yy]
            w = om[i]
            acc += w * (const - 0.5 * quad)
            for a in range(nx):
                s = 0.0
                for yy in range(ny):
                    s += Cm[yy, a] * g[yy]
                xb[a] = w * s
            for a in range(nx):
                mubar[k, a] += xb[a]
                for b in range(nx):
                    Sbar[k, a, b] += xb[a] * xi[i, b]
            for yy in range(ny):
                gw = w * g[yy]
                for a in range(nx):
                    Cbar[k, yy, a] += gw * x[a]
                for uu in range(nup):
                    Dbar[k, yy, uu] += gw * U[k, uu]
                for zz in range(ny):
                    Rbar[k, yy, zz] += 0.5 * gw * g[zz]
        val[k] = acc
        for yy in range(ny):
            for zz in range(ny):
                Rbar[k, yy, zz] -= 0.5 * Rinv[yy, zz]
    return val, mubar, Sbar, Cbar, Dbar, Rbar


# ---------------------------------------------------------------------------
# transition term kernels
# ---------------------------------------------------------------------------

def _trans_numpy(Uprev, mu_prev, mu_cur, S_prev, Pst, Cst, nup, nuc, psi,
                 A, B, Qinv, const):
    Xp = mu_prev[:, None, :] + np.einsum("ib,kab->kia", nup, S_prev)
    Xc = (mu_cur[:, None, :] + np.einsum("ib,kab->kia", nup, Cst)
          + np.einsum("ib,kab->kia", nuc, Pst))
    R = Xc - Xp @ A.T - (Uprev @ B.T)[:, None, :]
    G = R @ Qinv
    quad = np.sum(R * G, axis=-1)
    val = (const - 0.5 * quad) @ psi
    GW = psi[None, :, None] * G
    mu_cur_bar = -GW.sum(axis=1)
    Ccross_bar = -np.einsum("kia,ib->kab", GW, nup)
    Pbar = -np.einsum("kia,ib->kab", GW, nuc)
    Xpbar = GW @ A
    mu_prev_bar = Xpbar.sum(axis=1)
    Sprev_bar = np.einsum("kia,ib->kab", Xpbar, nup)
    Abar = np.einsum("kia,kib->kab", GW, Xp)
    Bbar = np.einsum("kia,kb->kab", GW, Uprev)
    Qbar = 0.5 * (np.einsum("kia,kib->kab", GW, G) - Qinv[None])
    return (val, mu_prev_bar, mu_cur_bar, Sprev_bar, Ccross_bar, Pbar,
            Abar, Bbar, Qbar)


@njit(cache=True, parallel=True, fastmath={"contract", "reassoc", "nsz"})
def _trans_numba(Uprev, mu_prev, mu_cur, S_prev, Pst, Cst, nup, nuc, psi,
                 A, B, Qinv, const):
    N, nx = mu_prev.shape
    nin = Uprev.shape[1]
    P = nup.shape[0]
    val = np.zeros(N)
    mu_prev_bar = np.zeros((N, nx))
    mu_cur_bar = np.zeros((N, nx))
    Sprev_bar = np.zeros((N, nx, nx))
    Ccross_bar = np.zeros((N, nx, nx))
    Pbar = np.zeros((N, nx, nx))
    Abar = np.zeros((N, nx, nx))
    Bbar = np.zeros((N, nx, nin))
    Qbar = np.zeros((N, nx, nx))
    for k in prange(N):
        xp = np.empty(nx)
        xc = np.empty(nx)
        r = np.empty(nx)
        g = np.empty(nx)
        bu = np.zeros(nx)
        for a in range(nx):
            s = 0.0
            for uu in range(nin):
                s += B[a, uu] * Uprev[k, uu]
            bu[a] = s
        acc = 0.0
        for i in range(P):
            for a in range(nx):
                sp = mu_prev[k, a]
                sc = mu_cur[k, a]
                for b in range(nx):
                    sp += S_prev[k, a, b] * nup[i, b]
                    sc += Cst[k, a, b] * nup[i, b] + Pst[k, a, b] * nuc[i, b]
                xp[a] = sp
                xc[a] = sc
            for a in range(nx):
                s = xc[a] - bu[a]
                for b in range(nx):
                    s -= A[a, b] * xp[b]
                r[a] = s
            quad = 0.0
            for a in range(nx):
                s = 0.0
                for b in range(nx):
                    s += Qinv[a, b] * r[b]
                g[a] = s
                quad += s * r[a]
            w = psi[i]
            acc += w * (const - 0.5 * quad)
            for a in range(nx):
                gw = w * g[a]
                mu_cur_bar[k, a] -= gw
                for b in range(nx):
                    Ccross_bar[k, a, b] -= gw * nup[i, b]
                    Pbar[k, a, b] -= gw * nuc[i, b]
                    Abar[k, a, b] += gw * xp[b]
                    Qbar[k, a, b] += 0.5 * gw * g[b]
                for uu in range(nin):
                    Bbar[k, a, uu] += gw * Uprev[k, uu]
            for b in range(nx):
                s = 0.0
                for a in range(nx):
                    s += A[a, b] * g[a]
                xb = w * s
                mu_prev_bar[k, b] += xb
                for c in range(nx):
                    Sprev_bar[k, b, c] += xb * nup[i, c]
        val[k] = acc
        for a in range(nx):
            for b in range(nx):
                Qbar[k, a, b] -= 0.5 * Qinv[a, b]
    return (val, mu_prev_bar, mu_cur_bar, Sprev_bar, Ccross_bar, Pbar,
            Abar, Bbar, Qbar)


_MEAS_KERNEL = select(_meas_numba, _meas_numpy)
_TRANS_KERNEL = select(_trans_numba, _trans_numpy)
