"""Forced Duffing oscillator, discretized by one strong Taylor step.

Continuous dynamics (scalar Wiener process W, additive noise):

    dx1 = x2 dt
    dx2 = (alpha*x1 + beta*x1^3 - delta*x2 + gamma*cos(t)) dt + exp(lsw) dW

and scalar measurements y_k ~ N(x1(k*Ts), exp(2*lsv)).  The discrete
transition density comes from a single order-1.5 strong Ito-Taylor step
over the sampling interval, whose mean map and Gaussian noise map are in
closed form below.  Free parameters: (alpha, beta, delta, gamma, lsw, lsv).
"""

import numpy as np

from .._backend import njit, prange, select
from .base import LOG_2PI, GaussianPrior, mvn_logpdf

THETA_NAMES = ("alpha", "beta", "delta", "gamma", "lsw", "lsv")


def drift(x, t, alpha, beta, delta, gamma):
    """Continuous-time drift a(t, x) of the oscillator."""
    x = np.asarray(x, dtype=float)
    f = alpha * x[..., 0] + beta * x[..., 0] ** 3 - delta * x[..., 1] + gamma * np.cos(t)
    return np.stack([x[..., 1], f], axis=-1)


def taylor_mean(x, t, dt, alpha, beta, delta, gamma):
    """One-step deterministic part of the order-1.5 strong Taylor scheme."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    f = alpha * x1 + beta * x1 ** 3 - delta * x2 + gamma * np.cos(t)
    f1 = alpha + 3.0 * beta * x1 ** 2
    m1 = x1 + x2 * dt + 0.5 * f * dt * dt
    m2 = x2 + f * dt + 0.5 * (-gamma * np.sin(t) + f1 * x2 - delta * f) * dt * dt
    return np.stack([m1, m2], axis=-1)


def increment_cov(dt):
    """Exact covariance of the correlated increments (dW, dZ) over one step."""
    return np.array([[dt, dt * dt / 2.0],
                     [dt * dt / 2.0, dt ** 3 / 3.0]])


def noise_map(delta, lsw):
    """Linear map G with state noise = G @ (dW, dZ) for one Taylor step."""
    s = np.exp(lsw)
    return np.array([[0.0, s], [s, -delta * s]])


def transition_cov(dt, delta, lsw):
    """Push-forward of the (dW, dZ) covariance through the noise map."""
    G = noise_map(delta, lsw)
    Q = increment_cov(dt)
    return G @ Q @ G.T


class DuffingModel:
    """Duffing oscillator model with one Taylor step per sampling interval."""

    kind = "duffing"
    nx = 2
    ny = 1
    nu = 0
    ntheta = 6

    def __init__(self, alpha, beta, delta, gamma, lsw, lsv, dt,
                 prior: GaussianPrior | None = None):
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.delta = float(delta)
        self.gamma = float(gamma)
        self.lsw = float(lsw)
        self.lsv = float(lsv)
        self.dt = float(dt)
        self.prior = prior

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.delta, self.gamma,
                         self.lsw, self.lsv])

    @classmethod
    def from_theta(cls, theta, dt, prior=None) -> "DuffingModel":
        theta = np.asarray(theta, dtype=float)
        if theta.size != 6:
            raise ValueError("Duffing theta must have 6 entries")
        return cls(*theta, dt=dt, prior=prior)

    def with_theta(self, theta) -> "DuffingModel":
        return self.from_theta(theta, self.dt, prior=self.prior)

    # -- log-densities ------------------------------------------------------

    def transition_moments(self, x_prev, t_prev):
        """Gaussian moments of one discretization step: (mean, chol of cov)."""
        mean = taylor_mean(x_prev, t_prev, self.dt,
                           self.alpha, self.beta, self.delta, self.gamma)
        chol = np.linalg.cholesky(transition_cov(self.dt, self.delta, self.lsw))
        return mean, chol

    def logp_initial(self, x0):
        if self.prior is None:
            return np.zeros(np.shape(np.atleast_2d(x0))[0]) if np.ndim(x0) > 1 else 0.0
        return self.prior.logpdf(x0)

    def logp_transition(self, x_k, x_prev, t_prev):
        mean, chol = self.transition_moments(x_prev, t_prev)
        return mvn_logpdf(x_k, mean, chol)

    def logp_measurement(self, y_k, x_k):
        x_k = np.asarray(x_k, dtype=float)
        e = np.asarray(y_k, dtype=float) - x_k[..., 0]
        return -0.5 * LOG_2PI - self.lsv - 0.5 * np.square(e) * np.exp(-2.0 * self.lsv)

    # -- objective-engine hooks ----------------------------------------------

    def precompute(self, theta):
        return _DuffingEval(self, np.asarray(theta, dtype=float))

    def kernels(self):
        return {"meas": _MEAS_KERNEL, "trans": _TRANS_KERNEL}


class _DuffingEval:
    def __init__(self, model: DuffingModel, theta: np.ndarray):
        self.model = model
        self.theta = theta
        a, b, d, g, lsw, lsv = theta
        dt = model.dt
        Sig = transition_cov(dt, d, lsw)
        self.Siginv = np.linalg.inv(Sig)
        # det(Sig) = exp(4 lsw) dt^4 / 12 (the noise map has determinant -exp(2 lsw))
        logdet = 4.0 * lsw + np.log(dt ** 4 / 12.0)
        self.trans_const = -LOG_2PI - 0.5 * logdet
        ew2 = np.exp(2.0 * lsw)
        self.dSig_ddelta = ew2 * np.array([
            [0.0, -dt ** 3 / 3.0],
            [-dt ** 3 / 3.0, -dt * dt + 2.0 * d * dt ** 3 / 3.0]])
        self.tr_Siginv_dSig = float(np.trace(self.Siginv @ self.dSig_ddelta))

    def run_meas(self, Y, U, mu, S, xi, om):
        lsv = self.theta[5]
        return _MEAS_KERNEL(Y[:, 0], mu, S, xi, om, lsv)

    def run_trans(self, Uprev, mu_prev, mu_cur, S_prev, Pst, Cst, nup, nuc, psi, tprev):
        a, b, d, g = self.theta[:4]
        return _TRANS_KERNEL(tprev, mu_prev, mu_cur, S_prev, Pst, Cst, nup, nuc,
                             psi, a, b, d, g, self.model.dt, self.Siginv,
                             self.trans_const, self.dSig_ddelta,
                             self.tr_Siginv_dSig)

    def fold_theta_bar(self, meas_out, trans_out):
        lsv_slots = meas_out[3]
        th_slots = trans_out[6]
        out = np.zeros(6)
        out[:5] = th_slots.sum(axis=0)
        out[5] = lsv_slots.sum()
        return out


# ---------------------------------------------------------------------------
# measurement term kernels (scalar measurement of x1)
# ---------------------------------------------------------------------------

def _meas_numpy(y, mu, S, xi, om, lsv):
    X1 = mu[:, None, 0] + np.einsum("ib,kb->ki", xi, S[:, 0, :])
    rho = np.exp(-2.0 * lsv)
    E = y[:, None] - X1
    const = -0.5 * LOG_2PI - lsv
    val = (const - 0.5 * rho * E * E) @ om
    X1bar = om[None, :] * (rho * E)
    mubar = np.zeros((y.shape[0], 2))
    mubar[:, 0] = X1bar.sum(axis=1)
    Sbar = np.zeros((y.shape[0], 2, 2))
    Sbar[:, 0, :] = np.einsum("ki,ib->kb", X1bar, xi)
    lsv_bar = (rho * E * E - 1.0) @ om
    return val, mubar, Sbar, lsv_bar


@njit(cache=True, parallel=True, fastmath={"contract", "reassoc", "nsz"})
def _meas_numba(y, mu, S, xi, om, lsv):
    Np1 = y.shape[0]
    nx = mu.shape[1]
    P = xi.shape[0]
    rho = np.exp(-2.0 * lsv)
    const = -0.5 * LOG_2PI - lsv
    val = np.zeros(Np1)
    mubar = np.zeros((Np1, nx))
    Sbar = np.zeros((Np1, nx, nx))
    lsv_bar = np.zeros(Np1)
    for k in prange(Np1):
        acc = 0.0
        accv = 0.0
        for i in range(P):
            x1 = mu[k, 0]
            for b in range(nx):
                x1 += S[k, 0, b] * xi[i, b]
            e = y[k] - x1
            w = om[i]
            acc += w * (const - 0.5 * rho * e * e)
            xb = w * rho * e
            mubar[k, 0] += xb
            for b in range(nx):
                Sbar[k, 0, b] += xb * xi[i, b]
            accv += w * (rho * e * e - 1.0)
        val[k] = acc
        lsv_bar[k] = accv
    return val, mubar, Sbar, lsv_bar


# ---------------------------------------------------------------------------
# transition term kernels
# ---------------------------------------------------------------------------

def _trans_numpy(tprev, mu_prev, mu_cur, S_prev, Pst, Cst, nup, nuc, psi,
                 a, b, d, g, dt, Siginv, const, dSig, tr_pen):
    Xp = mu_prev[:, None, :] + np.einsum("ib,kab->kia", nup, S_prev)
    Xc = (mu_cur[:, None, :] + np.einsum("ib,kab->kia", nup, Cst)
          + np.einsum("ib,kab->kia", nuc, Pst))
    x1, x2 = Xp[..., 0], Xp[..., 1]
    ct = np.cos(tprev)[:, None]
    st = np.sin(tprev)[:, None]
    f = a * x1 + b * x1 ** 3 - d * x2 + g * ct
    f1 = a + 3.0 * b * x1 ** 2
    h = 0.5 * dt * dt
    m1 = x1 + x2 * dt + h * f
    m2 = x2 + f * dt + h * (-g * st + f1 * x2 - d * f)
    R1 = Xc[..., 0] - m1
    R2 = Xc[..., 1] - m2
    G1 = Siginv[0, 0] * R1 + Siginv[0, 1] * R2
    G2 = Siginv[1, 0] * R1 + Siginv[1, 1] * R2
    quad = R1 * G1 + R2 * G2
    val = (const - 0.5 * quad) @ psi
    GW1 = psi[None, :] * G1
    GW2 = psi[None, :] * G2
    # current-state adjoints
    mu_cur_bar = np.stack([-GW1.sum(axis=1), -GW2.sum(axis=1)], axis=-1)
    GW = np.stack([GW1, GW2], axis=-1)
    Ccross_bar = -np.einsum("kia,ib->kab", GW, nup)
    Pbar = -np.einsum("kia,ib->kab", GW, nuc)
    # previous-state adjoints through the mean-map Jacobian
    J11 = 1.0 + h * f1
    J12 = dt - h * d
    J21 = f1 * dt + h * (6.0 * b * x1 * x2 - d * f1)
    J22 = 1.0 - d * dt + h * (f1 + d * d)
    Xpbar = np.stack([J11 * GW1 + J21 * GW2, J12 * GW1 + J22 * GW2], axis=-1)
    mu_prev_bar = Xpbar.sum(axis=1)
    Sprev_bar = np.einsum("kia,ib->kab", Xpbar, nup)
    # parameter adjoints: mean path for (a, b, d, g), covariance path for (d, lsw)
    th = np.zeros((tprev.shape[0], 5))
    da1, da2 = h * x1, dt * x1 + h * (x2 - d * x1)
    db1, db2 = h * x1 ** 3, dt * x1 ** 3 + h * (3 * x1 ** 2 * x2 - d * x1 ** 3)
    dd1, dd2 = h * (-x2), dt * (-x2) + h * (-f + d * x2)
    dg1, dg2 = h * ct, dt * ct + h * (-st - d * ct)
    th[:, 0] = np.sum(GW1 * da1 + GW2 * da2, axis=1)
    th[:, 1] = np.sum(GW1 * db1 + GW2 * db2, axis=1)
    th[:, 2] = np.sum(GW1 * dd1 + GW2 * dd2, axis=1)
    th[:, 3] = np.sum(GW1 * dg1 + GW2 * dg2, axis=1)
    gDg = (dSig[0, 0] * G1 * G1 + 2.0 * dSig[0, 1] * G1 * G2 + dSig[1, 1] * G2 * G2)
    th[:, 2] += 0.5 * ((gDg @ psi) - tr_pen)
    th[:, 4] = (quad @ psi) - 2.0
    return (val, mu_prev_bar, mu_cur_bar, Sprev_bar, Ccross_bar, Pbar, th)


@njit(cache=True, parallel=True, fastmath={"contract", "reassoc", "nsz"})
def _trans_numba(tprev, mu_prev, mu_cur, S_prev, Pst, Cst, nup, nuc, psi,
                 a, b, d, g, dt, Siginv, const, dSig, tr_pen):
    N = mu_prev.shape[0]
    P = nup.shape[0]
    h = 0.5 * dt * dt
    val = np.zeros(N)
    mu_prev_bar = np.zeros((N, 2))
    mu_cur_bar = np.zeros((N, 2))
    Sprev_bar = np.zeros((N, 2, 2))
    Ccross_bar = np.zeros((N, 2, 2))
    Pbar = np.zeros((N, 2, 2))
    th = np.zeros((N, 5))
    for k in prange(N):
        ct = np.cos(tprev[k])
        st = np.sin(tprev[k])
        acc = 0.0
        accq = 0.0
        accD = 0.0
        for i in range(P):
            x1 = mu_prev[k, 0] + S_prev[k, 0, 0] * nup[i, 0] + S_prev[k, 0, 1] * nup[i, 1]
            x2 = mu_prev[k, 1] + S_prev[k, 1, 0] * nup[i, 0] + S_prev[k, 1, 1] * nup[i, 1]
            xc1 = (mu_cur[k, 0] + Cst[k, 0, 0] * nup[i, 0] + Cst[k, 0, 1] * nup[i, 1]
                   + Pst[k, 0, 0] * nuc[i, 0] + Pst[k, 0, 1] * nuc[i, 1])
            xc2 = (mu_cur[k, 1] + Cst[k, 1, 0] * nup[i, 0] + Cst[k, 1, 1] * nup[i, 1]
                   + Pst[k, 1, 0] * nuc[i, 0] + Pst[k, 1, 1] * nuc[i, 1])
            f = a * x1 + b * x1 ** 3 - d * x2 + g * ct
            f1 = a + 3.0 * b * x1 * x1
            m1 = x1 + x2 * dt + h * f
            m2 = x2 + f * dt + h * (-g * st + f1 * x2 - d * f)
            r1 = xc1 - m1
            r2 = xc2 - m2
            g1 = Siginv[0, 0] * r1 + Siginv[0, 1] * r2
            g2 = Siginv[1, 0] * r1 + Siginv[1, 1] * r2
            quad = r1 * g1 + r2 * g2
            w = psi[i]
            acc += w * (const - 0.5 * quad)
            accq += w * quad
            gw1 = w * g1
            gw2 = w * g2
            accD += (dSig[0, 0] * g1 * gw1 + 2.0 * dSig[0, 1] * gw1 * g2
                     + dSig[1, 1] * g2 * gw2)
            mu_cur_bar[k, 0] -= gw1
            mu_cur_bar[k, 1] -= gw2
            Ccross_bar[k, 0, 0] -= gw1 * nup[i, 0]
            Ccross_bar[k, 0, 1] -= gw1 * nup[i, 1]
            Ccross_bar[k, 1, 0] -= gw2 * nup[i, 0]
            Ccross_bar[k, 1, 1] -= gw2 * nup[i, 1]
            Pbar[k, 0, 0] -= gw1 * nuc[i, 0]
            Pbar[k, 0, 1] -= gw1 * nuc[i, 1]
            Pbar[k, 1, 0] -= gw2 * nuc[i, 0]
            Pbar[k, 1, 1] -= gw2 * nuc[i, 1]
            j11 = 1.0 + h * f1
            j12 = dt - h * d
            j21 = f1 * dt + h * (6.0 * b * x1 * x2 - d * f1)
            j22 = 1.0 - d * dt + h * (f1 + d * d)
            xb1 = j11 * gw1 + j21 * gw2
            xb2 = j12 * gw1 + j22 * gw2
            mu_prev_bar[k, 0] += xb1
            mu_prev_bar[k, 1] += xb2
            Sprev_bar[k, 0, 0] += xb1 * nup[i, 0]
            Sprev_bar[k, 0, 1] += xb1 * nup[i, 1]
            Sprev_bar[k, 1, 0] += xb2 * nup[i, 0]
            Sprev_bar[k, 1, 1] += xb2 * nup[i, 1]
            x13 = x1 ** 3
            th[k, 0] += gw1 * (h * x1) + gw2 * (dt * x1 + h * (x2 - d * x1))
            th[k, 1] += gw1 * (h * x13) + gw2 * (dt * x13 + h * (3 * x1 * x1 * x2 - d * x13))
            th[k, 2] += gw1 * (-h * x2) + gw2 * (-dt * x2 + h * (-f + d * x2))
            th[k, 3] += gw1 * (h * ct) + gw2 * (dt * ct + h * (-st - d * ct))
        val[k] = acc
        th[k, 2] += 0.5 * (accD - tr_pen)
        th[k, 4] = accq - 2.0
    return (val, mu_prev_bar, mu_cur_bar, Sprev_bar, Ccross_bar, Pbar, th)


_MEAS_KERNEL = select(_meas_numba, _meas_numpy)
_TRANS_KERNEL = select(_trans_numba, _trans_numpy)
