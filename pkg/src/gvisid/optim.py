"""Maximizers for the variational objective.

``maximize_batch`` is a trust-region Newton method whose quadratic
subproblem is solved by Steihaug conjugate gradients using only
Hessian-vector products.  ``maximize_adam`` is Adam over mini-batches with
a seeded shuffle per epoch and exponential step-size decay.  Both maximize
by internally minimizing the negated objective; traces and results are
reported in maximization units.  Non-finite trial values reject the step
(shrinking the radius or skipping the batch) instead of aborting.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import OptimizerFailure


@dataclass
class BatchOptimizerConfig:
    grad_tol: float = 1e-6          # infinity norm of the gradient
    max_iter: int = 500
    trust_radius: float = 1.0       # initial radius
    max_trust_radius: float = 1e4
    cg_tol: float = 0.5             # forcing constant, tol = min(cg_tol, sqrt(g)) * g
    cg_max_iter: int = 250
    min_trust_radius: float = 1e-13

    def __post_init__(self):
        if min(self.grad_tol, self.max_iter, self.trust_radius,
               self.max_trust_radius, self.cg_tol, self.cg_max_iter) <= 0:
            raise ValueError("batch optimizer settings must be positive")


@dataclass
class AdamConfig:
    step_size: float = 1e-2
    decay: float = 0.995            # per-epoch multiplier on the step size
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 75
    shuffle_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must be in (0, 1]")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must be in [0, 1)")
        if self.step_size <= 0 or self.epochs < 1:
            raise ValueError("step size and epochs must be positive")


@dataclass
class OptimizerTrace:
    """Per-iteration (or per-epoch) progress records."""

    records: list = field(default_factory=list)

    def append(self, **kwargs):
        self.records.append(kwargs)

    def values(self, key="f"):
        return np.array([r[key] for r in self.records if key in r])


def _steihaug_cg(grad, hvp_fn, radius, cfg):
    """Approximately minimize m(p) = g'p + p'Hp/2 inside ||p|| <= radius."""
    n = grad.size
    p = np.zeros(n)
    r = grad.copy()
    d = -r
    rr = r @ r
    gnorm = np.sqrt(rr)
    tol = min(cfg.cg_tol, np.sqrt(gnorm)) * gnorm
    hits_boundary = False
    for it in range(min(cfg.cg_max_iter, 2 * n + 1)):
        Hd = hvp_fn(d)
        dHd = d @ Hd
        if not np.isfinite(dHd) or dHd <= 1e-16 * (d @ d):
            # negative curvature (or breakdown): go to the boundary
            p = _to_boundary(p, d, radius)
            hits_boundary = True
            break
        alpha = rr / dHd
        p_next = p + alpha * d
        if np.linalg.norm(p_next) >= radius:
            p = _to_boundary(p, d, radius)
            hits_boundary = True
            break
        p = p_next
        r = r + alpha * Hd
        rr_next = r @ r
        if np.sqrt(rr_next) <= tol:
            break
        d = -r + (rr_next / rr) * d
        rr = rr_next
    model_decrease = -(grad @ p + 0.5 * (p @ hvp_fn(p)))
    return p, hits_boundary, it + 1, model_decrease


def _to_boundary(p, d, radius):
    """Positive tau with ||p + tau d|| = radius."""
    dd = d @ d
    pd = p @ d
    pp = p @ p
    disc = max(pd * pd - dd * (pp - radius * radius), 0.0)
    tau = (-pd + np.sqrt(disc)) / dd
    return p + tau * d


def maximize_batch(value_fn, grad_fn, hvp_fn, x0,
                   config: BatchOptimizerConfig | None = None,
                   callback=None):
    """Trust-region Newton-CG ascent.

    Returns ``(x, trace, info)`` where info carries the success flag and
    the final gradient norm.  Accepted iterates have nondecreasing
    objective values; a non-finite objective at x0 raises immediately.
    """
    cfg = config or BatchOptimizerConfig()
    x = np.asarray(x0, dtype=float).copy()
    f = value_fn(x)
    if not np.isfinite(f):
        raise OptimizerFailure(f"objective is not finite at the start point: {f}")
    g = grad_fn(x)
    radius = cfg.trust_radius
    trace = OptimizerTrace()
    info = {"success": False, "iterations": 0, "message": "max_iter reached"}

    def neg_hvp(xc):
        return lambda v: -hvp_fn(xc, v)

    it = 0
    state_dirty = True
    for it in range(cfg.max_iter):
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        trace.append(iter=it, f=float(f), gnorm=gnorm, radius=float(radius))
        state_dirty = False
        if callback is not None:
            callback(it, x, f, gnorm, radius)
        if gnorm <= cfg.grad_tol:
            info.update(success=True, message="gradient tolerance reached")
            break
        p, on_boundary, cg_iters, pred = _steihaug_cg(-g, neg_hvp(x), radius, cfg)
        trace.records[-1]["cg_iters"] = cg_iters
        if pred <= 0.0 or not np.all(np.isfinite(p)):
            radius *= 0.25
            if radius < cfg.min_trust_radius:
                info.update(success=True, message="trust radius collapsed")
                break
            continue
        f_trial = value_fn(x + p)
        actual = f_trial - f                     # maximization: want increase
        rho = actual / pred if pred > 0 else -np.inf
        if not np.isfinite(f_trial):
            rho = -np.inf
        if rho < 0.25:
            radius *= 0.25
        elif rho > 0.75 and on_boundary:
            radius = min(2.0 * radius, cfg.max_trust_radius)
        if rho > 0.0 and actual > 0.0:
            x = x + p
            f = f_trial
            g = grad_fn(x)
            state_dirty = True
        if radius < cfg.min_trust_radius:
            info.update(success=True, message="trust radius collapsed")
            break
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    if state_dirty:
        trace.append(iter=it + 1, f=float(f), gnorm=gnorm, radius=float(radius))
    info["iterations"] = it + 1
    info["grad_norm"] = gnorm
    if gnorm <= cfg.grad_tol:
        info["success"] = True
    return x, trace, info


def maximize_adam(batch_grad_fn, n_batches, x0,
                  config: AdamConfig | None = None,
                  batch_ids=None, callback=None):
    """Adam ascent over mini-batches.

    ``batch_grad_fn(x, batch_id)`` returns (value, gradient) for one batch.
    Every epoch visits all batches in a fresh seeded random permutation of
    the sorted batch ids, so the iterate sequence does not depend on the
    storage order of the batches.  Steps with non-finite gradients are
    skipped and counted.  The trace records the mean batch objective per
    epoch.
    """
    cfg = config or AdamConfig()
    x = np.asarray(x0, dtype=float).copy()
    ids = sorted(range(n_batches) if batch_ids is None else list(batch_ids))
    if not ids:
        raise OptimizerFailure("Adam needs at least one batch")
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    t = 0
    skipped = 0
    rng = np.random.default_rng(cfg.shuffle_seed)
    trace = OptimizerTrace()
    for epoch in range(cfg.epochs):
        step = cfg.step_size * cfg.decay ** epoch
        order = rng.permutation(len(ids))
        fsum = 0.0
        seen = 0
        for j in order:
            fj, gj = batch_grad_fn(x, ids[j])
            if not np.all(np.isfinite(gj)):
                skipped += 1
                continue
            if np.isfinite(fj):
                fsum += fj
                seen += 1
            t += 1
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * gj
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * gj * gj
            mhat = m / (1.0 - cfg.beta1 ** t)
            vhat = v / (1.0 - cfg.beta2 ** t)
            x = x + step * mhat / (np.sqrt(vhat) + cfg.eps)
        mean_f = fsum / seen if seen else np.nan
        trace.append(epoch=epoch, f=float(mean_f), step=float(step),
                     skipped=skipped)
        if callback is not None:
            callback(epoch, x, mean_f, step)
    info = {"success": True, "epochs": cfg.epochs, "skipped_steps": skipped}
    return x, trace, info
