"""Impulse responses and estimation-quality metrics."""

import warnings

import numpy as np


def impulse_response(model, horizon: int) -> np.ndarray:
    """Response h[k, i, j] of output i to a unit impulse in input j.

    h[0] = D and h[k] = C A^(k-1) B for k >= 1.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    h = np.zeros((horizon + 1, model.ny, model.nu))
    h[0] = model.D
    Akb = model.B.copy()
    for k in range(1, horizon + 1):
        h[k] = model.C @ Akb
        Akb = model.A @ Akb
    return h


def ier(true_model, est_model, horizon: int = 100) -> float:
    """Channel-averaged relative l2 impulse-response error.

    Channels whose true response is identically zero are excluded with a
    warning (they would divide by zero; dense random systems never hit
    this).
    """
    if (true_model.ny, true_model.nu) != (est_model.ny, est_model.nu):
        raise ValueError("models must share input/output dimensions")
    h_true = impulse_response(true_model, horizon)
    h_est = impulse_response(est_model, horizon)
    num = np.sqrt(np.sum((h_true - h_est) ** 2, axis=0))
    den = np.sqrt(np.sum(h_true ** 2, axis=0))
    keep = den > 0.0
    if not np.all(keep):
        warnings.warn(f"excluding {np.count_nonzero(~keep)} zero-response "
                      "channel(s) from the impulse error ratio")
    if not np.any(keep):
        raise ValueError("every channel has an identically zero true response")
    return float(np.mean(num[keep] / den[keep]))


def parameter_errors(theta_true, theta_est, names=None) -> dict:
    """Absolute per-parameter errors keyed by name (or index)."""
    theta_true = np.asarray(theta_true, dtype=float)
    theta_est = np.asarray(theta_est, dtype=float)
    if theta_true.shape != theta_est.shape:
        raise ValueError("parameter vectors must have equal length")
    err = np.abs(theta_est - theta_true)
    keys = names if names is not None else [f"theta{i}" for i in range(err.size)]
    return {k: float(e) for k, e in zip(keys, err)}


def quantile_summary(values) -> dict:
    """Median and quartiles with inclusive linear interpolation."""
    values = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(values, [25.0, 50.0, 75.0], method="linear")
    return {"q1": float(q1), "median": float(med), "q3": float(q3),
            "count": int(values.size)}
