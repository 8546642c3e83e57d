"""Configuration-driven experiment drivers behind the command line.

A simulation config produces one directory per realization (dataset CSV
files plus ``truth.json``); estimation consumes those directories and
writes ``result.json`` and a line-delimited ``trace.jsonl`` per
realization; evaluation joins results against the truth files into
plot-ready CSV tables.  Realizations fan out over a process pool capped
by ``--threads`` / ``GVISID_THREADS``.
"""

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ._backend import thread_count, use_numba
from .dataio import (
    Dataset, EstimationResult, config_hash, write_csv_table,
    _atomic_write_text,
)
from .elbo import ElboProblem
from .errors import ConfigError, OptimizerFailure
from .metrics import ier, parameter_errors, quantile_summary
from .models import DuffingModel, LinearGaussianModel
from .models.duffing import THETA_NAMES
from .optim import AdamConfig, BatchOptimizerConfig, maximize_adam, maximize_batch
from .pem import DuffingPemProblem, InnovationsPredictor, LinearPemProblem
from .posteriors import (
    ConvolutionSmootherPosterior, SteadyStatePosterior, TimeVaryingPosterior,
    posterior_from_dict, posterior_to_dict,
)
from .simulate import (
    RandomSystemSpec, SdeSimConfig, random_binary_input, random_stable_system,
    simulate_duffing, simulate_linear,
)


def derive_seed(base: int, *idx) -> int:
    """Deterministic per-realization seed from the experiment seed."""
    ss = np.random.SeedSequence((int(base),) + tuple(int(i) for i in idx))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def realization_dirs(root) -> list:
    subs = sorted(d for d in os.listdir(root)
                  if d.startswith("real") and
                  os.path.isdir(os.path.join(root, d)))
    if subs:
        return [os.path.join(root, d) for d in subs]
    return [root]


def _load_record_batches(data_dir) -> list:
    files = sorted(f for f in os.listdir(data_dir)
                   if f.endswith(".csv") and
                   (f.startswith("batch") or f.startswith("data")))
    if not files:
        raise ConfigError(f"no dataset CSV files in {data_dir}")
    out = []
    for f in files:
        ds = Dataset.from_csv(os.path.join(data_dir, f))
        out.extend(ds.batches())
    return out


def _load_truth(data_dir) -> dict:
    path = os.path.join(data_dir, "truth.json")
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing truth file {path}")
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def run_simulate(cfg: dict, out_dir, seed=None) -> list:
    """Write one dataset directory per realization; returns the directories."""
    base_seed = int(cfg["seed"] if seed is None else seed)
    n_real = int(cfg.get("realizations", 1))
    os.makedirs(out_dir, exist_ok=True)
    chash = config_hash(cfg)
    dirs = []
    for r in range(n_real):
        rdir = os.path.join(out_dir, f"real{r:03d}")
        os.makedirs(rdir, exist_ok=True)
        if cfg["kind"] == "duffing":
            _simulate_duffing_realization(cfg, rdir, base_seed, r, chash)
        elif cfg["kind"] == "linear":
            _simulate_linear_realization(cfg, rdir, base_seed, r, chash)
        else:
            raise ConfigError(f"kind {cfg['kind']!r} has no simulator")
        dirs.append(rdir)
    return dirs


def _simulate_duffing_realization(cfg, rdir, base_seed, r, chash):
    sim = cfg.get("simulate", {})
    params = dict(alpha=1.0, beta=-1.0, delta=0.2, gamma=0.3,
                  lsw=-2.3, lsv=-3.0)
    params.update(sim.get("params", {}))
    sample_time = float(sim.get("sample_time", 0.1))
    model = DuffingModel(**params, dt=sample_time)
    sde = SdeSimConfig(dt_sim=float(sim.get("dt_sim", 0.025)),
                       t_final=float(sim.get("t_final", 50.0)),
                       sample_time=sample_time,
                       seed=derive_seed(base_seed, r, 0))
    _, _, y = simulate_duffing(model, sde)
    t = np.arange(y.shape[0]) * sample_time
    Dataset(t, None, y).to_csv(os.path.join(rdir, "data000.csv"))
    truth = {"kind": "duffing", "config_hash": chash, "realization": r,
             "seed": sde.seed, "theta": model.theta.tolist(),
             "sample_time": sample_time}
    _atomic_write_text(os.path.join(rdir, "truth.json"),
                       json.dumps(truth, sort_keys=True, indent=1) + "\n")


def _simulate_linear_realization(cfg, rdir, base_seed, r, chash):
    sim = cfg.get("simulate", {})
    spec = RandomSystemSpec(
        nx=int(sim.get("nx", 4)), nu=int(sim.get("nu", 2)),
        ny=int(sim.get("ny", 2)), rho_max=float(sim.get("rho_max", 0.95)),
        noise_std_w=float(sim.get("noise_std_w", 0.1)),
        noise_std_v=float(sim.get("noise_std_v", 0.1)),
        seed=derive_seed(base_seed, r, 0))
    model = random_stable_system(spec)
    n = int(sim.get("n_samples", 10_000))
    u = random_binary_input(spec.nu, n, seed=derive_seed(base_seed, r, 1),
                            hold=int(sim.get("input_hold", 1)))
    _, y = simulate_linear(model, u, seed=derive_seed(base_seed, r, 2))
    t = np.arange(n, dtype=float)
    full = Dataset(t, u, y)
    n_batches = int(sim.get("batches", 1))
    for j, ds in enumerate(full.split(n_batches)):
        ds.to_csv(os.path.join(rdir, f"batch{j:03d}.csv"))
    truth = {"kind": "linear", "config_hash": chash, "realization": r,
             "seed": spec.seed, "theta": model.theta.tolist(),
             "nx": spec.nx, "nu": spec.nu, "ny": spec.ny,
             "model": {k: getattr(model, k).tolist()
                       for k in ("A", "B", "C", "D", "Sw", "Sv")}}
    _atomic_write_text(os.path.join(rdir, "truth.json"),
                       json.dumps(truth, sort_keys=True, indent=1) + "\n")


# ---------------------------------------------------------------------------
# estimate (variational)
# ---------------------------------------------------------------------------

def _optimizer_configs(opt_cfg: dict):
    method = opt_cfg.get("method", "trust-region")
    if method == "trust-region":
        kw = {k: opt_cfg[k] for k in
              ("grad_tol", "max_iter", "trust_radius", "cg_max_iter")
              if k in opt_cfg}
        return method, BatchOptimizerConfig(**kw)
    kw = {k: opt_cfg[k] for k in
          ("step_size", "decay", "beta1", "beta2", "epochs")
          if k in opt_cfg}
    return method, AdamConfig(**kw, shuffle_seed=opt_cfg.get("shuffle_seed", 0))


def _build_gvi_problem(cfg, batches, seed):
    est = cfg.get("estimate", {})
    param = est.get("parameterization", "steady-state")
    quad_order = int(est.get("quad_order", 2))
    chol_mode = est.get("chol_mode", "expm")
    fit_theta = bool(est.get("fit_theta", True))
    ny = batches[0].ny
    nu = batches[0].nu
    if cfg["kind"] == "duffing":
        dt = float(np.median(np.diff(batches[0].t)))
        model = DuffingModel.from_theta(np.zeros(6), dt=dt)
        nx = 2
    else:
        nx = int(cfg.get("simulate", {}).get("nx", 4))
        model = LinearGaussianModel.from_theta(
            np.zeros(LinearGaussianModel.theta_dim(nx, ny, nu)), nx, ny, nu)
    if param == "conv-smoother":
        window = int(est.get("window", 50))
        post = ConvolutionSmootherPosterior.zeros(nx, ny + nu, window,
                                                  chol_mode=chol_mode)
        kstd = float(est.get("kernel_init_std", 1e-3))
        if kstd > 0:
            rng = np.random.default_rng(derive_seed(seed, 17))
            post.kernel[:, :, window] = kstd * rng.standard_normal((nx, ny + nu))
        data = batches
    else:
        if len(batches) > 1:
            raise ConfigError(f"{param} parameterization needs a single record; "
                              "got multiple batches")
        n_steps = batches[0].num_steps
        maker = TimeVaryingPosterior if param == "time-varying" \
            else SteadyStatePosterior
        post = maker.zeros(n_steps, nx, chol_mode=chol_mode)
        data = batches[0]
    prob = ElboProblem(model, data, post, quad_order=quad_order,
                       fit_theta=fit_theta)
    return prob, model, post


def run_estimate_realization(cfg, data_dir, out_dir, seed,
                             deterministic=False) -> EstimationResult:
    os.makedirs(out_dir, exist_ok=True)
    batches = _load_record_batches(data_dir)
    prob, model, post0 = _build_gvi_problem(cfg, batches, seed)
    method, opt_cfg = _optimizer_configs(
        cfg.get("estimate", {}).get("optimizer", {"method": "trust-region"}))
    trace_path = os.path.join(out_dir, "trace.jsonl")
    t0 = time.perf_counter()
    status = "ok"
    message = ""
    with open(trace_path, "w") as trace_fh:
        def tr_cb(it, x, f, gnorm, radius):
            trace_fh.write(json.dumps(
                {"iter": it, "f": f, "gnorm": gnorm, "radius": radius}) + "\n")

        def adam_cb(epoch, x, mean_f, step):
            trace_fh.write(json.dumps(
                {"epoch": epoch, "f": mean_f, "step": step}) + "\n")

        try:
            if method == "trust-region":
                x, trace, info = maximize_batch(
                    prob.value, prob.gradient, prob.hvp,
                    prob.initial_vector(), opt_cfg, callback=tr_cb)
            else:
                opt_cfg.shuffle_seed = derive_seed(seed, 23)
                x, trace, info = maximize_adam(
                    prob.batch_value_and_grad, prob.batch_count,
                    prob.initial_vector(), opt_cfg, callback=adam_cb)
        except OptimizerFailure as exc:
            status = "failed"
            message = str(exc)
            x, trace, info = prob.initial_vector(), None, {"success": False}
    wall = time.perf_counter() - t0
    theta, post = prob.unpack(x)
    final = prob.evaluate(x, need_grad=False)
    if not final.ok:
        status = "failed"
    result = EstimationResult(
        kind="gvi", status=status, theta=theta,
        posterior=posterior_to_dict(post),
        final_value=float(final.value),
        trace=trace.records if trace is not None else [],
        metrics={"breakdown": final.breakdown, **{k: v for k, v in info.items()
                                                  if k != "success"},
                 "success": bool(info.get("success", False)),
                 "message": message},
        provenance={"config_hash": config_hash(cfg), "seed": int(seed),
                    "data_dir": os.path.basename(os.path.normpath(data_dir)),
                    "parameterization": post.kind,
                    "dims": {"nx": model.nx, "ny": model.ny, "nu": model.nu}},
        wall_clock=None if deterministic else wall)
    result.save(os.path.join(out_dir, "result.json"))
    return result


# ---------------------------------------------------------------------------
# estimate (prediction-error baselines)
# ---------------------------------------------------------------------------

def run_pem_realization(cfg, data_dir, out_dir, seed,
                        deterministic=False) -> EstimationResult:
    os.makedirs(out_dir, exist_ok=True)
    batches = _load_record_batches(data_dir)
    pem_cfg = cfg.get("pem", {})
    method, opt_cfg = _optimizer_configs(
        pem_cfg.get("optimizer", {"method": "adam"}))
    truth = _load_truth(data_dir)
    t0 = time.perf_counter()
    if cfg["kind"] == "linear":
        nx, ny, nu = truth["nx"], truth["ny"], truth["nu"]
        prob = LinearPemProblem(nx, ny, nu,
                                [(b.y, b.u, None) for b in batches])
        if pem_cfg.get("init", "null") == "truth":
            model = LinearGaussianModel(**{k: np.asarray(v) for k, v in
                                           truth["model"].items()})
            x0 = InnovationsPredictor.from_steady_state_kalman(model).theta
        else:
            x0 = prob.null_init(seed=derive_seed(seed, 29),
                                gain_std=float(pem_cfg.get("gain_std", 1e-3)))
        kind = "pem-linear"
    else:
        if len(batches) != 1:
            raise ConfigError("the Duffing predictor expects a single record")
        ds = batches[0]
        dt = float(np.median(np.diff(ds.t)))
        prob = DuffingPemProblem(ds.y[:, 0], ds.t, dt)
        theta_true = np.asarray(truth["theta"], dtype=float)
        gain = np.asarray(pem_cfg.get("gain", [0.5, 0.5]), dtype=float)
        model = DuffingModel.from_theta(theta_true, dt=dt)
        x0 = DuffingPemProblem.init_from_model(model, gain=gain)
        kind = "pem-duffing"
    status = "ok"

    def neg_batch(x, j):
        v, g = prob.batch_value_and_grad(x, j)
        return -v, -g

    def neg_value(x):
        return -prob.value(x)

    def neg_grad(x):
        return -prob.value_and_grad(x)[1]

    def neg_hvp(x, v):
        nv = np.linalg.norm(v)
        if nv == 0 or not np.isfinite(nv):
            return np.zeros_like(v)
        h = 1e-6 * (1.0 + np.linalg.norm(x))
        vh = v / nv
        return (neg_grad(x + h * vh) - neg_grad(x - h * vh)) * (nv / (2 * h))

    try:
        if method == "adam":
            opt_cfg.shuffle_seed = derive_seed(seed, 31)
            nb = len(prob.batches) if hasattr(prob, "batches") else 1
            x, trace, info = maximize_adam(neg_batch, nb, x0, opt_cfg)
        else:
            x, trace, info = maximize_batch(neg_value, neg_grad, neg_hvp,
                                            x0, opt_cfg)
    except OptimizerFailure as exc:
        status = "failed"
        x, trace, info = x0, None, {"success": False, "message": str(exc)}
    wall = time.perf_counter() - t0
    final = prob.value(x)
    result = EstimationResult(
        kind=kind, status=status if np.isfinite(final) else "failed",
        theta=np.asarray(x), posterior=None, final_value=float(final),
        trace=trace.records if trace is not None else [],
        metrics={"success": bool(info.get("success", False))},
        provenance={"config_hash": config_hash(cfg), "seed": int(seed),
                    "data_dir": os.path.basename(os.path.normpath(data_dir)),
                    "dims": {"nx": getattr(prob, "nx", 2),
                             "ny": getattr(prob, "ny", 1),
                             "nu": getattr(prob, "nu", 0)}},
        wall_clock=None if deterministic else wall)
    result.save(os.path.join(out_dir, "result.json"))
    return result


# ---------------------------------------------------------------------------
# fan-out helpers
# ---------------------------------------------------------------------------

def _estimate_worker(args):
    fn, cfg, data_dir, out_dir, seed, deterministic = args
    if use_numba():
        import numba
        numba.set_num_threads(1)
    runner = run_estimate_realization if fn == "gvi" else run_pem_realization
    res = runner(cfg, data_dir, out_dir, seed, deterministic)
    return res.status


def run_many(fn, cfg, data_root, out_root, threads=None,
             deterministic=False) -> list:
    """Run one estimate per realization directory, possibly in parallel."""
    dirs = realization_dirs(data_root)
    os.makedirs(out_root, exist_ok=True)
    jobs = []
    for d in dirs:
        name = os.path.basename(os.path.normpath(d))
        out_dir = os.path.join(out_root, name) if len(dirs) > 1 else out_root
        seed = derive_seed(cfg["seed"], _realization_index(name))
        jobs.append((fn, cfg, d, out_dir, seed, deterministic))
    workers = min(thread_count(threads), len(jobs))
    if workers <= 1 or len(jobs) == 1:
        return [_estimate_worker(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_estimate_worker, jobs))


def _realization_index(name: str) -> int:
    digits = "".join(ch for ch in name if ch.isdigit())
    return int(digits) if digits else 0


# ---------------------------------------------------------------------------
# evaluate / compare
# ---------------------------------------------------------------------------

def run_evaluate(results_root, truth_root, out_dir, force=False,
                 horizon=100) -> dict:
    """Join results with truths into metrics.csv and summary.csv."""
    os.makedirs(out_dir, exist_ok=True)
    res_dirs = realization_dirs(results_root)
    rows = []
    hashes = set()
    metric_cols = set()
    for rd in res_dirs:
        rpath = os.path.join(rd, "result.json")
        if not os.path.exists(rpath):
            continue
        result = EstimationResult.load(rpath)
        name = os.path.basename(os.path.normpath(rd))
        tdir = os.path.join(truth_root, name)
        if not os.path.isdir(tdir):
            tdir = truth_root
        truth = _load_truth(tdir)
        hashes.add(result.provenance.get("config_hash", ""))
        row = {"realization": name, "kind": result.kind,
               "status": result.status,
               "final_value": result.final_value}
        row.update(_metrics_against_truth(result, truth, horizon))
        metric_cols.update(row.keys())
        rows.append(row)
    if not rows:
        raise FileNotFoundError(f"no result files under {results_root}")
    if len(hashes) > 1 and not force:
        raise ConfigError(
            f"refusing to mix results from different configs {sorted(hashes)}; "
            "pass force=True/--force to override")
    header = ["realization", "kind", "status", "final_value"] + sorted(
        c for c in metric_cols
        if c not in ("realization", "kind", "status", "final_value"))
    write_csv_table(os.path.join(out_dir, "metrics.csv"), header,
                    [[r.get(c, "") for c in header] for r in rows])
    numeric = [c for c in header[3:]
               if any(isinstance(r.get(c), float) for r in rows)]
    srows = []
    for c in numeric:
        vals = [r[c] for r in rows if isinstance(r.get(c), float)
                and np.isfinite(r[c])]
        if vals:
            s = quantile_summary(vals)
            srows.append([c, s["q1"], s["median"], s["q3"], s["count"]])
    write_csv_table(os.path.join(out_dir, "summary.csv"),
                    ["metric", "q1", "median", "q3", "count"], srows)
    return {"rows": rows, "out_dir": out_dir}


def _metrics_against_truth(result: EstimationResult, truth: dict,
                           horizon: int) -> dict:
    out = {}
    if truth["kind"] == "linear":
        nx, ny, nu = truth["nx"], truth["ny"], truth["nu"]
        true_model = LinearGaussianModel(**{k: np.asarray(v) for k, v in
                                            truth["model"].items()})
        if result.kind == "gvi":
            est = LinearGaussianModel.from_theta(result.theta, nx, ny, nu)
        else:
            pred = InnovationsPredictor.from_theta(result.theta, nx, ny, nu)
            est = LinearGaussianModel(pred.A, pred.B, pred.C, pred.D,
                                      np.eye(nx), np.eye(ny))
        out["ier"] = ier(true_model, est, horizon)
    else:
        theta_true = np.asarray(truth["theta"], dtype=float)
        if result.kind == "gvi":
            errs = parameter_errors(theta_true, result.theta,
                                    names=THETA_NAMES)
        else:
            errs = parameter_errors(theta_true[:4], result.theta[:4],
                                    names=THETA_NAMES[:4])
        out.update({f"abs_err_{k}": v for k, v in errs.items()})
    return out


def run_compare(inputs, out_path, labels=None):
    """Merge several summary.csv tables into one labeled CSV."""
    rows = []
    for i, path in enumerate(inputs):
        label = labels[i] if labels else os.path.basename(
            os.path.dirname(os.path.abspath(path))) or f"in{i}"
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            for line in fh:
                cells = line.strip().split(",")
                rows.append([label] + cells)
    write_csv_table(out_path, ["label", "metric", "q1", "median", "q3",
                               "count"], rows)
    return rows
