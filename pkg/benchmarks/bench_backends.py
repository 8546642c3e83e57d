"""Benchmark the numba kernels against the pure-numpy fallback.

Runs this script once per backend in a subprocess (the backend is chosen
at import time from GVISID_BACKEND) and reports objective+gradient timing
for a medium conv-smoother problem and one prediction-error sweep.

    python benchmarks/bench_backends.py            # both backends
    python benchmarks/bench_backends.py --single   # the active backend only
"""

import argparse
import os
import subprocess
import sys
import time


def run_single():
    import numpy as np

    from gvisid._backend import BACKEND
    from gvisid.elbo import ElboProblem
    from gvisid.models import LinearGaussianModel
    from gvisid.pem import LinearPemProblem
    from gvisid.posteriors import ConvolutionSmootherPosterior
    from gvisid.simulate import (
        RandomSystemSpec, random_binary_input, random_stable_system,
        simulate_linear,
    )

    nx, nu, ny = 4, 2, 2
    n = 20_000
    model_true = random_stable_system(RandomSystemSpec(nx, nu, ny, seed=0))
    u = random_binary_input(nu, n, seed=1)
    _, y = simulate_linear(model_true, u, seed=2)
    batches = [(y[j * 10_000:(j + 1) * 10_000],
                u[j * 10_000:(j + 1) * 10_000], None) for j in range(2)]
    model0 = LinearGaussianModel.from_theta(
        np.zeros(LinearGaussianModel.theta_dim(nx, ny, nu)), nx, ny, nu)
    post = ConvolutionSmootherPosterior.zeros(nx, ny + nu, 50)
    prob = ElboProblem(model0, batches, post)
    x0 = prob.initial_vector()
    prob.batch_value_and_grad(x0, 0)          # warm up / compile
    reps = 5
    t0 = time.perf_counter()
    for r in range(reps):
        prob.batch_value_and_grad(x0, r % 2)
    elbo_ms = (time.perf_counter() - t0) / reps * 1e3

    pem = LinearPemProblem(nx, ny, nu, batches)
    xp = pem.null_init(seed=0)
    pem.batch_value_and_grad(xp, 0)
    t0 = time.perf_counter()
    for r in range(reps):
        pem.batch_value_and_grad(xp, r % 2)
    pem_ms = (time.perf_counter() - t0) / reps * 1e3

    print(f"{BACKEND:>6}: elbo value+grad {elbo_ms:8.1f} ms/batch   "
          f"pem value+grad {pem_ms:7.2f} ms/batch")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--single", action="store_true",
                    help="time only the backend selected by GVISID_BACKEND")
    args = ap.parse_args()
    if args.single:
        run_single()
        return
    here = os.path.abspath(__file__)
    for backend in ("numba", "numpy"):
        env = dict(os.environ, GVISID_BACKEND=backend)
        subprocess.run([sys.executable, here, "--single"], env=env, check=True)


if __name__ == "__main__":
    main()
