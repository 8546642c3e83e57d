"""Command-line front end.

Subcommands: ``simulate``, ``estimate``, ``pem``, ``evaluate``,
``compare``.  Exit codes: 0 success, 2 configuration error, 3 optimizer
failure, 4 I/O error.  ``--deterministic`` guarantees byte-identical
output files on reruns with equal seeds (wall-clock timing is then
reported on stderr only); ``GVISID_THREADS`` overrides ``--threads``.
"""

import argparse
import sys
import time

from .dataio import load_config
from .errors import ConfigError, OptimizerFailure

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_OPTIMIZER = 3
EXIT_IO = 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gvisid",
        description="Variational system identification experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=False):
        sp.add_argument("--config", required=True, help="experiment JSON config")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker cap (GVISID_THREADS overrides)")
        sp.add_argument("--deterministic", action="store_true",
                        help="byte-identical outputs under equal seeds")
        if data:
            sp.add_argument("--data", required=True,
                            help="dataset directory (one or many realizations)")

    common(sub.add_parser("simulate", help="generate datasets"))
    common(sub.add_parser("estimate", help="variational estimation"), data=True)
    common(sub.add_parser("pem", help="prediction-error baseline"), data=True)

    ev = sub.add_parser("evaluate", help="metrics against the truth files")
    ev.add_argument("--results", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--force", action="store_true",
                    help="allow mixing results from different config hashes")

    cp = sub.add_parser("compare", help="merge summary tables")
    cp.add_argument("--inputs", nargs="+", required=True)
    cp.add_argument("--labels", nargs="*", default=None)
    cp.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OptimizerFailure as exc:
        print(f"optimizer failure: {exc}", file=sys.stderr)
        return EXIT_OPTIMIZER
    except (OSError, FileNotFoundError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def _dispatch(args) -> int:
    from . import experiments

    t0 = time.perf_counter()
    if args.command == "simulate":
        cfg = load_config(args.config)
        dirs = experiments.run_simulate(cfg, args.out, seed=args.seed)
        print(f"wrote {len(dirs)} realization(s) under {args.out}",
              file=sys.stderr)
    elif args.command in ("estimate", "pem"):
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = {**cfg, "seed": int(args.seed)}
        statuses = experiments.run_many(
            "gvi" if args.command == "estimate" else "pem",
            cfg, args.data, args.out, threads=args.threads,
            deterministic=args.deterministic)
        failed = sum(1 for s in statuses if s != "ok")
        print(f"{len(statuses) - failed}/{len(statuses)} realizations ok "
              f"({time.perf_counter() - t0:.1f}s)", file=sys.stderr)
        if failed:
            return EXIT_OPTIMIZER
    elif args.command == "evaluate":
        experiments.run_evaluate(args.results, args.truth, args.out,
                                 force=args.force)
        print(f"wrote metrics under {args.out}", file=sys.stderr)
    elif args.command == "compare":
        experiments.run_compare(args.inputs, args.out, labels=args.labels)
        print(f"wrote {args.out}", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
