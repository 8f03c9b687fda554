"""``zonoclt`` command line: run an experiment, write its report, exit 0/1/2."""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .boltzmann import ConditioningError
from .config import EXPERIMENTS, ConfigError, load, resolve
from .cones import ConeError
from .dp_oracle import CostBudgetError
from .primitives import EnumerationBudgetError
from .experiments import run, write_result

log = logging.getLogger("zonoclt")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

_HELP = {
    "sample": "draw multiplicity functions and export endpoints, tangent points, chains",
    "clt": "whitened normality test of the endpoint",
    "llt": "exact local limit discrepancy over an n grid (d = 2)",
    "marginals": "tangent-point covariances against their Gaussian limits",
    "scaling": "log-log slope fits of the finite-n moment quantities",
    "moments": "exact moments, Lyapunov ratio and limits for one model",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zonoclt", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=_HELP[name])
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--seed", type=lambda s: int(s, 0), help="u64 seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for sampling")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load(args.config, args.command) if args.config else resolve({}, args.command)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("seed must be a u64")
            cfg["model"]["seed"] = args.seed
        if args.out:
            cfg["output"]["dir"] = args.out
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        result, elapsed = run(cfg, cfg["model"]["seed"], args.threads)
    except (ConfigError, ConeError, EnumerationBudgetError, CostBudgetError) as exc:
        print(f"zonoclt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConditioningError as exc:
        print(f"zonoclt: {exc}", file=sys.stderr)
        return EXIT_FAIL
    path = write_result(result, cfg, cfg["output"]["dir"], elapsed)
    rep = result.report
    for name, chk in rep.checks.items():
        print(f"{'PASS' if chk['passed'] else 'FAIL'}  {name}  {chk['value']}")
    status = {True: "PASS", False: "FAIL", None: "INCONCLUSIVE"}[rep.passed]
    print(f"{rep.experiment}: {status}  ({path}, {elapsed:.1f}s)")
    return EXIT_FAIL if rep.passed is False else EXIT_PASS


if __name__ == "__main__":
    sys.exit(main())
