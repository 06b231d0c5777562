"""Command-line front end: ``dunkl-hardy run | list-experiments | validate-config``.

Exit status: 0 when every certificate passes, 1 when one fails, 2 for an
invalid configuration.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time

from .experiments import CONFIG_HELP, EXPERIMENTS, ConfigError, load_config, run_experiment

log = logging.getLogger("dunkl_hardy")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dunkl-hardy", formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Numerical checks of Hardy-space theory for the Dunkl harmonic oscillator.",
        epilog=CONFIG_HELP + "\nExit status: 0 all certificates pass, 1 a certificate failed, "
                             "2 invalid configuration.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment named in the config",
                         formatter_class=argparse.RawDescriptionHelpFormatter, epilog=CONFIG_HELP)
    run.add_argument("--config", required=True, metavar="PATH", help="INI configuration file")
    run.add_argument("--out", default="out", metavar="DIR",
                     help="output directory for report.json and tables.csv (default: out)")
    run.add_argument("--seed", type=int, metavar="N", help="override experiment.seed")
    run.add_argument("--threads", type=int, metavar="N", help="override experiment.threads")
    run.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub.add_parser("list-experiments", help="print the experiment ids")
    val = sub.add_parser("validate-config", help="check a configuration file without running it",
                         formatter_class=argparse.RawDescriptionHelpFormatter, epilog=CONFIG_HELP)
    val.add_argument("--config", required=True, metavar="PATH", help="INI configuration file")
    val.add_argument("--seed", type=int, metavar="N", help="override experiment.seed")
    val.add_argument("--threads", type=int, metavar="N", help="override experiment.threads")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-experiments":
        width = max(map(len, EXPERIMENTS))
        for key, text in EXPERIMENTS.items():
            print(f"{key:<{width}}  {text}")
        return EXIT_OK
    try:
        cfg = load_config(args.config, seed=args.seed, threads=args.threads)
    except ConfigError as exc:
        print(f"dunkl-hardy: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate-config":
        print(f"config ok: experiment={cfg.experiment} root_system={cfg.family} "
              f"k={','.join(map(str, cfg.multiplicity))} seed={cfg.seed}")
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    start = time.perf_counter()
    report = run_experiment(cfg, args.out)
    log.info("%s finished in %.1f s", cfg.experiment, time.perf_counter() - start)
    for cert in report.certificates:
        print(f"{'PASS' if cert['passed'] else 'FAIL'}  {cert['name']}")
    for cert in report.failures:
        for item in cert.get("failures") or []:
            print(f"  failure in {cert['name']}: {item}", file=sys.stderr)
    print(f"wrote {args.out}/report.json and {args.out}/tables.csv")
    return EXIT_OK if report.passed else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
