"""Command-line entry point: ``cavsol [experiment] [--config FILE] [--set k=v ...]``."""

import argparse
import json
import logging
import sys

from cavsol.config import ConfigError, build_spec, validate_config
from cavsol.experiments import REGISTRY, run_experiment
from cavsol.kernels import BACKEND, NumericalAbort

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("cavsol")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="cavsol",
        description="Mean-field simulations of cavity-mediated momentum-state solitons.")
    ap.add_argument("name", nargs="?", choices=sorted(REGISTRY),
                    help="experiment to run (alternative to --experiment)")
    ap.add_argument("--config", help="TOML or JSON configuration file")
    ap.add_argument("--experiment", choices=sorted(REGISTRY))
    ap.add_argument("--out", help="output directory (bundle goes to OUT/<experiment>)")
    ap.add_argument("--seed", type=int, help="seed for Monte Carlo ensembles")
    ap.add_argument("--set", dest="overrides", action="append", default=[],
                    metavar="KEY=VALUE", help="override a parameter or option (repeatable)")
    ap.add_argument("--chiN", type=float, help="shortcut for --set chiN=VALUE")
    ap.add_argument("--workers", type=int, help="process pool size for sweeps")
    ap.add_argument("--validate", action="store_true",
                    help="validate the configuration, print the resolved spec and exit")
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--list", action="store_true", help="list experiments and exit")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.list:
        for name, exp in sorted(REGISTRY.items()):
            print(f"{name:12s} {exp.description}")
        return EXIT_OK
    if args.name and args.experiment and args.name != args.experiment:
        print(f"error: conflicting experiment names {args.name!r} and {args.experiment!r}",
              file=sys.stderr)
        return EXIT_CONFIG
    experiment = args.experiment or args.name
    overrides = list(args.overrides)
    if args.chiN is not None:
        overrides.append(("chiN", args.chiN))
    try:
        if args.config:
            spec = validate_config(args.config, overrides, experiment, args.out, args.seed)
        else:
            spec = build_spec({}, overrides=overrides, experiment=experiment,
                              output_dir=args.out, seed=args.seed)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError(["--workers must be >= 1"])
            spec.workers = args.workers
    except ConfigError as exc:
        for msg in exc.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.validate:
        print(json.dumps({"experiment": spec.name, "params": spec.params.to_dict(),
                          "options": spec.resolved_options(), "output_dir": spec.output_dir,
                          "workers": spec.workers}, indent=2, sort_keys=True))
        return EXIT_OK

    log.info("running %s with the %s kernel", spec.name, BACKEND)
    try:
        bundle = run_experiment(spec)
    except NumericalAbort as exc:
        print(f"numerical abort in {spec.name}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (PermissionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {len(bundle.files)} file(s) to {bundle.directory}")
    print(f"manifest: {bundle.manifest_path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
