"""Command line entry points.

Two subcommands:

* ``nfmc run --config cfg.json [--set key=value]... [--output-dir d] [--seed s]``
  runs a configured experiment and writes the artifact files;
* ``nfmc evidence --flow flow.json --config cfg.json --samples n``
  re-estimates the evidence from a previously trained flow.

Exit codes: 0 success, 2 configuration error (the message names the
offending field), 3 runtime abort on a non-finite loss (a diagnostics.json
snapshot is left in the output directory).
"""

from __future__ import annotations

import argparse
import sys

from .experiments import (
    ConfigError,
    apply_overrides,
    estimate_evidence,
    load_config_file,
    run_experiment,
    write_diagnostics,
)
from .trainer import NonFiniteLossError

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nfmc",
        description="Flow-assisted MCMC: run experiments and estimate evidence.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a configured experiment")
    run_p.add_argument("--config", required=True, help="JSON config file")
    run_p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config entry, e.g. --set train.k_max=100",
    )
    run_p.add_argument("--output-dir", default=None, help="override output_dir")
    run_p.add_argument("--seed", type=int, default=None, help="override master_seed")

    ev_p = sub.add_parser("evidence", help="re-estimate evidence from a saved flow")
    ev_p.add_argument("--flow", required=True, help="serialized flow (flow.json)")
    ev_p.add_argument("--config", required=True, help="JSON config of the experiment")
    ev_p.add_argument("--samples", required=True, type=int, help="number of flow samples")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = None
    try:
        config = load_config_file(args.config)
        if args.command == "run":
            config = apply_overrides(config, args.overrides)
            if args.output_dir is not None:
                config["output_dir"] = args.output_dir
            if args.seed is not None:
                config["master_seed"] = args.seed
            run_experiment(config)
        else:
            estimate_evidence(config, args.flow, args.samples)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NonFiniteLossError as exc:
        path = write_diagnostics(config["output_dir"], exc.diagnostics)
        print(f"runtime abort: {exc} (diagnostics in {path})", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
