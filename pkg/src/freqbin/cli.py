"""
Command-line front end.

    freqbin <kind> [--config PATH] [--out DIR] [--seed N] [--fixture PATH]

``kind`` is one of ``jsi dip fringe tomo cglmp simulate``. Without ``--config``
the bundled default scenario for that kind is used. Exit status is 0 on
success, 2 for invalid configuration or input files and 3 when a numerical
routine fails to converge.
"""
from __future__ import annotations

import argparse
import json
import sys

from .errors import ConvergenceError, FreqBinError, ValidationError
from .runner import KINDS, ScenarioConfig, load_scenario, run_scenario

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NO_CONVERGENCE = 3

DEFAULT_SCENARIOS = {
    "jsi": "jsi_pairs_3_40",
    "dip": "dip_pairs_6_7",
    "fringe": "fringe_pairs_6_7",
    "tomo": "tomography_qubit",
    "cglmp": "cglmp_counts",
    "simulate": "chain_custom",
}


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="freqbin", description="Run frequency-bin comb scenarios.")
    sub = parser.add_subparsers(dest="kind", required=True, metavar="kind")
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} scenario")
        p.add_argument("--config", help="scenario JSON file (default: bundled scenario)")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=_seed, help="random seed (overrides the config)")
        p.add_argument("--fixture", help="input table (tomo and cglmp)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            cfg = ScenarioConfig.load(args.config)
        else:
            cfg = load_scenario(DEFAULT_SCENARIOS[args.kind])
        if cfg.kind != args.kind:
            raise ValidationError([f"kind: config is {cfg.kind!r} but subcommand is {args.kind!r}"])
        cfg = cfg.with_overrides(seed=args.seed, fixture=args.fixture, out_dir=args.out)
        bundle = run_scenario(cfg)
    except ConvergenceError as exc:
        print(f"freqbin: no convergence: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except FileNotFoundError as exc:
        print(f"freqbin: error: no such file: {exc.filename or exc}", file=sys.stderr)
        return EXIT_INVALID
    except FreqBinError as exc:
        print(f"freqbin: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(json.dumps({k: float(v) for k, v in sorted(bundle.scalars.items())}, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
