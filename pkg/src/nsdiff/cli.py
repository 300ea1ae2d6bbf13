"""Command-line interface.

Commands take a JSON config file plus a few flag overrides; see the README
for config schemas. The default output root is ``./runs`` or the
``NSDIFF_OUTPUT_ROOT`` environment variable.
"""

import argparse
import json
import sys

from .experiments import RunConfig, cmd_estimate, cmd_rate_study, \
    cmd_run_mcmc, cmd_simulate, cmd_variance_compare


def _load_config(args):
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
    for key in ("seed", "workers", "iterations", "level"):
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val
    if getattr(args, "output", None):
        doc["output_dir"] = args.output
    if getattr(args, "set", None):
        for item in args.set:
            key, _, raw = item.partition("=")
            if not _:
                raise SystemExit(f"--set expects key=value, got {item!r}")
            try:
                doc[key] = json.loads(raw)
            except json.JSONDecodeError:
                doc[key] = raw
    return RunConfig.from_dict(doc)


def _add_common(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--output", help="output directory")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config field (value parsed as JSON)")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="nsdiff",
        description="Bayesian inference for non-synchronously observed "
                    "bivariate diffusions")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    _add_common(p)

    p = sub.add_parser("variance-compare",
                       help="log-likelihood variance per level, both filters")
    _add_common(p)

    p = sub.add_parser("run-mcmc", help="run one particle-MCMC chain")
    _add_common(p)
    p.add_argument("--iterations", type=int)
    p.add_argument("--level", type=int)

    p = sub.add_parser("rate-study", help="MSE-versus-cost rate study")
    _add_common(p)

    p = sub.add_parser("estimate",
                       help="multilevel estimate from existing chain files")
    _add_common(p)
    p.add_argument("--base-chain", required=True,
                   help="CSV of the minimum-level chain")
    p.add_argument("--coupled-chain", action="append", default=[],
                   metavar="LEVEL=PATH",
                   help="coupled chain CSV for one fine level (repeatable)")

    args = parser.parse_args(argv)
    cfg = _load_config(args)
    cfg.command = args.command

    if args.command == "simulate":
        out = cmd_simulate(cfg)
    elif args.command == "variance-compare":
        out = cmd_variance_compare(cfg)
    elif args.command == "run-mcmc":
        out = cmd_run_mcmc(cfg)
    elif args.command == "rate-study":
        out = cmd_rate_study(cfg)
    else:
        coupled = {}
        for item in args.coupled_chain:
            level, _, path = item.partition("=")
            coupled[int(level)] = path
        out = cmd_estimate(cfg, args.base_chain, coupled)
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
