"""Command-line interface: run, sweep, diag, init-spec."""

import argparse
import json
import logging
import sys

from .config import RunConfig, example_config_dict
from .diagnostics import DiagnosticsConfig
from .errors import CheckpointFormatError, ConfigError, InitSpecError, ParameterError, VdnsError
from .harness import diag_record, run, sweep

EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="vdns",
        description=(
            "Variable-density incompressible flow on a periodic torus, "
            "with vacuum-capable transport and scale-critical diagnostics."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="advance one configuration to t_end")
    p_run.add_argument("--config", required=True, help="JSON configuration path")
    p_run.add_argument("--out", help="override the output directory")
    p_run.add_argument("--resume", help="checkpoint to continue from")
    p_run.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="dotted-path configuration override (repeatable)",
    )

    p_sweep = sub.add_parser("sweep", help="run a sweep over initial sizes")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", help="override the output directory")
    p_sweep.add_argument(
        "--eps", required=True, help="comma-separated ascending sizes"
    )
    p_sweep.add_argument(
        "--override", action="append", default=[], metavar="KEY=VALUE"
    )

    p_diag = sub.add_parser("diag", help="recompute diagnostics from a checkpoint")
    p_diag.add_argument("checkpoint")
    p_diag.add_argument(
        "--lorentz-q", default="4,6", help="comma-separated Lorentz exponents"
    )
    p_diag.add_argument(
        "--kim", default="4:6", help="comma-separated p:q criterion pairs"
    )

    p_init = sub.add_parser("init-spec", help="emit a validated example config")
    p_init.add_argument("--out", help="write to a file instead of stdout")
    return parser


def _load_config(args):
    cfg = RunConfig.from_file(args.config)
    if args.override:
        cfg = cfg.with_overrides(args.override)
    if getattr(args, "out", None):
        cfg = cfg.with_output_dir(args.out)
    return cfg


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = _load_config(args)
            result = run(cfg, resume=args.resume)
            print(json.dumps(result.summary["final"], indent=2))
            return 0

        if args.command == "sweep":
            cfg = _load_config(args)
            try:
                eps = [float(e) for e in args.eps.split(",") if e]
            except ValueError as exc:
                raise ConfigError(f"bad --eps list: {exc}") from exc
            result, path = sweep(cfg, eps)
            print(json.dumps({"slope": result.slope, "sweep": str(path)}, indent=2))
            return 0

        if args.command == "diag":
            try:
                qs = tuple(float(q) for q in args.lorentz_q.split(",") if q)
                pairs = tuple(
                    tuple(float(x) for x in pair.split(":"))
                    for pair in args.kim.split(",")
                    if pair
                )
                dcfg = DiagnosticsConfig(lorentz_q=qs, kim_pairs=pairs)
            except (ValueError, ParameterError) as exc:
                raise ConfigError(f"bad diagnostics flags: {exc}") from exc
            print(json.dumps(diag_record(args.checkpoint, dcfg), indent=2))
            return 0

        if args.command == "init-spec":
            text = json.dumps(example_config_dict(), indent=2) + "\n"
            if args.out:
                with open(args.out, "w", encoding="utf-8") as handle:
                    handle.write(text)
            else:
                sys.stdout.write(text)
            return 0
    except (ConfigError, InitSpecError, CheckpointFormatError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VdnsError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    raise AssertionError("unreachable command")


if __name__ == "__main__":
    sys.exit(main())
