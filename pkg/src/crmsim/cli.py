"""Command line entry point: ``crmsim simulate scenario.yaml``."""

from __future__ import annotations

import argparse
import sys

import yaml

from .config import ParseError, ValidationError, from_dict, load_config
from .harness import format_summary, progress_printer, run_matrix, write_csv, write_traces


def _parse_value(text: str):
    return yaml.safe_load(text)


def parse_sweep(arg: str) -> tuple[str, list]:
    """``key=a,b,c`` into the key and its parsed values."""
    if "=" not in arg:
        raise argparse.ArgumentTypeError(f"sweep must look like key=a,b,c, got {arg!r}")
    key, values = arg.split("=", 1)
    items = [v for v in values.split(",") if v.strip()]
    if not key or not items:
        raise argparse.ArgumentTypeError(f"sweep must look like key=a,b,c, got {arg!r}")
    return key.strip(), [_parse_value(v) for v in items]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crmsim", description="Channel-reservation MAC simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    sim = sub.add_parser("simulate", help="run a scenario file over variants, sweep points and seeds")
    sim.add_argument("config", help="scenario YAML file")
    sim.add_argument("--seeds", type=int, help="use seeds 0..N-1 instead of the file's list")
    sim.add_argument("--variant", help="comma-separated variants to run")
    sim.add_argument("--sweep", action="append", type=parse_sweep, default=[],
                     help="key=a,b,c; may be repeated")
    sim.add_argument("--out", help="output directory (default: the file's output_dir, else ./results)")
    sim.add_argument("--trace", action="store_true", help="write one NDJSON event trace per run")
    sim.add_argument("--quiet", action="store_true", help="no per-run progress lines")
    return parser


def simulate(args) -> int:
    try:
        cfg = load_config(args.config)
        data = cfg.to_dict()
        if args.seeds is not None:
            if args.seeds < 1:
                raise ValidationError("--seeds", "must be at least 1")
            data["seeds"] = list(range(args.seeds))
        if args.variant:
            data["variants"] = [v.strip() for v in args.variant.split(",") if v.strip()]
        if args.sweep:
            data["sweep"] = {**data.get("sweep", {}), **dict(args.sweep)}
        cfg = from_dict(data)
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc.strerror}", file=sys.stderr)
        return 2
    except ParseError as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"error: invalid field {exc.field_path}: {exc.message}", file=sys.stderr)
        return 2

    matrix = run_matrix(cfg, keep_trace=args.trace, progress=None if args.quiet else progress_printer())
    out_dir = args.out or cfg.output_dir or "results"
    try:
        summary_path, raw_path = write_csv(matrix, out_dir)
        if args.trace:
            write_traces(matrix, out_dir)
    except OSError as exc:
        print(f"error: cannot write to {exc.filename or out_dir}: {exc.strerror}", file=sys.stderr)
        return 2
    print(format_summary(matrix))
    print(f"wrote {summary_path} and {raw_path}")
    if matrix.errors:
        print(f"{len(matrix.errors)} run(s) failed", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "simulate":
        return simulate(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
