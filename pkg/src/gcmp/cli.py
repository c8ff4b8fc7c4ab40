"""Command line interface.

Subcommands: encode, estimate, benchmark, synthesize, metrics.  Estimate and
benchmark read a plain-text key=value config file; CLI flags override file
values.  Exit codes: 0 success, 2 validation error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from . import pipeline
from .pipeline import ConfigError, ExperimentConfig


def _add_config_overrides(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", help="key=value config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override config values (repeatable)")


def _load_experiment(args) -> ExperimentConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"bad override {item!r}, expected KEY=VALUE")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    cfg = pipeline.load_config(args.config, overrides)
    return ExperimentConfig.from_dict(cfg)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gcmp",
        description="Distributed geometric image codec over compressed measurements")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="sense, quantize and entropy-code an image")
    p.add_argument("image", help="input binary PGM")
    p.add_argument("output", help="output .gcmp bitstream")
    p.add_argument("--rate", type=float, required=True,
                   help="measurement rate as a fraction of the pixel count")
    p.add_argument("--bits", type=int, default=2)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--block-size", type=int, default=8)

    p = sub.add_parser("estimate", help="estimate correlation and predict views")
    _add_config_overrides(p)

    p = sub.add_parser("benchmark", help="sweep rates/bits and emit an RD CSV")
    _add_config_overrides(p)

    p = sub.add_parser("synthesize", help="render a synthetic scene from JSON")
    p.add_argument("scene", help="scene spec (JSON)")
    p.add_argument("output_dir")

    p = sub.add_parser("metrics", help="PSNR / disparity error between files")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("--gt", help="ground-truth disparity (PFM or 16-bit PGM)")
    p.add_argument("--est", help="estimated disparity (PFM)")
    p.add_argument("--gt-scale", type=float, default=1.0)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "encode":
            info = pipeline.cmd_encode(args.image, args.output, args.rate,
                                       args.bits, args.seed, args.block_size)
            print(f"M={info['m_count']} bits={info['bits']} "
                  f"bitstream={info['bitstream_bits']} bits")
        elif args.command == "estimate":
            records = pipeline.cmd_estimate(_load_experiment(args))
            for r in records:
                print(r.csv_row())
        elif args.command == "benchmark":
            records = pipeline.cmd_benchmark(_load_experiment(args))
            print(f"{len(records)} RD points written")
        elif args.command == "synthesize":
            info = pipeline.cmd_synthesize(args.scene, args.output_dir)
            print(f"wrote {info['views']} views at {info['dims']}")
        elif args.command == "metrics":
            out = pipeline.cmd_metrics(args.image_a, args.image_b, args.gt,
                                       args.est, args.gt_scale)
            for key, value in out.items():
                print(f"{key}={value}")
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
