"""Command-line entry point: `selar gen | run | report`."""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .exceptions import ConfigError, DataError, NumericsError
from .runner import atomic_write, build_report, generate_dataset, run_config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selar",
        description="Self-supervised auxiliary-task training on heterogeneous graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="materialize the configured synthetic dataset as TSV files")
    gen.add_argument("--config", required=True, help="path to a run config (JSON)")

    run = sub.add_parser("run", help="train per seed and write run dirs plus the aggregate")
    run.add_argument("--config", required=True, help="path to a run config (JSON)")
    run.add_argument("--out", default=None, help="override the config's output directory")

    report = sub.add_parser("report", help="combine finished run dirs into one comparison table")
    report.add_argument("dirs", nargs="+", help="run dirs, or parents containing them")
    report.add_argument("--csv", default=None, help="also write the table as CSV to this path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            paths = generate_dataset(load_config(args.config))
            for kind in sorted(paths):
                print(f"{kind}\t{paths[kind]}")
        elif args.command == "run":
            result = run_config(load_config(args.config), out_dir=args.out)
            print(f"{result['runs']} run(s) -> {result['out_dir']}")
            for name in sorted(result["metrics"]):
                mean, std, n = result["metrics"][name]
                print(f"{name}: {mean:.4f} +/- {std:.4f} (n={n})")
        else:
            csv_text, text = build_report(args.dirs)
            if args.csv:
                atomic_write(args.csv, csv_text)
            sys.stdout.write(text)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return 3
    except NumericsError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
