"""Command line: ``fairfl run CONFIG`` and ``fairfl suite CONFIG...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from fairfl import _backend
from fairfl.config import ConfigError, parse_config
from fairfl.federation import run_experiment
from fairfl.harness import common_output_root, run_scenario_suite

log = logging.getLogger("fairfl")


def _apply_overrides(cfg, seed, output_dir):
    if seed is not None:
        cfg = cfg.with_seed(seed)
    if output_dir is not None:
        cfg = cfg.with_output_dir(output_dir)
    return cfg


def cmd_run(args) -> int:
    if args.seed is not None and args.seed < 0:
        print("--seed must be non-negative", file=sys.stderr)
        return 2
    try:
        cfg = _apply_overrides(parse_config(args.config), args.seed, args.output_dir)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return 2
    try:
        res = run_experiment(cfg)
    except Exception as exc:
        print(f"{cfg.name}: run failed: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        print(res.summary, end="")
        print(f"outputs: {res.output_dir}")
    return 0


def cmd_suite(args) -> int:
    if args.seed is not None and args.seed < 0:
        print("--seed must be non-negative", file=sys.stderr)
        return 2
    configs = []
    for path in args.configs:
        try:
            cfg = parse_config(path)
        except ConfigError as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            configs.append((path, exc))
            continue
        out = Path(args.output_dir) / cfg.name if args.output_dir else None
        configs.append(_apply_overrides(cfg, args.seed, out))
    names = [c.name for c in configs if not isinstance(c, tuple)]
    dupes = {n for n in names if names.count(n) > 1}
    if dupes:
        print(f"duplicate experiment names: {', '.join(sorted(dupes))}", file=sys.stderr)
        return 2
    result = run_scenario_suite(configs)
    root = Path(args.output_dir) if args.output_dir else common_output_root(configs)
    if root is not None:
        result.write(root)
    if not args.quiet:
        print(result.format_table(), end="")
        if root is not None:
            print(f"table: {root / 'suite_table.txt'}")
    for name, msg in result.failures:
        print(f"scenario {name} failed: {msg}", file=sys.stderr)
    return 0 if result.ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairfl", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s 0.1.0 ({_backend.BACKEND} kernels)")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="override experiment.seed")
    common.add_argument("--output-dir", help="override experiment.output_dir")
    common.add_argument("--quiet", action="store_true", help="print nothing on success")
    common.add_argument("-v", "--verbose", action="store_true", help="log every round")

    p = sub.add_parser("run", parents=[common], help="run one experiment config")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("suite", parents=[common],
                       help="run several configs and print the target/other/overall comparison table")
    p.add_argument("configs", nargs="+")
    p.set_defaults(func=cmd_suite)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else (logging.ERROR if args.quiet else logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
