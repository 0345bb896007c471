"""Command-line entry point: ``serialboot <command> [options]``.

Options may also come from a plain ``key=value`` file given with
``--config``; flags on the command line win.
"""
from __future__ import annotations

import argparse
import json
import sys

from .errors import InvalidArgument, SerialBootError
from .experiments import COMMANDS, TAIL_METHODS, ResultTable, RunConfig, run

EXIT_OK, EXIT_CELL_FAILURES, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3

_CASTS = {
    "n": int, "rho0": float, "rho1": float, "dist": str, "u": float, "level": float,
    "sims": int, "boot": int, "ncond": int, "tau": float, "seed": int, "threads": int,
    "out": str, "format": str, "method": str, "series": str, "samples": int,
}


def _offsets(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def parse_config_file(path: str) -> dict:
    """``key=value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if not sep:
                raise InvalidArgument(f"{path}:{lineno}: expected key=value")
            if key == "offsets":
                values[key] = _offsets(value)
            elif key in _CASTS:
                values[key] = _CASTS[key](value.strip())
            else:
                raise InvalidArgument(f"{path}:{lineno}: unknown key {key!r}")
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="serialboot", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key=value file; command-line flags override it")
    p.add_argument("--n", type=int)
    p.add_argument("--rho0", type=float)
    p.add_argument("--rho1", type=float)
    p.add_argument("--dist", choices=["normal", "t10", "exp"])
    p.add_argument("--u", type=float)
    p.add_argument("--offsets", type=_offsets, help="comma-separated offsets from rho0")
    p.add_argument("--level", type=float)
    p.add_argument("--sims", type=int)
    p.add_argument("--boot", type=int)
    p.add_argument("--ncond", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--method", choices=TAIL_METHODS, help="tail method (tail, probe-relerr)")
    p.add_argument("--series", help="series file, one observation per line")
    p.add_argument("--samples", type=int, help="number of original samples (table3, probe-relerr)")
    return p


def config_from_args(argv=None) -> RunConfig:
    args = build_parser().parse_args(argv)
    values = parse_config_file(args.config) if args.config else {}
    for key, value in vars(args).items():
        if key not in ("command", "config") and value is not None:
            values[key] = value
    values.pop("command", None)
    return RunConfig(command=args.command, **values)


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
    except (InvalidArgument, OSError) as exc:
        print(f"serialboot: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        result = run(cfg)
    except InvalidArgument as exc:
        print(f"serialboot: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SerialBootError as exc:
        print(f"serialboot: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if isinstance(result, ResultTable):
        _emit(result.dumps(cfg.format), cfg.out)
        for w in result.warnings:
            print(f"warning: {w}", file=sys.stderr)
        if result.failures:
            for f in result.failures:
                print(f"failed cell: {f}", file=sys.stderr)
            return EXIT_CELL_FAILURES
        return EXIT_OK
    _emit(json.dumps(result, indent=2), cfg.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
