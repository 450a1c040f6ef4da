"""Command line entry point.

    fraclap <experiment> --config FILE [--out DIR] [--seed N] [--threads N] [--dump-fields]

Exit codes: 0 every asserted check passed, 1 invalid configuration,
2 computation failure or failed check, 3 I/O error.
"""
from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .config import EXPERIMENTS, build_config, load_config
from .errors import ConfigError
from .runner import MANIFEST, resolve_threads, run

EXIT_OK, EXIT_VALIDATION, EXIT_COMPUTATION, EXIT_IO = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fraclap", description="Fractional Laplacian form experiments.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", help="JSON run configuration (defaults are used when omitted)")
    ap.add_argument("--out", help="output directory (overrides output_dir)")
    ap.add_argument("--seed", type=int, help="overrides the config seed")
    ap.add_argument("--threads", type=int, help="worker threads (default: FRACLAP_THREADS or 1)")
    ap.add_argument("--dump-fields", action="store_true", help="also write grid and extension fields as CSV")
    return ap


def _config(args):
    if args.config is not None:
        cfg = load_config(args.config, args.experiment)
    else:
        cfg = build_config({"experiment": args.experiment})
    changes = {}
    if args.out is not None:
        changes["output_dir"] = args.out
    if args.seed is not None:
        changes["seed"] = args.seed
    return cfg.replace(**changes) if changes else cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        threads = resolve_threads(args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        manifest = run(cfg, threads=threads, dump_fields=args.dump_fields)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for c in manifest.checks:
        status = "PASS" if c["passed"] else "FAIL"
        tag = "" if c["asserted"] else " (finding)"
        print(f"{status} {c['name']}{tag}: {c['value']} {c['detail']}".rstrip())
    print(f"wrote {len(manifest.files)} files and {MANIFEST} to {cfg.output_dir}")
    return EXIT_OK if manifest.passed else EXIT_COMPUTATION


if __name__ == "__main__":
    sys.exit(main())
