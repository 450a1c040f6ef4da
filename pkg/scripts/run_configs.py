"""Run experiment configs and print a one-line summary per run.

    python scripts/run_configs.py                 # every configs/*.json
    python scripts/run_configs.py configs/gap_decay.json --threads 4
"""
import argparse
import sys
from pathlib import Path

from fraclap.config import load_config
from fraclap.runner import run

ROOT = Path(__file__).resolve().parent.parent


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="*", type=Path)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out-root", type=Path, help="rewrite output_dir to OUT_ROOT/<config stem>")
    args = ap.parse_args(argv)
    paths = args.configs or sorted((ROOT / "configs").glob("*.json"))
    status = 0
    for path in paths:
        cfg = load_config(path)
        if args.out_root is not None:
            cfg = cfg.replace(output_dir=str(args.out_root / path.stem))
        man = run(cfg, threads=args.threads)
        failed = ", ".join(man.failed_checks) or "-"
        findings = ", ".join(c["name"] for c in man.checks if not c["asserted"] and not c["passed"]) or "-"
        print(f"{path.stem:20s} {'ok  ' if man.passed else 'FAIL'} {man.wall_time:7.1f} s  "
              f"failed: {failed}  open findings: {findings}")
        status |= 0 if man.passed else 2
    return status


if __name__ == "__main__":
    sys.exit(main())
