#!/usr/bin/env python3
"""Run every experiment config under configs/ and collect the artifacts.

Usage:
    python3 scripts/run_all.py [--configs DIR] [--out DIR] [--seed N]

Each config is executed through the same entry point as the ``fracp``
command line; artifacts land in ``--out/<config-stem>/``.
"""

import argparse
import sys
import time
from pathlib import Path

from fracp.lab import ExperimentConfig, run


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--configs", default="configs", help="config directory")
    ap.add_argument("--out", default="out", help="output root")
    ap.add_argument("--seed", type=int, default=None, help="override seeds")
    args = ap.parse_args()

    config_dir = Path(args.configs)
    paths = sorted(config_dir.glob("*.json"))
    if not paths:
        print(f"no configs found in {config_dir}", file=sys.stderr)
        return 1

    failures = 0
    for path in paths:
        cfg = ExperimentConfig.from_json(path)
        outdir = Path(args.out) / path.stem
        t0 = time.time()
        try:
            artifacts = run(cfg, outdir=outdir, seed=args.seed)
        except Exception as exc:  # keep going; report at the end
            failures += 1
            print(f"[FAIL] {path.name}: {type(exc).__name__}: {exc}")
            continue
        dt = time.time() - t0
        print(f"[ ok ] {path.name} ({dt:.2f}s)")
        for a in artifacts:
            print(f"        {a}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
