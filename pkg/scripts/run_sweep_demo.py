#!/usr/bin/env python3
"""End-to-end demo: synthesize a clip, run the six preset (QTskip, Thm)
settings against the exhaustive anchor, and print the trade-off table."""

import argparse
import csv
import subprocess
import sys
import tempfile
from pathlib import Path


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ctu-size", type=int, default=64)
    ap.add_argument("--search-range", type=int, default=4)
    ap.add_argument("--qp", type=int, nargs="+", default=[27, 32, 37, 42])
    ap.add_argument("--predictor", default="oracle")
    ap.add_argument("--noise-eps", type=float, default=0.0)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    work = Path(args.out) if args.out else Path(tempfile.mkdtemp(prefix="qtmt_sweep_"))
    work.mkdir(parents=True, exist_ok=True)
    here = Path(__file__).parent

    subprocess.run(
        [sys.executable, here / "make_clips.py", "--out", work / "clips", "--kinds", "split"],
        check=True,
    )
    clip = next((work / "clips").glob("split_*.y4m"))
    cmd = [
        sys.executable, "-m", "qtmt.cli", "sweep",
        "--input", str(clip),
        "--ctu-size", str(args.ctu_size),
        "--search-range", str(args.search_range),
        "--gop", "low_delay",
        "--predictor", args.predictor,
        "--noise-eps", str(args.noise_eps),
        "--out", str(work / "sweep"),
    ]
    for qp in args.qp:
        cmd += ["--qp", str(qp)]
    subprocess.run(cmd, check=True)

    with open(work / "sweep" / "tradeoff.csv", newline="") as f:
        rows = list(csv.reader(f))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    for row in rows:
        print("  ".join(v.rjust(w) for v, w in zip(row, widths)))
    print(f"\nartifacts in {work}")


if __name__ == "__main__":
    main()
