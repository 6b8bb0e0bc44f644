#!/usr/bin/env python3
"""Nested-grid convergence study of the collision operator.

Integrates a drifting-electron / cold-ion pair for two short implicit steps on
a sequence of nested grids and reports Richardson difference ratios for the
total z thermal flux, together with the aggregate observed order (the method
is fourth-order in the mesh spacing for smooth states).

With the default four grids (8x16 ... 64x128) the finest solve takes a few
minutes; pass e.g. --grids 4x8,8x16,16x32,32x64 for a quick look.
"""

import argparse
from pathlib import Path

from _common import CONFIGS, read_csv_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(CONFIGS / "convergence.json"))
    ap.add_argument("--out", default="out/convergence")
    ap.add_argument("--grids", default=None,
                    help="comma list like 8x16,16x32,32x64,64x128")
    args = ap.parse_args()

    from axlandau.cli import main as cli_main

    argv = ["converge", "--config", args.config, "--out", args.out]
    if args.grids:
        argv += ["--grids", args.grids]
    code = cli_main(argv)
    if code != 0:
        raise SystemExit(code)

    names, rows = read_csv_table(Path(args.out) / "convergence.csv")
    aggregate = None
    with (Path(args.out) / "convergence.csv").open() as fh:
        for line in fh:
            if line.startswith("#") and "aggregate_p" in line:
                aggregate = line.split(":")[-1].strip()

    print("\ncolumns:", ", ".join(names))
    for row in rows:
        print("  " + " ".join(f"{x:12.5e}" for x in row))
    print(f"\naggregate observed order: {aggregate}")


if __name__ == "__main__":
    main()
