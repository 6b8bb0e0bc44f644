#!/usr/bin/env python3
"""Temperature relaxation of an equal-mass two-species plasma.

Runs the solver on scripts/configs/relaxation.json (hot drifting-free species
"a" against a cold species "b") and prints the temperature gap decaying toward
equilibration together with the entropy history, which must be non-decreasing.
"""

import argparse
from pathlib import Path

from _common import CONFIGS, read_moments, species_temperatures


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(CONFIGS / "relaxation.json"))
    ap.add_argument("--out", default="out/relaxation")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    from axlandau.cli import main as cli_main

    code = cli_main([
        "run", "--config", args.config, "--out", args.out,
        "--workers", str(args.workers),
    ])
    if code != 0:
        raise SystemExit(code)

    config, names, rows = read_moments(Path(args.out) / "moments.csv")
    temps = species_temperatures(config, names, rows)
    sp = [s["name"] for s in config["species"]]
    ent = rows[:, names.index("entropy")]

    print(f"\n{'t':>8} " + " ".join(f"{'T_' + nm:>12}" for nm in sp)
          + f" {'gap':>12} {'entropy':>14}")
    for k, t in enumerate(rows[:, 0]):
        gap = abs(temps[sp[0]][k] - temps[sp[1]][k])
        cols = " ".join(f"{temps[nm][k]:12.6f}" for nm in sp)
        print(f"{t:8.3f} {cols} {gap:12.3e} {ent[k]:14.9f}")

    dH = ent[1:] - ent[:-1]
    print(f"\nmin entropy increment: {dH.min():.3e} "
          f"({'non-decreasing' if (dH >= -1e-12 * abs(ent).max()).all() else 'VIOLATION'})")
    g0 = abs(temps[sp[0]][0] - temps[sp[1]][0])
    g1 = abs(temps[sp[0]][-1] - temps[sp[1]][-1])
    print(f"temperature gap: {g0:.4e} -> {g1:.4e} "
          f"(x{g1 / g0:.3f} over t = {rows[-1, 0]:g})")


if __name__ == "__main__":
    main()
