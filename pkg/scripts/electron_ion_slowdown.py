#!/usr/bin/env python3
"""Drifting electrons slowing down on heavy ions (mass ratio 1836.5).

Runs the solver on scripts/configs/electron_ion.json — a cold electron beam
(shift -1 in v_z) against stationary ions on an adaptively refined mesh that
resolves both the narrow ion core and the displaced electron peak — and prints
the electron drift velocity and the momentum handed to the ions.
"""

import argparse
from pathlib import Path

from _common import CONFIGS, read_moments


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(CONFIGS / "electron_ion.json"))
    ap.add_argument("--out", default="out/electron_ion")
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
    me = config["species"][0]["mass"]
    n_e = rows[:, names.index("n_e")]
    pz_e = rows[:, names.index("pz_e")]
    pz_i = rows[:, names.index("pz_i")]
    u_e = pz_e / (me * n_e)
    pz_tot = pz_e + pz_i

    print(f"\n{'t':>8} {'u_e':>12} {'pz_e':>14} {'pz_i':>14} {'pz_total':>14}")
    for k, t in enumerate(rows[:, 0]):
        print(f"{t:8.3f} {u_e[k]:12.6f} {pz_e[k]:14.6e} {pz_i[k]:14.6e} "
              f"{pz_tot[k]:14.6e}")

    drift = abs(pz_tot[-1] - pz_tot[0]) / max(abs(pz_tot[0]), 1e-30)
    print(f"\nelectron drift u_e: {u_e[0]:.5f} -> {u_e[-1]:.5f}")
    print(f"total-momentum drift over the run: {drift:.3e} (relative)")


if __name__ == "__main__":
    main()
