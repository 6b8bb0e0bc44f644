#!/usr/bin/env python3
"""Cost anatomy of one implicit step on the standard benchmark mesh.

Times each phase of an assembly+solve for 1, 2 and 3 species, fits the
quadratic cost model t(S) = a + b S + c S^2, and reports the
species-independent share a/t(2) together with an N^2 scaling check of the
pair sweep.
"""

import argparse
from pathlib import Path

from _common import CONFIGS


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(CONFIGS / "bench.json"))
    ap.add_argument("--out", default="out/bench")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    from axlandau.cli import main as cli_main

    code = cli_main([
        "bench", "--config", args.config, "--out", args.out,
        "--workers", str(args.workers),
    ])
    if code != 0:
        raise SystemExit(code)

    header = {}
    table = []
    for line in (Path(args.out) / "bench.csv").read_text().splitlines():
        if line.startswith("#") and ":" in line:
            key, _, val = line[1:].partition(":")
            header[key.strip()] = val.strip()
        elif line and not line.startswith("#"):
            table.append(line)

    print()
    for line in table:
        print("  " + "  ".join(f"{f:>12}" for f in line.split(",")))
    print(f"\nfit: t(S) = {header['fit_a']} + {header['fit_b']} S "
          f"+ {header['fit_c']} S^2  [seconds]")
    print(f"species-independent share a/t(2): {float(header['s0_share']):.1%}")
    print(f"pair-sweep scaling: t({header['n2_N2']})/t({header['n2_N1']}) = "
          f"{header['n2_ratio']} (4.0 for a pure N^2 sweep)")


if __name__ == "__main__":
    main()
