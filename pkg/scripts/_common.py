"""Shared plumbing for the experiment scripts: import shim + CSV readers."""

import csv
import json
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
CONFIGS = Path(__file__).resolve().parent / "configs"

try:  # installed (pip install -e .) or already on the path
    import axlandau  # noqa: F401
except ImportError:  # running from a bare checkout
    sys.path.insert(0, str(REPO / "src"))


def read_moments(path):
    """Read a moments.csv produced by the `run` subcommand.

    Returns (config_dict, column_names, rows) where rows is a float array
    with one row per sampled time.
    """
    import numpy as np

    path = Path(path)
    config = None
    names = None
    rows = []
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("# config:"):
                config = json.loads(line[len("# config:"):])
            elif line.startswith("#"):
                continue
            elif names is None:
                names = line.split(",")
            else:
                rows.append([float(x) for x in line.split(",")])
    return config, names, np.asarray(rows)


def species_temperatures(config, names, rows):
    """Per-species kinetic temperatures T = (2E/n - m u^2)/3 from CSV columns."""
    import numpy as np

    out = {}
    for spec in config["species"]:
        nm, mass = spec["name"], spec["mass"]
        n = rows[:, names.index(f"n_{nm}")]
        pz = rows[:, names.index(f"pz_{nm}")]
        en = rows[:, names.index(f"E_{nm}")]
        u = pz / (mass * n)
        out[nm] = (2.0 * en / n - mass * u * u) / 3.0
    return out


def read_csv_table(path):
    """Read a plain CSV with one comment header block; returns (names, rows)."""
    names, rows = None, []
    with Path(path).open() as fh:
        for rec in csv.reader(line for line in fh if not line.startswith("#")):
            if not rec:
                continue
            if names is None:
                names = rec
            else:
                rows.append([float(x) for x in rec])
    return names, rows
