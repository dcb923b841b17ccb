"""Overlay the theoretical rate curves on a convergence table and fit the constants.

    python scripts/run_rates.py results/convergence_case1_toeplitz_cholesky.csv
"""

import json
import sys
from pathlib import Path

import pandas as pd

from fgl.data_io import write_json, write_table_csv
from fgl.experiments import fit_rate_constants, theoretical_rate_overlay


def main():
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    src = Path(sys.argv[1])
    table = pd.read_csv(src, float_precision="round_trip")
    fits, frames = {}, []
    for variant in ("loglog", "omega"):
        ov = theoretical_rate_overlay(table, "FGL", variant)
        frames.append(ov)
        fits[variant] = fit_rate_constants(ov)
    write_table_csv(src.with_name(src.stem + "_overlay.csv"), pd.concat(frames, ignore_index=True))
    write_json(src.with_name(src.stem + "_rates.json"), fits)
    print(json.dumps({v: f["joint"] for v, f in fits.items()}, indent=2))


if __name__ == "__main__":
    main()
