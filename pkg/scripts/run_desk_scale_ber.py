#!/usr/bin/env python3
"""Desk-scale BER sweep preset (32x16 frame, ~1-2 minutes).

Prints the same Doppler-invariance ratio as the full-grid preset.  The
preset sweeps the noise-dominated SNR range where the short frame shows
the invariance; see the config comments.
"""

import csv
import sys
from collections import defaultdict
from pathlib import Path

from otfs_sim.cli import main

HERE = Path(__file__).resolve().parent
OUT = "desk_scale_ber.csv"


def run() -> int:
    rc = main(["ber", "--config", str(HERE.parent / "configs" / "desk_scale_ber.cfg"),
               "--out", OUT, *sys.argv[1:]])
    by_snr = defaultdict(list)
    with open(OUT) as f:
        for row in csv.DictReader(f):
            by_snr[row["snr_db"]].append(float(row["ber"]))
    print("\nDoppler invariance (max/min BER ratio across Dopplers):")
    for snr, bers in sorted(by_snr.items(), key=lambda kv: float(kv[0])):
        print(f"  snr={snr:>5} dB  ratio={max(bers) / min(bers):.2f}")
    return rc


if __name__ == "__main__":
    sys.exit(run())
