#!/usr/bin/env python3
"""Channel-estimation error preset (~1 minute).

Mean ||H - H_e||_F over 100 channel draws for each (pilot length,
pilot SNR) pair; the error should fall with both.
"""

import sys
from pathlib import Path

from otfs_sim.cli import main

HERE = Path(__file__).resolve().parent


def run() -> int:
    return main(["est-error",
                 "--config", str(HERE.parent / "configs" / "estimation_error.cfg"),
                 "--out", "estimation_error.csv", *sys.argv[1:]])


if __name__ == "__main__":
    sys.exit(run())
