#!/usr/bin/env python3
"""Minutes-scale end-to-end demo on synthetic images.

Trains the debug-scale codec jointly over its three modulation orders,
then sweeps SNR and writes the training log and metric CSVs under
runs/desk_demo/. Useful as a template for real experiments (swap the
setting to basic/large/more_symbols and the dataset to CIFAR-10).
"""

import sys
from pathlib import Path

from ujscc.cli import main as cli_main


def main() -> int:
    out = Path("runs/desk_demo")
    rc = cli_main(
        [
            "train",
            "--setting", "tiny",
            "--scheme", "ujscc",
            "--dataset", "synthetic:192",
            "--epochs", "6",
            "--batch-size", "16",
            "--seed", "0",
            "--out", str(out),
        ]
    )
    if rc:
        return rc
    return cli_main(
        [
            "sweep",
            "--checkpoint", str(out / "model.ujsc"),
            "--dataset", "synthetic:32",
            "--snr-start", "0",
            "--snr-stop", "28",
            "--snr-step", "4",
            "--seed", "1",
            "--out", str(out / "sweep.csv"),
        ]
    )


if __name__ == "__main__":
    sys.exit(main())
