#!/usr/bin/env python3
"""Fetch the CIFAR-10 binary batches into data/cifar-10-batches-bin.

Needs outbound network access; the tarball is ~163 MB. Point
UJSCC_DATA_DIR at the extracted directory afterwards (or run from the
repository root, where data/cifar-10-batches-bin is picked up
automatically).
"""

import argparse
import sys
import tarfile
import urllib.request
from pathlib import Path

URL = "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dest", default="data", help="destination directory")
    args = parser.parse_args()

    dest = Path(args.dest)
    dest.mkdir(parents=True, exist_ok=True)
    target = dest / "cifar-10-batches-bin"
    if target.is_dir() and any(target.glob("data_batch_*.bin")):
        print(f"already present: {target}")
        return 0

    tarball = dest / "cifar-10-binary.tar.gz"
    if not tarball.is_file():
        print(f"downloading {URL} ...")
        urllib.request.urlretrieve(URL, tarball)
    print(f"extracting {tarball} ...")
    with tarfile.open(tarball, "r:gz") as tf:
        tf.extractall(dest)
    print(f"done: {target}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
