#!/usr/bin/env python3
"""Print the model-complexity tables: parameter counts and analytic FLOPs
for every setting and scheme. Runs in seconds; purely analytic."""

import sys

import numpy as np

from ujscc.codec import (
    SETTINGS,
    build_codec,
    build_te_bundle,
    count_flops,
    count_params,
    count_params_bundle,
)


def main() -> int:
    rng = np.random.default_rng(0)
    print("setting,scheme,total_params,bn_params")
    for name, arch in SETTINGS.items():
        for scheme in ("ujscc", "me", "te"):
            if scheme == "te":
                count = count_params_bundle(build_te_bundle(arch, rng))
            else:
                count = count_params(build_codec(arch, scheme, rng))
            print(f"{name},{scheme},{count.total},{count.bn_total}")

    print()
    print("setting,k,modulation,encoder_gflops,decoder_gflops")
    orders = (2, 4, 16, 64, 256)
    for name, arch in SETTINGS.items():
        codec = build_codec(arch, "ujscc", rng)
        for k in range(1, arch.K + 1):
            fc = count_flops(codec, k)
            print(
                f"{name},{k},{orders[k - 1]},"
                f"{fc.encoder / 1e9:.4f},{fc.decoder / 1e9:.4f}"
            )
    return 0


if __name__ == "__main__":
    sys.exit(main())
