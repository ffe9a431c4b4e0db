"""Seeded random-number streams.

All randomness in the package flows through ``np.random.Generator``
instances created here, so a run is a pure function of its seed.
Separate purposes get separate child streams keyed by a fixed index,
which keeps e.g. weight initialization independent of how many batches
were drawn before it.
"""

import numpy as np

# Fixed child-stream indices; appending is fine, reordering breaks
# reproducibility of existing seeds.
STREAM_INIT = 0
STREAM_CODEBOOK = 1
STREAM_TRAIN = 2
STREAM_VAL = 3
STREAM_EVAL = 4
STREAM_DATA = 5


def seeded_rng(seed: int) -> np.random.Generator:
    """Root generator for a run; identical seed gives an identical stream."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def rng_stream(seed: int, which: int) -> np.random.Generator:
    """Child generator `which` of `seed`, independent of its siblings."""
    child = np.random.SeedSequence(seed).spawn(which + 1)[which]
    return np.random.Generator(np.random.PCG64(child))
