"""Universal joint source-channel coding over digital modulations.

A single convolutional encoder/decoder pair with per-modulation-order
switchable batch normalization, learned vector-quantization codebooks
mapped one-to-one onto QAM constellations, an AWGN channel simulator,
and the training/evaluation harness tying them together.

Everything runs on float64 numpy arrays with hand-written backward
passes, so gradients can be audited against finite differences and
runs are bit-reproducible from a seed.
"""

from ujscc.channel import ModulationPlan, SnrPolicy, analytic_ser, make_constellation
from ujscc.codec import BASIC, LARGE, MORE_SYMBOLS, ArchitectureConfig, build_codec
from ujscc.pipeline import (
    System,
    TrainConfig,
    build_system,
    evaluate_sweep,
    train_me1,
    train_me2,
    train_te,
    train_ujscc,
    transmit_image,
)

__version__ = "0.1.0"
