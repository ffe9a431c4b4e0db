"""Minimal deterministic differentiable-layer engine on float64 numpy.

Layers cache what their backward pass needs on forward and expose
parameters as :class:`Param` objects; there is no autodiff tape. The
`gradcheck` helpers compare every analytic backward against central
finite differences.
"""

from ujscc.nn.functional import (
    conv2d,
    conv2d_backward,
    conv_out_size,
    im2col,
    col2im,
    relu,
    relu_backward,
    tanh,
    tanh_backward,
    tconv2d,
    tconv2d_backward,
    tconv_out_size,
    to_channels_first,
    to_channels_last,
)
from ujscc.nn.layers import (
    Conv2d,
    ConvSpec,
    ConvTranspose2d,
    FeaturesToSpatial,
    Param,
    ReLU,
    Residual,
    SpatialToFeatures,
    SwitchableBatchNorm,
    Tanh,
    kaiming_uniform,
)
from ujscc.nn.optim import Adam
from ujscc.nn.gradcheck import GradcheckReport, gradcheck_params, numerical_gradient
from ujscc.nn.rng import rng_stream, seeded_rng

__all__ = [
    "Adam",
    "Conv2d",
    "ConvSpec",
    "ConvTranspose2d",
    "FeaturesToSpatial",
    "GradcheckReport",
    "Param",
    "ReLU",
    "Residual",
    "SpatialToFeatures",
    "SwitchableBatchNorm",
    "Tanh",
    "col2im",
    "conv2d",
    "conv2d_backward",
    "conv_out_size",
    "gradcheck_params",
    "im2col",
    "kaiming_uniform",
    "numerical_gradient",
    "relu",
    "relu_backward",
    "rng_stream",
    "seeded_rng",
    "tanh",
    "tanh_backward",
    "tconv2d",
    "tconv2d_backward",
    "tconv_out_size",
    "to_channels_first",
    "to_channels_last",
]
