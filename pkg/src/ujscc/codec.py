"""Universal encoder/decoder assembly with per-order path switching.

The encoder is an outer CNN stack that ends in a single inner
convolution whose filter bank is as wide as the largest codeword
dimension D_K; on path k only the first D_k filters run, so the
feature matrix comes out at its native (N, D_k) width with no padding
or post-hoc slicing. The decoder mirrors this with a single inner
transpose convolution consuming D_k channels. Every convolution is
followed by switchable batch normalization with one parameter set per
modulation order.

Three scheme variants share the construction code:

* ``ujscc``: K-path switchable BN, sliced inner layers.
* ``me``: single-path plain BN, inner width fixed at D_K for every
  order (the model-efficient baseline).
* ``te``: one standalone codec per order, plain BN, inner width D_k
  (the task-effective baseline; build one per k).
"""

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from ujscc.nn import functional as F
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
)

SCHEMES = ("ujscc", "me", "te")


@dataclass(frozen=True)
class ArchitectureConfig:
    """Channel widths, codeword dimensions, and symbol count of one setting."""

    name: str
    c1: int
    c2: int
    dims: tuple[int, ...]
    n_symbols: int
    kernel: int = 5
    image_shape: tuple[int, int, int] = (3, 32, 32)

    def __post_init__(self):
        if list(self.dims) != sorted(set(self.dims)):
            raise ValueError("codeword dimensions must be strictly increasing")
        side = math.isqrt(self.n_symbols)
        if side * side != self.n_symbols:
            raise ValueError("n_symbols must be a perfect square")
        if side not in (self.image_shape[1], self.image_shape[1] // 2):
            raise ValueError(
                "n_symbols must give a feature grid at full or half image size"
            )

    @property
    def K(self) -> int:
        return len(self.dims)

    @property
    def feat_hw(self) -> tuple[int, int]:
        side = math.isqrt(self.n_symbols)
        return side, side

    @property
    def downsamples(self) -> bool:
        return self.feat_hw[0] != self.image_shape[1]


BASIC = ArchitectureConfig("basic", c1=32, c2=64, dims=(2, 4, 8, 12, 16), n_symbols=256)
LARGE = ArchitectureConfig("large", c1=64, c2=128, dims=(4, 8, 16, 24, 32), n_symbols=256)
MORE_SYMBOLS = ArchitectureConfig(
    "more_symbols", c1=32, c2=64, dims=(2, 4, 8, 12, 16), n_symbols=1024
)

SETTINGS = {a.name: a for a in (BASIC, LARGE, MORE_SYMBOLS)}


class Codec:
    """One encoder/decoder pair; see module docstring for the variants."""

    def __init__(
        self,
        arch: ArchitectureConfig,
        scheme: str,
        rng: np.random.Generator,
        te_index: int | None = None,
    ):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        if (scheme == "te") != (te_index is not None):
            raise ValueError("te_index is required for te and forbidden otherwise")
        self.arch = arch
        self.scheme = scheme
        self.te_index = te_index
        paths = arch.K if scheme == "ujscc" else 1

        c1, c2, f = arch.c1, arch.c2, arch.kernel
        d_top = arch.dims[te_index - 1] if scheme == "te" else arch.dims[-1]
        h1, w1 = arch.feat_hw
        c_img = arch.image_shape[0]

        def conv(c_in, c_out, ks, s, p, name, out_dims=None):
            return Conv2d(ConvSpec(c_in, c_out, ks, s, p), rng, name, out_dims)

        def tconv(c_in, c_out, ks, s, p, name, in_dims=None):
            return ConvTranspose2d(
                ConvSpec(c_in, c_out, ks, s, p, transpose=True), rng, name, in_dims
            )

        def bn(dims, name):
            return SwitchableBatchNorm(dims, name=name)

        def uniform_bn(c, name):
            return bn((c,) * paths, name)

        def res(c, name):
            return Residual(
                [
                    conv(c, c, 3, 1, 1, f"{name}.0"),
                    uniform_bn(c, f"{name}.1"),
                    ReLU(f"{name}.2"),
                    conv(c, c, 1, 1, 0, f"{name}.3"),
                    uniform_bn(c, f"{name}.4"),
                ],
                name,
            )

        def tres(c, name):
            return Residual(
                [
                    tconv(c, c, 1, 1, 0, f"{name}.0"),
                    uniform_bn(c, f"{name}.1"),
                    ReLU(f"{name}.2"),
                    tconv(c, c, 3, 1, 1, f"{name}.3"),
                    uniform_bn(c, f"{name}.4"),
                ],
                name,
            )

        down = (2, 2, 0) if arch.downsamples else (f, 1, f // 2)

        oe = "outer_enc"
        self.outer_enc = [
            conv(c_img, c1, f, 1, f // 2, f"{oe}.0"),
            uniform_bn(c1, f"{oe}.1"),
            ReLU(f"{oe}.2"),
            conv(c1, c2, f, 1, f // 2, f"{oe}.3"),
            uniform_bn(c2, f"{oe}.4"),
            ReLU(f"{oe}.5"),
            res(c2, f"{oe}.6"),
            conv(c2, c1, *down, f"{oe}.7"),
            uniform_bn(c1, f"{oe}.8"),
            ReLU(f"{oe}.9"),
            res(c1, f"{oe}.10"),
        ]

        ie = "inner_enc"
        inner_out_dims = arch.dims if scheme == "ujscc" else None
        inner_bn_dims = arch.dims if scheme == "ujscc" else (d_top,)
        self.inner_enc = [
            conv(c1, d_top, f, 1, f // 2, f"{ie}.0", out_dims=inner_out_dims),
            bn(inner_bn_dims, f"{ie}.1"),
            Tanh(f"{ie}.2"),
            SpatialToFeatures(f"{ie}.3"),
        ]

        idn = "inner_dec"
        self.inner_dec = [
            FeaturesToSpatial(h1, w1, f"{idn}.0"),
            tconv(d_top, c1, f, 1, f // 2, f"{idn}.1", in_dims=inner_out_dims),
            uniform_bn(c1, f"{idn}.2"),
            ReLU(f"{idn}.3"),
        ]

        od = "outer_dec"
        self.outer_dec = [
            tres(c1, f"{od}.0"),
            tconv(c1, c2, *down, f"{od}.1"),
            uniform_bn(c2, f"{od}.2"),
            ReLU(f"{od}.3"),
            tres(c2, f"{od}.4"),
            tconv(c2, c1, f, 1, f // 2, f"{od}.5"),
            uniform_bn(c1, f"{od}.6"),
            ReLU(f"{od}.7"),
            tconv(c1, c_img, f, 1, f // 2, f"{od}.8"),
            uniform_bn(c_img, f"{od}.9"),
            Tanh(f"{od}.10"),
        ]

        self.sections = {
            "outer_enc": self.outer_enc,
            "inner_enc": self.inner_enc,
            "inner_dec": self.inner_dec,
            "outer_dec": self.outer_dec,
        }

    # -- forward / backward -------------------------------------------------

    def feature_dim(self, k: int) -> int:
        if self.scheme == "ujscc":
            return self.arch.dims[k - 1]
        if self.scheme == "me":
            return self.arch.dims[-1]
        return self.arch.dims[self.te_index - 1]

    @staticmethod
    def _run(layers, x, k, training, update_running):
        for layer in layers:
            if isinstance(layer, SwitchableBatchNorm):
                x = layer.forward(x, k, training, update_running)
            elif isinstance(layer, Residual):
                x = layer.forward(x, k, training, update_running=update_running)
            else:
                x = layer.forward(x, k, training)
        return x

    @staticmethod
    def _run_backward(layers, grad):
        for layer in reversed(layers):
            grad = layer.backward(grad)
        return grad

    def encode(
        self, x: np.ndarray, k: int, training: bool = False, update_running: bool = True
    ) -> np.ndarray:
        """Image(s) in [-1, 1], channels-first -> (N, D) features or batch."""
        self._check_order(k)
        squeeze = x.ndim == 3
        if squeeze:
            x = x[None]
        if x.shape[1:] != self.arch.image_shape:
            raise ValueError(
                f"encode: image shape {x.shape[1:]} != {self.arch.image_shape}"
            )
        y = F.to_channels_last(x)
        y = self._run(self.outer_enc, y, k, training, update_running)
        y = self._run(self.inner_enc, y, k, training, update_running)
        return y[0] if squeeze else y

    def encode_backward(self, grad: np.ndarray) -> np.ndarray:
        if grad.ndim == 2:
            grad = grad[None]
        grad = self._run_backward(self.inner_enc, grad)
        return F.to_channels_first(self._run_backward(self.outer_enc, grad))

    def decode(
        self, y: np.ndarray, k: int, training: bool = False, update_running: bool = True
    ) -> np.ndarray:
        """Feature matrix (N, D_k) (or batch) -> reconstructed image(s)."""
        self._check_order(k)
        squeeze = y.ndim == 2
        if squeeze:
            y = y[None]
        n, d = y.shape[1], y.shape[2]
        if n != self.arch.n_symbols or d != self.feature_dim(k):
            raise ValueError(
                f"decode: features {(n, d)} but order {k} carries "
                f"({self.arch.n_symbols}, {self.feature_dim(k)})"
            )
        x = self._run(self.inner_dec, y, k, training, update_running)
        x = self._run(self.outer_dec, x, k, training, update_running)
        x = F.to_channels_first(x)
        return x[0] if squeeze else x

    def decode_backward(self, grad: np.ndarray) -> np.ndarray:
        if grad.ndim == 3:
            grad = grad[None]
        grad = self._run_backward(self.outer_dec, F.to_channels_last(grad))
        return self._run_backward(self.inner_dec, grad)

    def _check_order(self, k: int) -> None:
        if not 1 <= k <= self.arch.K:
            raise ValueError(f"order index {k} outside [1:{self.arch.K}]")
        if self.scheme == "te" and k != self.te_index:
            raise ValueError(
                f"this codec serves order {self.te_index}, not {k}"
            )

    # -- parameter plumbing ---------------------------------------------------

    def params(self) -> list[Param]:
        out = []
        for layers in self.sections.values():
            for layer in layers:
                out.extend(layer.params())
        return out

    def zero_grads(self) -> None:
        for p in self.params():
            p.zero_grad()

    def bn_layers(self):
        for layers in self.sections.values():
            for layer in layers:
                if isinstance(layer, SwitchableBatchNorm):
                    yield layer
                elif isinstance(layer, Residual):
                    for sub in layer.branch:
                        if isinstance(sub, SwitchableBatchNorm):
                            yield sub

    def relu_mask_digest(self) -> bytes:
        """Fingerprint of the active-ReLU pattern of the latest forward;
        two forwards on the same smooth piece of the loss share it."""
        h = hashlib.blake2b(digest_size=16)
        for layers in self.sections.values():
            for layer in layers:
                if hasattr(layer, "active_masks"):
                    for mask in layer.active_masks():
                        h.update(np.packbits(mask))
        return h.digest()

    def state_entries(self) -> list[tuple[str, np.ndarray]]:
        """(name, live array) pairs for every weight and BN statistic."""
        items = []
        for sec, layers in self.sections.items():
            for i, layer in enumerate(layers):
                for suffix, value in layer.state_items():
                    items.append((f"{sec}.{i}.{suffix}", value))
        return items

    def load_state(self, entries: dict[str, np.ndarray]) -> None:
        for name, arr in self.state_entries():
            src = entries[name]
            if src.shape != arr.shape:
                raise ValueError(
                    f"checkpoint entry {name}: shape {src.shape} != {arr.shape}"
                )
            arr[...] = src


@dataclass
class ParamCount:
    total: int
    bn_total: int
    per_layer: list[tuple[str, int]]


def count_params(codec: Codec) -> ParamCount:
    """Learned parameters only: conv/tconv weights plus per-path BN scale
    and offset. Codebooks and running statistics are not model weights."""
    per_layer = []
    bn_total = 0
    for sec, layers in codec.sections.items():
        for i, layer in enumerate(layers):
            n = layer.param_count()
            if n:
                per_layer.append((f"{sec}.{i}", n))
            if isinstance(layer, SwitchableBatchNorm):
                bn_total += n
            elif isinstance(layer, Residual):
                bn_total += sum(
                    sub.param_count()
                    for sub in layer.branch
                    if isinstance(sub, SwitchableBatchNorm)
                )
    return ParamCount(sum(n for _, n in per_layer), bn_total, per_layer)


def count_params_bundle(codecs: list[Codec]) -> ParamCount:
    counts = [count_params(c) for c in codecs]
    per_layer = []
    for k, c in enumerate(counts, start=1):
        per_layer.extend((f"codec{k}.{name}", n) for name, n in c.per_layer)
    return ParamCount(
        sum(c.total for c in counts), sum(c.bn_total for c in counts), per_layer
    )


@dataclass
class FlopCount:
    encoder: int
    decoder: int


def count_flops(codec: Codec, k: int) -> FlopCount:
    """Analytic multiply-add count (2 FLOPs per MAC) of the conv layers.

    Convolutions count on their output grid, transpose convolutions on
    their input grid; the width-switched inner layers count with the
    active width D_k. BN and activations are excluded.
    """
    codec._check_order(k)
    _, h, w = codec.arch.image_shape

    def walk(layers, h, w):
        total = 0
        for layer in layers:
            total += layer.flops(h, w, k)
            if isinstance(layer, (Conv2d, ConvTranspose2d)):
                h, w = layer.spec.out_hw(h, w)
        return total, h, w

    enc_outer, h, w = walk(codec.outer_enc, h, w)
    enc_inner, _, _ = walk(codec.inner_enc, h, w)
    h1, w1 = codec.arch.feat_hw
    dec_inner, h, w = walk(codec.inner_dec, h1, w1)
    dec_outer, _, _ = walk(codec.outer_dec, h, w)
    return FlopCount(enc_outer + enc_inner, dec_inner + dec_outer)


def build_codec(
    arch: ArchitectureConfig,
    scheme: str,
    rng: np.random.Generator,
    te_index: int | None = None,
) -> Codec:
    return Codec(arch, scheme, rng, te_index)


def build_te_bundle(arch: ArchitectureConfig, rng: np.random.Generator) -> list[Codec]:
    """The K independent codecs of the task-effective baseline."""
    return [Codec(arch, "te", rng, te_index=k) for k in range(1, arch.K + 1)]
