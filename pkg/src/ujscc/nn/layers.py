"""Layer objects: conv / transpose conv, switchable batch norm, activations.

Every layer implements ``forward(x, k, training)`` and ``backward(grad)``
where ``k`` is the 1-based modulation-order path (layers that do not
switch ignore it). Forward caches exactly what backward needs; backward
accumulates into ``Param.grad`` and returns the gradient w.r.t. its
input. Convolutions carry no additive bias anywhere: the batch-norm
offset that follows each one plays that role.

Spatial activations flow through layers channels-last, (B, H, W, C);
weight arrays keep the channels-first conventions of the functional
kernels. Callers converting from channels-first images do so once at
the model boundary.
"""

from dataclasses import dataclass

import numpy as np

from ujscc.nn import functional as F


class Param:
    """A learned tensor plus its gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, value: np.ndarray, name: str = ""):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.value.shape})"


def kaiming_uniform(
    shape: tuple[int, ...], fan_in: int, rng: np.random.Generator
) -> np.ndarray:
    """U(-b, b) with b = sqrt(6 / fan_in)."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _channel_dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-channel sum of a*b over all leading axes, without the temporary."""
    flat_a = a.reshape(-1, a.shape[-1])
    flat_b = b.reshape(-1, b.shape[-1])
    return np.einsum("nc,nc->c", flat_a, flat_b)


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of a (transpose) convolution; bias is fixed off."""

    c_in: int
    c_out: int
    f: int
    s: int
    p: int
    transpose: bool = False
    bias: bool = False

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        size = F.tconv_out_size if self.transpose else F.conv_out_size
        return size(h, self.f, self.s, self.p), size(w, self.f, self.s, self.p)


class Conv2d:
    """Bias-free convolution; optionally uses only the first ``dims[k-1]``
    output filters on path k (the unused filters get exactly zero grad)."""

    def __init__(
        self,
        spec: ConvSpec,
        rng: np.random.Generator,
        name: str = "conv",
        out_dims: tuple[int, ...] | None = None,
    ):
        if spec.transpose:
            raise ValueError("Conv2d built with transpose spec")
        self.spec = spec
        self.name = name
        self.out_dims = out_dims
        fan_in = spec.c_in * spec.f * spec.f
        self.w = Param(
            kaiming_uniform((spec.c_out, spec.c_in, spec.f, spec.f), fan_in, rng),
            name=f"{name}.w",
        )
        self._cache = None

    def _used(self, k: int) -> int:
        return self.spec.c_out if self.out_dims is None else self.out_dims[k - 1]

    def forward(self, x: np.ndarray, k: int, training: bool) -> np.ndarray:
        co = self._used(k)
        w = self.w.value[:co] if co < self.spec.c_out else self.w.value
        out, cols = F.conv2d_nhwc(x, w, self.spec.s, self.spec.p)
        self._cache = (cols, x.shape, co)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        cols, x_shape, co = self._cache
        w = self.w.value[:co] if co < self.spec.c_out else self.w.value
        grad_x, grad_w = F.conv2d_nhwc_backward(
            cols, x_shape, w, grad_out, self.spec.s, self.spec.p
        )
        self.w.grad[:co] += grad_w
        self._cache = None
        return grad_x

    def params(self):
        return [self.w]

    def state_items(self):
        return [("w", self.w.value)]

    def param_count(self) -> int:
        return self.w.value.size

    def flops(self, h: int, w: int, k: int) -> int:
        ho, wo = self.spec.out_hw(h, w)
        return 2 * self.spec.c_in * self.spec.f**2 * self._used(k) * ho * wo


class ConvTranspose2d:
    """Bias-free transpose convolution; optionally consumes only the first
    ``dims[k-1]`` input channels (and filters) on path k."""

    def __init__(
        self,
        spec: ConvSpec,
        rng: np.random.Generator,
        name: str = "tconv",
        in_dims: tuple[int, ...] | None = None,
    ):
        if not spec.transpose:
            raise ValueError("ConvTranspose2d built with non-transpose spec")
        self.spec = spec
        self.name = name
        self.in_dims = in_dims
        fan_in = spec.c_out * spec.f * spec.f
        self.w = Param(
            kaiming_uniform((spec.c_in, spec.c_out, spec.f, spec.f), fan_in, rng),
            name=f"{name}.w",
        )
        self._cache = None

    def _used(self, k: int) -> int:
        return self.spec.c_in if self.in_dims is None else self.in_dims[k - 1]

    def forward(self, x: np.ndarray, k: int, training: bool) -> np.ndarray:
        ci = self._used(k)
        if x.shape[-1] != ci:
            raise ValueError(
                f"{self.name}: path {k} expects {ci} input channels, got {x.shape[-1]}"
            )
        w = self.w.value[:ci] if ci < self.spec.c_in else self.w.value
        out, x2 = F.tconv2d_nhwc(x, w, self.spec.s, self.spec.p)
        self._cache = (x2, x.shape, ci)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x2, in_shape, ci = self._cache
        w = self.w.value[:ci] if ci < self.spec.c_in else self.w.value
        grad_x, grad_w = F.tconv2d_nhwc_backward(
            x2, in_shape, w, grad_out, self.spec.s, self.spec.p
        )
        self.w.grad[:ci] += grad_w
        self._cache = None
        return grad_x

    def params(self):
        return [self.w]

    def state_items(self):
        return [("w", self.w.value)]

    def param_count(self) -> int:
        return self.w.value.size

    def flops(self, h: int, w: int, k: int) -> int:
        # counted on the input grid: every input element drives c_out*f^2 MACs
        return 2 * self._used(k) * self.spec.f**2 * self.spec.c_out * h * w


class SwitchableBatchNorm:
    """K parallel batch-norm parameter/statistics sets, one per path.

    Path k normalizes with that path's batch statistics in training
    (sigma is the biased standard deviation, denominator sigma + eps)
    and with its running estimates in eval; no other path's state is
    read or written. ``dims[k-1]`` is path k's channel count, which
    only differs across paths right after the width-switched layers.
    """

    def __init__(
        self,
        dims: tuple[int, ...],
        momentum: float = 0.1,
        eps: float = 1e-5,
        name: str = "bn",
    ):
        self.dims = tuple(dims)
        self.momentum = momentum
        self.eps = eps
        self.name = name
        self.gamma = [Param(np.ones(d), f"{name}.gamma{i + 1}") for i, d in enumerate(self.dims)]
        self.beta = [Param(np.zeros(d), f"{name}.beta{i + 1}") for i, d in enumerate(self.dims)]
        self.running_mean = [np.zeros(d) for d in self.dims]
        self.running_std = [np.ones(d) for d in self.dims]
        self._cache = None

    @property
    def paths(self) -> int:
        return len(self.dims)

    def _path(self, k: int) -> int:
        if self.paths == 1:
            return 0
        if not 1 <= k <= self.paths:
            raise ValueError(f"{self.name}: path {k} outside [1:{self.paths}]")
        return k - 1

    def forward(
        self,
        x: np.ndarray,
        k: int,
        training: bool,
        update_running: bool = True,
    ) -> np.ndarray:
        i = self._path(k)
        d = self.dims[i]
        if x.shape[-1] != d:
            raise ValueError(
                f"{self.name}: path {k} expects {d} channels, got {x.shape[-1]}"
            )
        gamma, beta = self.gamma[i].value, self.beta[i].value
        red = tuple(range(x.ndim - 1))
        if training:
            n = x.size // d
            if n < 2:
                raise ValueError(
                    f"{self.name}: need at least 2 values per channel to "
                    f"normalize, got {n}"
                )
            mu = x.mean(axis=red)
            # biased variance via E[x^2] - mu^2; the clamp absorbs the
            # tiny negative residue cancellation can leave
            sq = _channel_dot(x, x) / n
            sigma = np.sqrt(np.maximum(sq - mu * mu, 0.0))
            denom = sigma + self.eps
            xhat = x - mu
            xhat *= 1.0 / denom
            if update_running:
                m = self.momentum
                self.running_mean[i] *= 1 - m
                self.running_mean[i] += m * mu
                self.running_std[i] *= 1 - m
                self.running_std[i] += m * sigma
            self._cache = (i, xhat, sigma, denom, n, red)
            out = gamma * xhat
            out += beta
            return out
        gamma_eff = gamma / (self.running_std[i] + self.eps)
        beta_eff = beta - gamma_eff * self.running_mean[i]
        self._cache = (i, x, gamma_eff, red)
        return gamma_eff * x + beta_eff

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError(f"{self.name}: backward without matching forward")
        if len(self._cache) == 4:  # eval-mode affine
            i, x, gamma_eff, red = self._cache
            xhat_eval = (x - self.running_mean[i]) / (self.running_std[i] + self.eps)
            self.gamma[i].grad += (grad_out * xhat_eval).sum(axis=red)
            self.beta[i].grad += grad_out.sum(axis=red)
            self._cache = None
            return gamma_eff * grad_out
        i, xhat, sigma, denom, n, red = self._cache
        g_sum = grad_out.sum(axis=red)
        gx_sum = _channel_dot(grad_out, xhat)
        self.gamma[i].grad += gx_sum
        self.beta[i].grad += g_sum
        sigma_safe = np.where(sigma > 0.0, sigma, 1.0)
        coeff = self.gamma[i].value / denom
        grad_x = coeff * grad_out
        grad_x -= coeff * (g_sum / n)
        grad_x -= (coeff * (denom / sigma_safe) * (gx_sum / n)) * xhat
        self._cache = None
        return grad_x

    def params(self):
        return [*self.gamma, *self.beta]

    def state_items(self):
        items = []
        for i in range(self.paths):
            items.append((f"gamma{i + 1}", self.gamma[i].value))
            items.append((f"beta{i + 1}", self.beta[i].value))
            items.append((f"running_mean{i + 1}", self.running_mean[i]))
            items.append((f"running_std{i + 1}", self.running_std[i]))
        return items

    def load_state_item(self, suffix: str, value: np.ndarray) -> None:
        kind = suffix.rstrip("0123456789")
        i = int(suffix[len(kind):]) - 1
        if kind == "gamma":
            self.gamma[i].value[...] = value
        elif kind == "beta":
            self.beta[i].value[...] = value
        elif kind == "running_mean":
            self.running_mean[i][...] = value
        elif kind == "running_std":
            self.running_std[i][...] = value
        else:
            raise KeyError(suffix)

    def param_count(self) -> int:
        return 2 * sum(self.dims)

    def flops(self, h: int, w: int, k: int) -> int:
        return 0


class ReLU:
    def __init__(self, name: str = "relu"):
        self.name = name
        self._x = None

    def forward(self, x: np.ndarray, k: int, training: bool) -> np.ndarray:
        self._x = x
        return F.relu(x)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return F.relu_backward(self._x, grad_out)

    def active_masks(self):
        yield self._x > 0.0

    def params(self):
        return []

    def state_items(self):
        return []

    def param_count(self) -> int:
        return 0

    def flops(self, h: int, w: int, k: int) -> int:
        return 0


class Tanh:
    def __init__(self, name: str = "tanh"):
        self.name = name
        self._y = None

    def forward(self, x: np.ndarray, k: int, training: bool) -> np.ndarray:
        self._y = F.tanh(x)
        return self._y

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return F.tanh_backward(self._y, grad_out)

    def params(self):
        return []

    def state_items(self):
        return []

    def param_count(self) -> int:
        return 0

    def flops(self, h: int, w: int, k: int) -> int:
        return 0


class SpatialToFeatures:
    """(B, h, w, d) -> (B, h*w, d): one feature vector per spatial site,
    sites flattened row-major. A pure reshape in this layout."""

    def __init__(self, name: str = "to_features"):
        self.name = name
        self._shape = None

    def forward(self, x: np.ndarray, k: int, training: bool) -> np.ndarray:
        b, h, w, d = x.shape
        self._shape = x.shape
        return x.reshape(b, h * w, d)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return grad_out.reshape(self._shape)

    def params(self):
        return []

    def state_items(self):
        return []

    def param_count(self) -> int:
        return 0

    def flops(self, h: int, w: int, k: int) -> int:
        return 0


class FeaturesToSpatial:
    """(B, N, d) -> (B, h, w, d) with N == h*w; inverse of SpatialToFeatures."""

    def __init__(self, h: int, w: int, name: str = "to_spatial"):
        self.h = h
        self.w = w
        self.name = name

    def forward(self, x: np.ndarray, k: int, training: bool) -> np.ndarray:
        b, n, d = x.shape
        if n != self.h * self.w:
            raise ValueError(
                f"{self.name}: {n} feature vectors do not tile {self.h}x{self.w}"
            )
        return x.reshape(b, self.h, self.w, d)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        b, h, w, d = grad_out.shape
        return grad_out.reshape(b, h * w, d)

    def params(self):
        return []

    def state_items(self):
        return []

    def param_count(self) -> int:
        return 0

    def flops(self, h: int, w: int, k: int) -> int:
        return 0


class Residual:
    """Identity skip around a small branch, ReLU after the addition."""

    def __init__(self, branch: list, name: str = "res"):
        self.branch = branch
        self.name = name
        self._pre = None

    def forward(self, x: np.ndarray, k: int, training: bool, **bn_kwargs) -> np.ndarray:
        r = x
        for layer in self.branch:
            if isinstance(layer, SwitchableBatchNorm):
                r = layer.forward(r, k, training, **bn_kwargs)
            else:
                r = layer.forward(r, k, training)
        self._pre = r + x
        return F.relu(self._pre)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        g = F.relu_backward(self._pre, grad_out)
        gb = g
        for layer in reversed(self.branch):
            gb = layer.backward(gb)
        return gb + g

    def active_masks(self):
        for layer in self.branch:
            if hasattr(layer, "active_masks"):
                yield from layer.active_masks()
        yield self._pre > 0.0

    def params(self):
        out = []
        for layer in self.branch:
            out.extend(layer.params())
        return out

    def state_items(self):
        items = []
        for i, layer in enumerate(self.branch):
            for suffix, value in layer.state_items():
                items.append((f"{i}.{suffix}", value))
        return items

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.branch)

    def flops(self, h: int, w: int, k: int) -> int:
        # branch layers here are all spatial-size preserving
        return sum(layer.flops(h, w, k) for layer in self.branch)
