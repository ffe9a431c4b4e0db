"""Learned vector quantization tied to the modulation plan.

One codebook per modulation order k: m_k codewords of dimension D_k
(the model-efficient baseline standardizes every codebook to D_K).
Quantization is exact nearest-codeword search with ties broken toward
the smaller index, so the transmitted symbol index is just the
codeword index. Codebooks are trained purely by the loss terms below;
the quantizer itself is crossed by the straight-through estimator,
which copies the gradient arriving at the quantized values back onto
the encoder output unchanged.
"""

from dataclasses import dataclass, field

import numpy as np

from ujscc.channel import ModulationPlan, nearest_rows
from ujscc.nn.layers import Param

class Codebook:
    """m codewords of dimension dim for 1-based modulation order index k."""

    def __init__(self, order_index: int, values: np.ndarray):
        self.order_index = order_index
        self.param = Param(np.asarray(values, dtype=np.float64), name=f"codebook{order_index}")

    @property
    def values(self) -> np.ndarray:
        return self.param.value

    @property
    def grad(self) -> np.ndarray:
        return self.param.grad

    @property
    def m(self) -> int:
        return self.param.value.shape[0]

    @property
    def dim(self) -> int:
        return self.param.value.shape[1]


def init_codebooks(
    plan: ModulationPlan,
    rng: np.random.Generator,
    shared_dim: int | None = None,
) -> list[Codebook]:
    """Codewords i.i.d. uniform on [-1, 1], matching the tanh-bounded
    encoder output range. ``shared_dim`` forces every codebook to that
    dimension (model-efficient baseline)."""
    books = []
    for k, (m, d) in enumerate(zip(plan.orders, plan.dims), start=1):
        dim = shared_dim if shared_dim is not None else d
        books.append(Codebook(k, rng.uniform(-1.0, 1.0, size=(m, dim))))
    return books


def quantize(y: np.ndarray, codebook: Codebook) -> np.ndarray:
    """Nearest-codeword index (0-based) per row of y, smallest index on ties."""
    if y.ndim != 2 or y.shape[1] != codebook.dim:
        raise ValueError(
            f"quantize: rows of dimension {y.shape[-1] if y.ndim else '?'} "
            f"vs codebook dimension {codebook.dim}"
        )
    return nearest_rows(y, codebook.values)


def dequantize(z: np.ndarray, codebook: Codebook) -> np.ndarray:
    """Row i of the result is codeword z[i]."""
    z = np.asarray(z)
    if z.size and (z.min() < 0 or z.max() >= codebook.m):
        raise ValueError(f"index out of range for codebook of size {codebook.m}")
    return codebook.values[z]


def straight_through(y: np.ndarray, y_hat: np.ndarray) -> np.ndarray:
    """Forward value of the straight-through estimator: exactly y_hat.

    The backward contract is ``straight_through_backward``: whatever
    gradient lands on the output is delivered to y bit-unchanged, and
    nothing flows to y_hat along this edge.
    """
    if y.shape != y_hat.shape:
        raise ValueError(f"straight-through shapes differ: {y.shape} vs {y_hat.shape}")
    return y_hat


def straight_through_backward(grad_out: np.ndarray) -> np.ndarray:
    return grad_out


@dataclass
class VqLossTerms:
    """The two quantization MSE terms.

    Both compare y with y_hat and are therefore equal in value; they
    exist separately because of where their gradients go. The codebook
    term treats y as frozen and moves only the selected codewords; the
    commitment term treats y_hat as frozen and moves only the encoder.
    """

    codebook_term: float
    commitment_term: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.commitment_term is None:
            self.commitment_term = self.codebook_term


def vq_losses(y: np.ndarray, y_hat: np.ndarray) -> VqLossTerms:
    if y.shape != y_hat.shape:
        raise ValueError(f"vq loss shapes differ: {y.shape} vs {y_hat.shape}")
    e = float(np.mean((y_hat - y) ** 2))
    return VqLossTerms(codebook_term=e, commitment_term=e)


def codebook_term_grad(y: np.ndarray, y_hat: np.ndarray) -> np.ndarray:
    """d(codebook term)/d(y_hat); y is stop-gradient."""
    return 2.0 * (y_hat - y) / y.size


def commitment_term_grad(y: np.ndarray, y_hat: np.ndarray) -> np.ndarray:
    """d(commitment term)/d(y); y_hat is stop-gradient."""
    return 2.0 * (y - y_hat) / y.size


def accumulate_codebook_grad(
    codebook: Codebook, z: np.ndarray, grad_rows: np.ndarray
) -> None:
    """Scatter-add per-row gradients onto the codewords they came from."""
    np.add.at(codebook.grad, z, grad_rows)


def codebook_usage(z: np.ndarray, m: int) -> np.ndarray:
    """How often each codeword was selected; a diagnostic for dead
    codewords (no reinitialization is performed anywhere)."""
    return np.bincount(np.asarray(z).ravel(), minlength=m)
