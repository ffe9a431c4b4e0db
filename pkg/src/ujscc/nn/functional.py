"""Raw conv / transpose-conv / activation kernels with explicit backwards.

Convolutions are im2col + one BLAS matmul; the transpose convolution is
the exact linear adjoint of the convolution (col2im scatter), so
``<conv2d(x, w), y> == <x, tconv2d(y, w)>`` holds to roundoff. Weight
layouts: conv ``(c_out, c_in, f, f)``, tconv ``(c_in, c_out, f, f)``;
the same array serves both sides of the adjoint identity.

The compute kernels work channels-last (B, H, W, C), which makes the
unfold/fold steps contiguous strip copies and the feature reshape a
view; the channels-first entry points below are thin wrappers around
them and define the public tensor contract.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_out_size(size: int, f: int, s: int, p: int) -> int:
    return (size + 2 * p - f) // s + 1


def tconv_out_size(size: int, f: int, s: int, p: int) -> int:
    return (size - 1) * s - 2 * p + f


def _check_channels(what: str, got: int, want: int) -> None:
    if got != want:
        raise ValueError(f"{what}: input has {got} channels, weight expects {want}")


# -- channels-last kernels -----------------------------------------------------


def im2col_nhwc(x: np.ndarray, f: int, s: int, p: int) -> tuple[np.ndarray, int, int]:
    """Unfold (B,H,W,C) into receptive-field rows (B*Ho*Wo, f*f*C)."""
    b, h, w, c = x.shape
    ho, wo = conv_out_size(h, f, s, p), conv_out_size(w, f, s, p)
    if ho <= 0 or wo <= 0:
        raise ValueError(
            f"conv: spatial input {h}x{w} too small for kernel {f}, "
            f"stride {s}, padding {p}"
        )
    if f == 1 and s == 1 and p == 0:
        return x.reshape(b * h * w, c), ho, wo
    if p:
        x = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    win = sliding_window_view(x, (f, f), axis=(1, 2))[:, ::s, ::s]
    # (B,Ho,Wo,C,f,f) -> rows ordered (f,f,C)
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))
    return cols.reshape(b * ho * wo, f * f * c), ho, wo


def col2im_nhwc(
    cols: np.ndarray, out_shape: tuple[int, int, int, int], f: int, s: int, p: int
) -> np.ndarray:
    """Adjoint of im2col_nhwc: scatter-add rows onto a (B,H,W,C) canvas."""
    b, h, w, c = out_shape
    ho, wo = conv_out_size(h, f, s, p), conv_out_size(w, f, s, p)
    if f == 1 and s == 1 and p == 0:
        return cols.reshape(b, h, w, c)
    canvas = np.zeros((b, h + 2 * p, w + 2 * p, c))
    cols6 = cols.reshape(b, ho, wo, f, f, c)
    for i in range(f):
        for j in range(f):
            canvas[:, i : i + s * ho : s, j : j + s * wo : s, :] += cols6[:, :, :, i, j, :]
    return canvas[:, p : p + h, p : p + w, :] if p else canvas


def _as_conv_matrix(w: np.ndarray) -> np.ndarray:
    """(c_out, c_in, f, f) -> (f*f*c_in, c_out) matching im2col row order."""
    co = w.shape[0]
    return np.ascontiguousarray(w.transpose(2, 3, 1, 0)).reshape(-1, co)


def _as_tconv_matrix(w: np.ndarray) -> np.ndarray:
    """(c_in, c_out, f, f) -> (c_in, f*f*c_out) matching col2im row order."""
    ci = w.shape[0]
    return np.ascontiguousarray(w.transpose(0, 2, 3, 1)).reshape(ci, -1)


def conv2d_nhwc(
    x: np.ndarray, w: np.ndarray, s: int, p: int
) -> tuple[np.ndarray, np.ndarray]:
    """(B,H,W,c_in) * (c_out,c_in,f,f) -> (B,Ho,Wo,c_out) plus cached rows."""
    co, ci, f, _ = w.shape
    _check_channels("conv2d", x.shape[-1], ci)
    b = x.shape[0]
    cols, ho, wo = im2col_nhwc(x, f, s, p)
    out = cols @ _as_conv_matrix(w)
    return out.reshape(b, ho, wo, co), cols


def conv2d_nhwc_backward(
    cols: np.ndarray,
    x_shape: tuple[int, int, int, int],
    w: np.ndarray,
    grad_out: np.ndarray,
    s: int,
    p: int,
) -> tuple[np.ndarray, np.ndarray]:
    co, ci, f, _ = w.shape
    g2 = grad_out.reshape(-1, co)
    # (f*f*c_in, c_out) -> back to (c_out, c_in, f, f)
    gw_mat = cols.T @ g2
    grad_w = np.ascontiguousarray(
        gw_mat.reshape(f, f, ci, co).transpose(3, 2, 0, 1)
    )
    grad_x = col2im_nhwc(g2 @ _as_conv_matrix(w).T, x_shape, f, s, p)
    return grad_x, grad_w


def tconv2d_nhwc(
    x: np.ndarray, w: np.ndarray, s: int, p: int
) -> tuple[np.ndarray, np.ndarray]:
    """(B,h,w,c_in) * (c_in,c_out,f,f) -> (B,Ho,Wo,c_out) plus cached rows."""
    ci, co, f, _ = w.shape
    _check_channels("tconv2d", x.shape[-1], ci)
    b, h, wd, _ = x.shape
    ho, wo = tconv_out_size(h, f, s, p), tconv_out_size(wd, f, s, p)
    if ho <= 0 or wo <= 0:
        raise ValueError(
            f"tconv: spatial input {h}x{wd} too small for kernel {f}, "
            f"stride {s}, padding {p}"
        )
    x2 = x.reshape(-1, ci)
    cols = x2 @ _as_tconv_matrix(w)
    return col2im_nhwc(cols, (b, ho, wo, co), f, s, p), x2


def tconv2d_nhwc_backward(
    x2: np.ndarray,
    in_shape: tuple[int, int, int, int],
    w: np.ndarray,
    grad_out: np.ndarray,
    s: int,
    p: int,
) -> tuple[np.ndarray, np.ndarray]:
    ci, co, f, _ = w.shape
    b, h, wd, _ = in_shape
    cols_g, ho, wo = im2col_nhwc(grad_out, f, s, p)
    if (ho, wo) != (h, wd):
        raise ValueError(
            f"tconv backward: grad_out spatial {grad_out.shape[1:3]} inconsistent "
            f"with input spatial ({h}, {wd})"
        )
    grad_x = (cols_g @ _as_tconv_matrix(w).T).reshape(b, h, wd, ci)
    gw_mat = x2.T @ cols_g  # (c_in, f*f*c_out)
    grad_w = np.ascontiguousarray(
        gw_mat.reshape(ci, f, f, co).transpose(0, 3, 1, 2)
    )
    return grad_x, grad_w


# -- channels-first entry points ------------------------------------------------


def to_channels_last(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x.transpose(0, 2, 3, 1))


def to_channels_first(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x.transpose(0, 3, 1, 2))


def im2col(x: np.ndarray, f: int, s: int, p: int) -> tuple[np.ndarray, int, int]:
    """Channels-first wrapper; rows ordered (f, f, c_in) as in the kernels."""
    return im2col_nhwc(to_channels_last(x), f, s, p)


def col2im(
    cols: np.ndarray, out_shape: tuple[int, int, int, int], f: int, s: int, p: int
) -> np.ndarray:
    b, c, h, w = out_shape
    return to_channels_first(col2im_nhwc(cols, (b, h, w, c), f, s, p))


def conv2d(
    x: np.ndarray, w: np.ndarray, s: int, p: int
) -> tuple[np.ndarray, np.ndarray]:
    """Cross-correlation of (B,c_in,H,W) with (c_out,c_in,f,f), no bias.

    Returns the output and the unfolded-input rows (reused by the
    backward).
    """
    out, cols = conv2d_nhwc(to_channels_last(x), w, s, p)
    return to_channels_first(out), cols


def conv2d_backward(
    cols: np.ndarray,
    x_shape: tuple[int, int, int, int],
    w: np.ndarray,
    grad_out: np.ndarray,
    s: int,
    p: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of conv2d w.r.t. input and weight, given cached rows."""
    b, c, h, wd = x_shape
    grad_x, grad_w = conv2d_nhwc_backward(
        cols, (b, h, wd, c), w, to_channels_last(grad_out), s, p
    )
    return to_channels_first(grad_x), grad_w


def tconv2d(
    x: np.ndarray, w: np.ndarray, s: int, p: int
) -> tuple[np.ndarray, np.ndarray]:
    """Transpose convolution of (B,c_in,h,w) with (c_in,c_out,f,f).

    Each input channel is spread through its own (c_out,f,f) filter onto
    the upsampled canvas and the contributions are summed; output spatial
    size is ``(h-1)*s - 2p + f``.
    """
    out, x2 = tconv2d_nhwc(to_channels_last(x), w, s, p)
    return to_channels_first(out), x2


def tconv2d_backward(
    x2: np.ndarray,
    in_shape: tuple[int, int, int, int],
    w: np.ndarray,
    grad_out: np.ndarray,
    s: int,
    p: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of tconv2d w.r.t. input and weight.

    The input gradient is a plain convolution of grad_out with the same
    weight; the weight gradient pairs cached input rows with the
    unfolded grad_out.
    """
    b, c, h, wd = in_shape
    grad_x, grad_w = tconv2d_nhwc_backward(
        x2, (b, h, wd, c), w, to_channels_last(grad_out), s, p
    )
    return to_channels_first(grad_x), grad_w


# -- activations -----------------------------------------------------------------


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, grad_out, 0.0)


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def tanh_backward(y: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Backward through tanh given the forward *output* y."""
    return grad_out * (1.0 - y * y)
