"""Pure-numpy kernels: im2col gathers feeding BLAS matmuls.

Array layouts match the numba backend exactly:
  x        [batch, length, channels]   C-contiguous float64
  kernel   [width, in_ch, out_ch]
  bias     [out_ch]
"""

import numpy as np


def _im2col(x, width):
    # [batch, length, ch] -> [batch*out_len, width*ch], window rows ordered
    # (batch, position), columns ordered (tap, channel).
    win = np.lib.stride_tricks.sliding_window_view(x, width, axis=1)
    b, out_len, ch, _ = win.shape
    return win.transpose(0, 1, 3, 2).reshape(b * out_len, width * ch)


def conv1d_forward(x, kernel, bias):
    width, in_ch, out_ch = kernel.shape
    b, length, _ = x.shape
    out_len = length - width + 1
    cols = _im2col(x, width)
    out = cols @ kernel.reshape(width * in_ch, out_ch) + bias
    return np.ascontiguousarray(out.reshape(b, out_len, out_ch))


def conv1d_backward(x, kernel, grad_out):
    """Gradients of a valid stride-1 convolution.

    Returns (grad_x, grad_kernel, grad_bias). grad_x is the full
    correlation of grad_out with the tap-reversed, channel-transposed
    kernel, realised as one more im2col matmul over the zero-padded
    output gradient.
    """
    width, in_ch, out_ch = kernel.shape
    b, length, _ = x.shape
    out_len = length - width + 1
    g2 = grad_out.reshape(b * out_len, out_ch)

    grad_bias = g2.sum(axis=0)
    grad_kernel = (_im2col(x, width).T @ g2).reshape(width, in_ch, out_ch)

    gpad = np.zeros((b, out_len + 2 * (width - 1), out_ch))
    gpad[:, width - 1:width - 1 + out_len, :] = grad_out
    kflip = kernel[::-1].transpose(0, 2, 1)  # [width, out_ch, in_ch]
    grad_x = _im2col(gpad, width) @ np.ascontiguousarray(kflip).reshape(width * out_ch, in_ch)
    return np.ascontiguousarray(grad_x.reshape(b, length, in_ch)), grad_kernel, grad_bias


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, corr1, corr2):
    """One in-place Adam update. corr1/corr2 are the bias corrections 1-beta^t.

    The elementwise expression order matches the numba backend so both
    produce identical floating-point results.
    """
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    param -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)
