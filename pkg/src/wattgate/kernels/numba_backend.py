"""Numba-jitted kernels. Gathers run as explicit loops; the contractions
still go through BLAS (np.dot inside nopython code), so results match the
numpy backend bit for bit on the matmul outputs.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _gather_cols(x, width):
    b, length, ch = x.shape
    out_len = length - width + 1
    cols = np.empty((b * out_len, width * ch))
    for i in range(b):
        for t in range(out_len):
            r = i * out_len + t
            for j in range(width):
                for c in range(ch):
                    cols[r, j * ch + c] = x[i, t + j, c]
    return cols


@njit(cache=True)
def conv1d_forward(x, kernel, bias):
    width, in_ch, out_ch = kernel.shape
    b, length, _ = x.shape
    out_len = length - width + 1
    cols = _gather_cols(x, width)
    kmat = np.ascontiguousarray(kernel).reshape(width * in_ch, out_ch)
    out = np.dot(cols, kmat)
    for r in range(b * out_len):
        for o in range(out_ch):
            out[r, o] += bias[o]
    return out.reshape(b, out_len, out_ch)


@njit(cache=True)
def conv1d_backward(x, kernel, grad_out):
    width, in_ch, out_ch = kernel.shape
    b, length, _ = x.shape
    out_len = length - width + 1
    g2 = np.ascontiguousarray(grad_out).reshape(b * out_len, out_ch)

    grad_bias = np.zeros(out_ch)
    for r in range(b * out_len):
        for o in range(out_ch):
            grad_bias[o] += g2[r, o]

    cols = _gather_cols(x, width)
    grad_kernel = np.dot(cols.T, g2).reshape(width, in_ch, out_ch)

    gpad = np.zeros((b, out_len + 2 * (width - 1), out_ch))
    for i in range(b):
        for t in range(out_len):
            for o in range(out_ch):
                gpad[i, width - 1 + t, o] = grad_out[i, t, o]
    kflip = np.empty((width * out_ch, in_ch))
    for j in range(width):
        for o in range(out_ch):
            for c in range(in_ch):
                kflip[j * out_ch + o, c] = kernel[width - 1 - j, c, o]
    gcols = _gather_cols(gpad, width)
    grad_x = np.dot(gcols, kflip).reshape(b, length, in_ch)
    return grad_x, grad_kernel, grad_bias


@njit(cache=True)
def adam_update(param, grad, m, v, lr, beta1, beta2, eps, corr1, corr2):
    n = param.size
    p = param.reshape(n)
    g = grad.reshape(n)
    mm = m.reshape(n)
    vv = v.reshape(n)
    for i in range(n):
        mm[i] = beta1 * mm[i] + (1.0 - beta1) * g[i]
        vv[i] = beta2 * vv[i] + (1.0 - beta2) * (g[i] * g[i])
        p[i] -= lr * (mm[i] / corr1) / (np.sqrt(vv[i] / corr2) + eps)
