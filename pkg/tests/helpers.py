"""Shared test utilities: finite-difference oracles and error measures."""

import numpy as np

from wattgate.autodiff import Tape, Tensor, backward


def rel_err_max(a, b, floor=1e-8):
    """Max elementwise relative error with a symmetric denominator."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.abs(a) + np.abs(b), floor)
    return float(np.max(np.abs(a - b) / denom))


def central_diff(f, x, eps=1e-6):
    """Coordinate-wise central differences of a scalar function of one array."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        xp = x.copy().reshape(-1)
        xp[i] = orig + eps
        xm = x.copy().reshape(-1)
        xm[i] = orig - eps
        gf[i] = (f(xp.reshape(x.shape)) - f(xm.reshape(x.shape))) / (2.0 * eps)
    return g


def gradcheck(build, arrays, eps=1e-6, tol=1e-4):
    """Compare tape gradients of build(*tensors) -> scalar Tensor against
    central differences through the same forward computation.

    Returns the worst relative error across all inputs.
    """
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    with Tape():
        loss = build(*tensors)
        backward(loss)
    grads = [t.grad.copy() if t.grad is not None else np.zeros_like(t.values)
             for t in tensors]

    worst = 0.0
    for idx in range(len(arrays)):
        def f(x, idx=idx):
            args = [Tensor(a) for a in arrays]
            args[idx] = Tensor(x)
            return build(*args).item()

        num = central_diff(f, arrays[idx], eps)
        worst = max(worst, rel_err_max(grads[idx], num))
    return worst


def directional_check(build, arrays, rng, eps=1e-6):
    """Directional-derivative check for larger graphs: compares
    sum_i <grad_i, d_i> against a central difference along a random
    joint direction. Returns the relative error."""
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    with Tape():
        loss = build(*tensors)
        backward(loss)
    dirs = [rng.normal(size=a.shape) for a in arrays]
    norm = np.sqrt(sum(float((d * d).sum()) for d in dirs))
    dirs = [d / norm for d in dirs]
    analytic = sum(
        float((t.grad * d).sum()) for t, d in zip(tensors, dirs) if t.grad is not None)

    def f(shift):
        args = [Tensor(a + shift * d) for a, d in zip(arrays, dirs)]
        return build(*args).item()

    numeric = (f(eps) - f(-eps)) / (2.0 * eps)
    return rel_err_max(np.array([analytic]), np.array([numeric]))
