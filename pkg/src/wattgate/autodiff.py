"""Reverse-mode automatic differentiation over dense float64 arrays.

The op set covers exactly what the gated convolutional models need:
valid 1-D convolution, affine layers, ReLU, sigmoid, elementwise
arithmetic, the reductions used by the losses, and a non-differentiable
hard threshold. Every op executed under an active Tape records a
backward rule; Tape.backward replays the records in reverse and
accumulates gradients on the participating tensors.

Every op output is checked for NaN/Inf at creation, and every gradient
contribution is checked during the backward sweep; a violation raises
NumericalError rather than propagating silently.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ConfigurationError, NumericalError, UsageError

# Benchmarks may flip this off to measure raw kernel cost; the library
# itself always runs with checks on.
FINITE_CHECKS = True

_SIGMOID_LO = np.nextafter(0.0, 1.0)
_SIGMOID_HI = np.nextafter(1.0, 0.0)


class Tensor:
    """A dense float64 array plus gradient bookkeeping.

    Treat values as frozen once the tensor has entered a graph; the
    optimizer mutates leaf parameters only between tapes.
    """

    __slots__ = ("values", "requires_grad", "grad", "tape")

    def __init__(self, values, requires_grad=False):
        arr = np.ascontiguousarray(values, dtype=np.float64)
        if FINITE_CHECKS and not np.isfinite(arr).all():
            raise NumericalError("tensor created with non-finite values")
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.tape = None

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self):
        return self.values.size

    def item(self):
        if self.values.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Small amount of operator sugar for readable model code.
    def __mul__(self, other):
        if isinstance(other, Tensor):
            return elementwise_mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_const(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return add_const(self, -float(other))


_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered record of executed ops, replayed in reverse by backward()."""

    def __init__(self):
        self._records = []  # (output tensor, backward callable)
        self._used = False

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def backward(self, loss: Tensor):
        if loss.size != 1:
            raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.tape is not self:
            raise UsageError("loss tensor was not recorded on this tape")
        if self._used:
            raise UsageError("backward already ran on this tape; build a fresh tape")
        self._used = True
        loss.grad = np.ones_like(loss.values)
        for out, rule in reversed(self._records):
            if out.grad is not None:
                rule(out.grad)
        # The records close over every intermediate tensor while each tensor
        # points back at this tape, so a spent graph is one big reference
        # cycle. A tape is single-use; dropping the records here breaks the
        # cycle and lets plain refcounting free the activations, instead of
        # letting multi-megabyte graphs pile up until the cyclic collector
        # notices them.
        self._records.clear()


def _active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def backward(loss: Tensor):
    """Run the backward sweep of the tape that produced `loss`."""
    if loss.tape is None:
        raise UsageError("loss tensor is not attached to a tape (was it computed under one?)")
    loss.tape.backward(loss)


def _accum(t: Tensor, g: np.ndarray, own: bool):
    """Add a gradient contribution to t. `own` means g is a fresh array
    the rule will not touch again, safe to adopt without copying."""
    if not t.requires_grad:
        return
    if FINITE_CHECKS and not np.isfinite(g).all():
        raise NumericalError("non-finite gradient encountered during backward")
    if t.grad is None:
        t.grad = g if own else g.copy()
    else:
        t.grad += g


def _record(values: np.ndarray, inputs, rule) -> Tensor:
    """Wrap an op result, registering `rule` on the active tape when any
    input participates in differentiation."""
    tape = _active_tape()
    req = any(t.requires_grad for t in inputs)
    for t in inputs:
        if t.tape is not None and tape is not None and t.tape is not tape:
            raise UsageError("input tensor belongs to a different tape")
    out = Tensor(values, requires_grad=req)
    if req and tape is not None:
        out.tape = tape
        tape._records.append((out, rule(out)))
    return out


def _check_ndim(t: Tensor, ndim: int, what: str):
    if t.values.ndim != ndim:
        raise ConfigurationError(f"{what} must be {ndim}-d, got shape {t.shape}")


def conv1d_valid(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Valid (no padding) stride-1 convolution.

    x [batch, length, in_ch], kernel [width, in_ch, out_ch], bias [out_ch]
    -> [batch, length - width + 1, out_ch].
    """
    _check_ndim(x, 3, "conv input")
    _check_ndim(kernel, 3, "conv kernel")
    _check_ndim(bias, 1, "conv bias")
    width, in_ch, out_ch = kernel.shape
    if x.shape[2] != in_ch:
        raise ConfigurationError(
            f"conv input has {x.shape[2]} channels, kernel expects {in_ch}")
    if bias.shape[0] != out_ch:
        raise ConfigurationError(
            f"conv bias has {bias.shape[0]} entries, kernel produces {out_ch} channels")
    if x.shape[1] < width:
        raise ConfigurationError(
            f"sequence length {x.shape[1]} shorter than filter width {width}")
    out = kernels.conv1d_forward(x.values, kernel.values, bias.values)

    def rule(out_t):
        def bwd(g):
            gx, gk, gb = kernels.conv1d_backward(
                x.values, kernel.values, np.ascontiguousarray(g))
            _accum(x, gx, own=True)
            _accum(kernel, gk, own=True)
            _accum(bias, gb, own=True)
        return bwd

    return _record(out, (x, kernel, bias), rule)


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine layer: x [batch, n_in] @ weight [n_in, n_out] + bias [n_out]."""
    _check_ndim(x, 2, "dense input")
    _check_ndim(weight, 2, "dense weight")
    _check_ndim(bias, 1, "dense bias")
    if x.shape[1] != weight.shape[0]:
        raise ConfigurationError(
            f"dense input width {x.shape[1]} does not match weight rows {weight.shape[0]}")
    if bias.shape[0] != weight.shape[1]:
        raise ConfigurationError(
            f"dense bias width {bias.shape[0]} does not match weight cols {weight.shape[1]}")
    out = x.values @ weight.values + bias.values

    def rule(out_t):
        def bwd(g):
            _accum(x, g @ weight.values.T, own=True)
            _accum(weight, x.values.T @ g, own=True)
            _accum(bias, g.sum(axis=0), own=True)
        return bwd

    return _record(out, (x, weight, bias), rule)


def relu(x: Tensor) -> Tensor:
    """max(x, 0); the subgradient at exactly zero is taken as 0."""
    out = np.maximum(x.values, 0.0)

    def rule(out_t):
        def bwd(g):
            _accum(x, g * (x.values > 0.0), own=True)
        return bwd

    return _record(out, (x,), rule)


def sigmoid(x: Tensor) -> Tensor:
    """Numerically stable logistic; outputs are clamped into the open
    interval (0, 1) so downstream logs stay finite."""
    v = x.values
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    np.clip(out, _SIGMOID_LO, _SIGMOID_HI, out=out)

    def rule(out_t):
        def bwd(g):
            _accum(x, g * out_t.values * (1.0 - out_t.values), own=True)
        return bwd

    return _record(out, (x,), rule)


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ConfigurationError(f"elementwise_mul shape mismatch: {a.shape} vs {b.shape}")
    out = a.values * b.values

    def rule(out_t):
        def bwd(g):
            _accum(a, g * b.values, own=True)
            _accum(b, g * a.values, own=True)
        return bwd

    return _record(out, (a, b), rule)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ConfigurationError(f"add shape mismatch: {a.shape} vs {b.shape}")
    out = a.values + b.values

    def rule(out_t):
        def bwd(g):
            _accum(a, g, own=False)
            _accum(b, g, own=False)
        return bwd

    return _record(out, (a, b), rule)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ConfigurationError(f"sub shape mismatch: {a.shape} vs {b.shape}")
    out = a.values - b.values

    def rule(out_t):
        def bwd(g):
            _accum(a, g, own=False)
            _accum(b, -g, own=True)
        return bwd

    return _record(out, (a, b), rule)


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a python float constant."""
    c = float(c)
    out = x.values * c

    def rule(out_t):
        def bwd(g):
            _accum(x, g * c, own=True)
        return bwd

    return _record(out, (x,), rule)


def add_const(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out = x.values + c

    def rule(out_t):
        def bwd(g):
            _accum(x, g, own=False)
        return bwd

    return _record(out, (x,), rule)


def mul_scalar_tensor(x: Tensor, s: Tensor) -> Tensor:
    """Broadcast-multiply x by a single-element tensor (a learnable scalar)."""
    if s.size != 1:
        raise ConfigurationError(f"mul_scalar_tensor needs a single-element tensor, got {s.shape}")
    sval = float(s.values.reshape(-1)[0])
    out = x.values * sval

    def rule(out_t):
        def bwd(g):
            _accum(x, g * sval, own=True)
            _accum(s, np.full(s.shape, np.sum(g * x.values)), own=True)
        return bwd

    return _record(out, (x, s), rule)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(d) for d in shape)
    n = 1
    for d in shape:
        n *= d
    if n != x.size:
        raise ConfigurationError(f"cannot reshape {x.shape} ({x.size} elements) to {shape}")
    out = x.values.reshape(shape)

    def rule(out_t):
        def bwd(g):
            _accum(x, g.reshape(x.shape), own=False)
        return bwd

    return _record(out, (x,), rule)


def sum_all(x: Tensor) -> Tensor:
    # Scalars live as shape-(1,) tensors.
    out = np.asarray([x.values.sum()])

    def rule(out_t):
        def bwd(g):
            _accum(x, np.full(x.shape, g.reshape(-1)[0]), own=True)
        return bwd

    return _record(out, (x,), rule)


def mean_all(x: Tensor) -> Tensor:
    return scale(sum_all(x), 1.0 / x.size)


def log(x: Tensor) -> Tensor:
    if np.any(x.values <= 0.0):
        raise NumericalError("log of a non-positive value")
    out = np.log(x.values)

    def rule(out_t):
        def bwd(g):
            _accum(x, g / x.values, own=True)
        return bwd

    return _record(out, (x,), rule)


def bce_with_logits(logits: Tensor, labels: Tensor) -> Tensor:
    """Elementwise binary cross-entropy from logits, in the overflow-free
    form max(z,0) - z*y + log(1 + exp(-|z|)). Labels are constants."""
    if logits.shape != labels.shape:
        raise ConfigurationError(
            f"bce_with_logits shape mismatch: {logits.shape} vs {labels.shape}")
    if labels.requires_grad:
        raise UsageError("bce_with_logits treats labels as constants")
    z = logits.values
    y = labels.values
    out = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))

    def rule(out_t):
        def bwd(g):
            # d/dz = sigmoid(z) - y, computed stably.
            sig = np.empty_like(z)
            pos = z >= 0
            sig[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
            ez = np.exp(z[~pos])
            sig[~pos] = ez / (1.0 + ez)
            _accum(logits, g * (sig - y), own=True)
        return bwd

    return _record(out, (logits, labels), rule)


def hard_gate(x: Tensor, threshold: float = 0.5) -> Tensor:
    """Threshold to {0, 1}: 1 where x >= threshold. Non-differentiable;
    no gradient flows through it (the result is a constant)."""
    out = (x.values >= threshold).astype(np.float64)
    return Tensor(out, requires_grad=False)
