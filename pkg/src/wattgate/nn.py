"""Parameter handling, the training losses, Adam, and checkpoint IO."""

from __future__ import annotations

import json

import numpy as np

from . import autodiff, kernels
from .autodiff import Tensor
from .errors import ConfigurationError, DataError, UsageError


def he_init(shape, fan_in: int, rng: np.random.Generator) -> Tensor:
    """Weights drawn from Normal(0, 2/fan_in), the usual choice ahead of ReLU."""
    if fan_in <= 0:
        raise ConfigurationError(f"fan_in must be positive, got {fan_in}")
    values = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
    return Tensor(values, requires_grad=True)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


class ParameterSet:
    """Named, insertion-ordered collection of trainable tensors."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise ConfigurationError(f"duplicate parameter name {name!r}")
        tensor.requires_grad = True
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise UsageError(f"unknown parameter {name!r}") from None

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self):
        return list(self._params.values())

    def count(self) -> int:
        return sum(t.size for t in self._params.values())

    def clear_grads(self):
        for t in self._params.values():
            t.grad = None


def _check_pair(a: Tensor, b: Tensor, what: str):
    if a.shape != b.shape:
        raise ConfigurationError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def _batch_count(t: Tensor) -> int:
    # Sequences come as [length] or [batch, length]; losses average over
    # sequences, i.e. over everything except the trailing time axis.
    if t.values.ndim <= 1:
        return 1
    return int(np.prod(t.shape[:-1]))


def loss_output(y: Tensor, p_hat: Tensor, o_hat: Tensor) -> Tensor:
    """Mean squared error between y and the gated prediction p_hat * o_hat.

    The gradient reaching p_hat is scaled elementwise by o_hat (and vice
    versa), so the regression head learns mostly where the gate is open.
    """
    _check_pair(y, p_hat, "loss_output")
    _check_pair(y, o_hat, "loss_output")
    if np.any(o_hat.values < 0.0) or np.any(o_hat.values > 1.0):
        raise DataError("loss_output expects gate values in [0, 1]")
    r = autodiff.sub(y, autodiff.elementwise_mul(p_hat, o_hat))
    return autodiff.scale(autodiff.sum_all(autodiff.elementwise_mul(r, r)), 1.0 / y.size)


def loss_power(y: Tensor, p_hat: Tensor) -> Tensor:
    """Plain mean squared error in the normalized power domain."""
    _check_pair(y, p_hat, "loss_power")
    r = autodiff.sub(y, p_hat)
    return autodiff.scale(autodiff.sum_all(autodiff.elementwise_mul(r, r)), 1.0 / y.size)


def _validate_binary(o: Tensor):
    v = o.values
    if not np.all((v == 0.0) | (v == 1.0)):
        raise DataError("on/off labels must be exactly 0 or 1")


def loss_on(o: Tensor, o_hat: Tensor) -> Tensor:
    """Binary cross-entropy summed over time, averaged over sequences.

    Summing (not averaging) over the time axis keeps the classification
    term commensurate with a squared error that shrinks per-sample.
    Probabilities must lie strictly inside (0, 1); prefer
    loss_on_logits when the logits are available.
    """
    _check_pair(o, o_hat, "loss_on")
    _validate_binary(o)
    if np.any(o_hat.values <= 0.0) or np.any(o_hat.values >= 1.0):
        raise DataError("loss_on needs probabilities strictly inside (0, 1)")
    one_minus_o = Tensor(1.0 - o.values)
    one_minus_p = autodiff.add_const(autodiff.scale(o_hat, -1.0), 1.0)
    terms = autodiff.add(
        autodiff.elementwise_mul(Tensor(o.values), autodiff.log(o_hat)),
        autodiff.elementwise_mul(one_minus_o, autodiff.log(one_minus_p)),
    )
    return autodiff.scale(autodiff.sum_all(terms), -1.0 / _batch_count(o))


def loss_on_logits(o: Tensor, logits: Tensor) -> Tensor:
    """Same objective as loss_on but computed from logits, which keeps the
    value and gradient finite however saturated the sigmoid is."""
    _check_pair(o, logits, "loss_on_logits")
    _validate_binary(o)
    per_elem = autodiff.bce_with_logits(logits, Tensor(o.values))
    return autodiff.scale(autodiff.sum_all(per_elem), 1.0 / _batch_count(o))


def loss_joint(y: Tensor, p_hat: Tensor, o_hat: Tensor, o: Tensor,
               on_logits: Tensor | None = None) -> Tensor:
    """Unweighted sum of the regression and classification terms."""
    out = loss_output(y, p_hat, o_hat)
    if on_logits is not None:
        on = loss_on_logits(o, on_logits)
    else:
        on = loss_on(o, o_hat)
    return autodiff.add(out, on)


class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, params: ParameterSet, lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if not (0.0 < lr):
            raise ConfigurationError(f"learning rate must be positive, got {lr}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ConfigurationError("Adam betas must lie in [0, 1)")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = {name: np.zeros_like(t.values) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.values) for name, t in params.items()}


def adam_step(params: ParameterSet, state: AdamState):
    """Apply one Adam update in place and clear all gradients."""
    for name, t in params.items():
        if t.grad is None:
            raise UsageError(f"adam_step: parameter {name!r} has no gradient")
    state.step_count += 1
    corr1 = 1.0 - state.beta1 ** state.step_count
    corr2 = 1.0 - state.beta2 ** state.step_count
    for name, t in params.items():
        kernels.adam_update(
            t.values, np.ascontiguousarray(t.grad), state.m[name], state.v[name],
            state.lr, state.beta1, state.beta2, state.eps, corr1, corr2)
        t.grad = None


def save_checkpoint(path, params: ParameterSet, adam: AdamState | None = None,
                    rng: np.random.Generator | None = None, meta: dict | None = None):
    """Serialize parameters (and optionally optimizer state and RNG state)
    to a single .npz file. Round-trips bit for bit."""
    header = {
        "format_version": 1,
        "param_names": params.names(),
        "meta": meta or {},
        "adam": None,
        "rng_state": None,
    }
    arrays = {}
    for name, t in params.items():
        arrays["param." + name] = t.values
    if adam is not None:
        header["adam"] = {
            "lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2,
            "eps": adam.eps, "step_count": adam.step_count,
        }
        for name in params.names():
            arrays["adam_m." + name] = adam.m[name]
            arrays["adam_v." + name] = adam.v[name]
    if rng is not None:
        header["rng_state"] = rng.bit_generator.state
    arrays["header.json"] = np.frombuffer(
        json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_checkpoint(path):
    """Inverse of save_checkpoint.

    Returns (params, adam_or_none, rng_or_none, meta). Adam state is
    rebound to the loaded parameter tensors.
    """
    try:
        handle = np.load(path)
    except (OSError, ValueError) as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e
    with handle as data:
        if "header.json" not in data:
            raise DataError(f"{path}: not a checkpoint file (missing header)")
        header = json.loads(bytes(data["header.json"]).decode("utf-8"))
        params = ParameterSet()
        for name in header["param_names"]:
            params.add(name, Tensor(data["param." + name]))
        adam = None
        if header["adam"] is not None:
            h = header["adam"]
            adam = AdamState(params, lr=h["lr"], beta1=h["beta1"],
                             beta2=h["beta2"], eps=h["eps"])
            adam.step_count = int(h["step_count"])
            for name in header["param_names"]:
                adam.m[name] = np.ascontiguousarray(data["adam_m." + name])
                adam.v[name] = np.ascontiguousarray(data["adam_v." + name])
        rng = None
        if header["rng_state"] is not None:
            rng = np.random.default_rng()
            rng.bit_generator.state = header["rng_state"]
        return params, adam, rng, header["meta"]
