"""Model variants for window-based disaggregation.

The gated variants pair two identical convolutional subnetworks: one
regresses power for the s target samples, the other scores on/off
probability per sample, and the final output is their elementwise
product (optionally with a hard 0/1 gate and a learnable standby level
for the closed state). Baselines: a single regression subnetwork
(seq2seq) and a window-to-window denoising autoencoder (dae).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .errors import ConfigurationError

DEFAULT_CONV_STACK = ((10, 30), (8, 30), (6, 40), (5, 50), (5, 50), (5, 50))

VARIANTS = ("sgn", "sgn_sp", "hard_sgn", "hard_sgn_sp", "seq2seq", "dae")
GATED_VARIANTS = ("sgn", "sgn_sp", "hard_sgn", "hard_sgn_sp")


@dataclass(frozen=True)
class SubnetworkConfig:
    """Shape of one conv-then-dense subnetwork.

    input_len covers the target plus symmetric context; every conv layer
    is valid (no padding), stride 1, ReLU.
    """

    input_len: int
    output_len: int
    conv_stack: tuple[tuple[int, int], ...] = DEFAULT_CONV_STACK
    dense_width: int = 1024

    def __post_init__(self):
        if self.input_len < 1 or self.output_len < 1:
            raise ConfigurationError("subnetwork lengths must be positive")
        if self.dense_width < 1:
            raise ConfigurationError("dense width must be positive")
        if not self.conv_stack:
            raise ConfigurationError("conv stack must not be empty")
        for width, channels in self.conv_stack:
            if width < 1 or channels < 1:
                raise ConfigurationError(
                    f"bad conv layer (width {width}, channels {channels})")
        if self.conv_lengths()[-1] < 1:
            raise ConfigurationError(
                f"input of {self.input_len} samples is consumed by the conv "
                f"stack (lengths {self.conv_lengths()})")

    def conv_lengths(self) -> list[int]:
        lengths = []
        length = self.input_len
        for width, _ in self.conv_stack:
            length = length - width + 1
            lengths.append(length)
        return lengths

    def flat_width(self) -> int:
        return self.conv_lengths()[-1] * self.conv_stack[-1][1]


def init_subnetwork(params: nn.ParameterSet, prefix: str,
                    cfg: SubnetworkConfig, rng: np.random.Generator):
    """He-normal kernels/weights, zero biases, registered under prefix."""
    in_ch = 1
    for i, (width, channels) in enumerate(cfg.conv_stack, start=1):
        params.add(f"{prefix}.conv{i}.kernel",
                   nn.he_init((width, in_ch, channels), fan_in=width * in_ch, rng=rng))
        params.add(f"{prefix}.conv{i}.bias", nn.zeros((channels,)))
        in_ch = channels
    flat = cfg.flat_width()
    params.add(f"{prefix}.fc1.weight", nn.he_init((flat, cfg.dense_width), flat, rng))
    params.add(f"{prefix}.fc1.bias", nn.zeros((cfg.dense_width,)))
    params.add(f"{prefix}.fc2.weight",
               nn.he_init((cfg.dense_width, cfg.output_len), cfg.dense_width, rng))
    params.add(f"{prefix}.fc2.bias", nn.zeros((cfg.output_len,)))


def _subnetwork_logits(params: nn.ParameterSet, prefix: str,
                       cfg: SubnetworkConfig, x: Tensor) -> Tensor:
    if x.values.ndim != 2 or x.shape[1] != cfg.input_len:
        raise ConfigurationError(
            f"subnetwork expects input [batch, {cfg.input_len}], got {x.shape}")
    batch = x.shape[0]
    h = ad.reshape(x, (batch, cfg.input_len, 1))
    for i in range(1, len(cfg.conv_stack) + 1):
        h = ad.relu(ad.conv1d_valid(h, params[f"{prefix}.conv{i}.kernel"],
                                    params[f"{prefix}.conv{i}.bias"]))
    h = ad.reshape(h, (batch, cfg.flat_width()))
    h = ad.relu(ad.dense(h, params[f"{prefix}.fc1.weight"], params[f"{prefix}.fc1.bias"]))
    return ad.dense(h, params[f"{prefix}.fc2.weight"], params[f"{prefix}.fc2.bias"])


def forward_subnetwork(params: nn.ParameterSet, prefix: str, cfg: SubnetworkConfig,
                       x: Tensor, head: str = "linear") -> Tensor:
    z = _subnetwork_logits(params, prefix, cfg, x)
    if head == "linear":
        return z
    if head == "sigmoid":
        return ad.sigmoid(z)
    raise ConfigurationError(f"unknown head {head!r}; use 'linear' or 'sigmoid'")


@dataclass
class ForwardResult:
    """output is what the loss and metrics consume; the gated variants
    also expose their regression and gate branches."""

    output: Tensor
    p_hat: Tensor | None = None
    o_hat: Tensor | None = None
    on_logits: Tensor | None = None


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    s: int = 64           # samples predicted per window
    w: int = 400          # context samples on each side
    conv_stack: tuple[tuple[int, int], ...] = DEFAULT_CONV_STACK
    dense_width: int = 1024
    dae_filters: int = 8
    dae_filter_width: int = 4
    dae_hidden: int = 128

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(
                f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        if self.s < 1:
            raise ConfigurationError(f"s must be >= 1, got {self.s}")
        if self.w < 0:
            raise ConfigurationError(f"w must be >= 0, got {self.w}")
        if self.variant == "dae":
            if self.dae_filters < 1 or self.dae_hidden < 1:
                raise ConfigurationError("dae widths must be positive")
            margin = self.dae_filter_width - 1
            if self.w < margin:
                raise ConfigurationError(
                    f"dae needs w >= {margin} so its output still covers the "
                    f"s target samples")
            if self.input_len < 2 * self.dae_filter_width - 1:
                raise ConfigurationError("dae input too short for two convolutions")
        else:
            # Validates that the conv stack fits the window.
            self.subnetwork_config()

    @property
    def input_len(self) -> int:
        return self.s + 2 * self.w

    def subnetwork_config(self) -> SubnetworkConfig:
        return SubnetworkConfig(input_len=self.input_len, output_len=self.s,
                                conv_stack=self.conv_stack,
                                dense_width=self.dense_width)

    @property
    def dae_inner_len(self) -> int:
        return self.input_len - self.dae_filter_width + 1

    @property
    def dae_output_len(self) -> int:
        return self.input_len - 2 * (self.dae_filter_width - 1)


def _init_dae(params: nn.ParameterSet, cfg: ModelConfig, rng: np.random.Generator):
    fw = cfg.dae_filter_width
    nf = cfg.dae_filters
    wide = cfg.dae_inner_len * nf
    params.add("enc.conv.kernel", nn.he_init((fw, 1, nf), fan_in=fw, rng=rng))
    params.add("enc.conv.bias", nn.zeros((nf,)))
    params.add("enc.fc.weight", nn.he_init((wide, wide), wide, rng))
    params.add("enc.fc.bias", nn.zeros((wide,)))
    params.add("code.fc.weight", nn.he_init((wide, cfg.dae_hidden), wide, rng))
    params.add("code.fc.bias", nn.zeros((cfg.dae_hidden,)))
    params.add("dec.fc.weight", nn.he_init((cfg.dae_hidden, wide), cfg.dae_hidden, rng))
    params.add("dec.fc.bias", nn.zeros((wide,)))
    params.add("dec.conv.kernel", nn.he_init((fw, nf, 1), fan_in=fw * nf, rng=rng))
    params.add("dec.conv.bias", nn.zeros((1,)))


def _forward_dae(params: nn.ParameterSet, cfg: ModelConfig, x: Tensor) -> Tensor:
    if x.values.ndim != 2 or x.shape[1] != cfg.input_len:
        raise ConfigurationError(
            f"dae expects input [batch, {cfg.input_len}], got {x.shape}")
    batch = x.shape[0]
    inner = cfg.dae_inner_len
    nf = cfg.dae_filters
    h = ad.reshape(x, (batch, cfg.input_len, 1))
    h = ad.relu(ad.conv1d_valid(h, params["enc.conv.kernel"], params["enc.conv.bias"]))
    h = ad.reshape(h, (batch, inner * nf))
    h = ad.relu(ad.dense(h, params["enc.fc.weight"], params["enc.fc.bias"]))
    h = ad.relu(ad.dense(h, params["code.fc.weight"], params["code.fc.bias"]))
    h = ad.relu(ad.dense(h, params["dec.fc.weight"], params["dec.fc.bias"]))
    h = ad.reshape(h, (batch, inner, nf))
    h = ad.conv1d_valid(h, params["dec.conv.kernel"], params["dec.conv.bias"])
    return ad.reshape(h, (batch, cfg.dae_output_len))


class Model:
    """A parameterized variant: construction, forward, and target cropping."""

    def __init__(self, config: ModelConfig, params: nn.ParameterSet):
        self.config = config
        self.params = params

    @classmethod
    def create(cls, config: ModelConfig, rng: np.random.Generator) -> "Model":
        params = nn.ParameterSet()
        if config.variant == "dae":
            _init_dae(params, config, rng)
        elif config.variant == "seq2seq":
            init_subnetwork(params, "power", config.subnetwork_config(), rng)
        else:
            init_subnetwork(params, "power", config.subnetwork_config(), rng)
            init_subnetwork(params, "on", config.subnetwork_config(), rng)
            if config.variant.endswith("_sp"):
                params.add("standby", nn.zeros((1,)))
        return cls(config, params)

    def forward(self, x: Tensor) -> ForwardResult:
        cfg = self.config
        variant = cfg.variant
        if variant == "dae":
            return ForwardResult(output=_forward_dae(self.params, cfg, x))
        sub = cfg.subnetwork_config()
        p_hat = forward_subnetwork(self.params, "power", sub, x, head="linear")
        if variant == "seq2seq":
            return ForwardResult(output=p_hat, p_hat=p_hat)
        logits = _subnetwork_logits(self.params, "on", sub, x)
        o_hat = ad.sigmoid(logits)
        if variant == "sgn":
            output = ad.elementwise_mul(p_hat, o_hat)
        elif variant == "hard_sgn":
            output = ad.elementwise_mul(p_hat, ad.hard_gate(o_hat))
        elif variant == "sgn_sp":
            closed = ad.add_const(ad.scale(o_hat, -1.0), 1.0)
            output = ad.add(ad.elementwise_mul(p_hat, o_hat),
                            ad.mul_scalar_tensor(closed, self.params["standby"]))
        else:  # hard_sgn_sp
            gate = ad.hard_gate(o_hat)
            closed = ad.add_const(ad.scale(gate, -1.0), 1.0)
            output = ad.add(ad.elementwise_mul(p_hat, gate),
                            ad.mul_scalar_tensor(closed, self.params["standby"]))
        return ForwardResult(output=output, p_hat=p_hat, o_hat=o_hat, on_logits=logits)

    def target_view(self, result: ForwardResult) -> np.ndarray:
        """The [batch, s] slice of the output that covers the target
        window [t, t + s). Identity except for the window-to-window dae,
        whose valid convolutions trim the margins."""
        out = result.output.values
        if self.config.variant != "dae":
            return out
        lo = self.config.w - (self.config.dae_filter_width - 1)
        return out[:, lo:lo + self.config.s]
