"""The three networks: switchable U-Net generator, AdaIN code generator,
and PatchGAN-style discriminator.

A single generator serves both translation directions; which one runs is
decided entirely by the AdaIN code it receives. The constant (0, 1) code
selects the denoising direction and needs no extra network, the learned
code comes from the much lighter code generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError
from .layers import (
    Conv2DParams,
    DenseParams,
    adain,
    concat,
    conv2d,
    dense,
    glorot_uniform_init,
    relu,
    upsample2x,
)
from .tensor import Tensor, narrow

__all__ = [
    "GeneratorConfig",
    "CodeGenConfig",
    "DiscConfig",
    "AdaINCode",
    "ModelGraph",
    "Generator",
    "CodeGenerator",
    "Discriminator",
    "build_generator",
    "build_code_generator",
    "build_discriminator",
    "constant_code",
    "ones_code_input",
    "param_count",
]


@dataclass
class GeneratorConfig:
    stages: int = 4
    base_channels: int = 64
    in_channels: int = 1
    out_channels: int = 1
    adain_eps: float = 1e-5
    # recorded architecture choices (see README): skips take the raw conv
    # output, and every stage runs conv -> AdaIN -> ReLU
    skip_source: str = "pre_adain"
    stage_order: str = "conv-adain-relu"

    @property
    def encoder_channels(self) -> list[int]:
        return [self.base_channels * (1 << i) for i in range(self.stages)]

    @property
    def bottleneck_channels(self) -> int:
        return self.base_channels * (1 << self.stages)

    @property
    def adain_layer_channels(self) -> list[int]:
        enc = self.encoder_channels
        return enc + [self.bottleneck_channels] + enc[::-1]


@dataclass
class CodeGenConfig:
    input_len: int = 128
    hidden_width: int = 128
    shared_layers: int = 4
    head_channels: list[int] = field(default_factory=list)


@dataclass
class DiscConfig:
    base_channels: int = 64
    in_channels: int = 1
    stride2_layers: int = 4
    stride1_layers: int = 2
    max_mult: int = 8   # channel doubling stops at base * max_mult

    @property
    def channel_schedule(self) -> list[int]:
        chans = []
        c = self.base_channels
        for _ in range(self.stride2_layers):
            chans.append(c)
            c = min(c * 2, self.base_channels * self.max_mult)
        chans.extend([chans[-1]] * self.stride1_layers)
        return chans


@dataclass
class AdaINCode:
    """Per-AdaIN-layer target statistics: ordered (mean, variance) pairs."""

    pairs: list[tuple[Tensor, Tensor]]

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]


class ModelGraph:
    """A parameterized network: named parameter tensors plus a forward pass."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}

    def add_param(self, name: str, tensor: Tensor) -> Tensor:
        if name in self.params:
            raise ContractError(f"duplicate parameter name {name!r}")
        tensor.requires_grad = True
        if tensor.grad is None:
            tensor.zero_grad()
        self.params[name] = tensor
        return tensor

    def named_parameters(self) -> dict[str, Tensor]:
        return dict(self.params)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def load_values(self, values: dict[str, np.ndarray], prefix: str = "") -> None:
        for name, p in self.params.items():
            key = prefix + name
            if key not in values:
                raise ContractError(f"checkpoint is missing tensor {key!r}")
            arr = np.asarray(values[key], dtype=np.float64)
            if arr.shape != p.shape:
                raise DimensionError(f"tensor {key!r} has shape {arr.shape}, expected {p.shape}")
            p.data = arr.copy()
            p.zero_grad()


def param_count(m: ModelGraph) -> int:
    """Total number of scalar parameters in a model."""
    return m.param_count()


def _conv_params(model: ModelGraph, name: str, kh: int, kw: int, cin: int, cout: int,
                 stride: int, rng: np.random.Generator) -> Conv2DParams:
    kernel = model.add_param(f"{name}.kernel", glorot_uniform_init((kh, kw, cin, cout), rng))
    bias = model.add_param(f"{name}.bias", Tensor(np.zeros(cout), requires_grad=True))
    return Conv2DParams(kernel=kernel, bias=bias, stride=stride)


def _dense_params(model: ModelGraph, name: str, n_in: int, n_out: int,
                  rng: np.random.Generator) -> DenseParams:
    weight = model.add_param(f"{name}.weight", glorot_uniform_init((n_in, n_out), rng))
    bias = model.add_param(f"{name}.bias", Tensor(np.zeros(n_out), requires_grad=True))
    return DenseParams(weight=weight, bias=bias)


class Generator(ModelGraph):
    """U-Net with AdaIN after every stage convolution.

    Encoder stage: conv3x3 -> AdaIN -> ReLU -> stride-2 conv. Bottleneck:
    conv3x3 -> AdaIN -> ReLU. Decoder stage: upsample2x -> concat skip ->
    conv3x3 -> AdaIN -> ReLU. Final projection is a linear 1x1 conv (the
    outputs are signed wavelet residuals). AdaIN layers total 2*stages + 1.
    """

    def __init__(self, cfg: GeneratorConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        enc = cfg.encoder_channels
        self.enc_convs = []
        self.down_convs = []
        cin = cfg.in_channels
        for i, c in enumerate(enc):
            self.enc_convs.append(_conv_params(self, f"enc{i + 1}.conv", 3, 3, cin, c, 1, rng))
            self.down_convs.append(_conv_params(self, f"enc{i + 1}.down", 3, 3, c, c, 2, rng))
            cin = c
        cb = cfg.bottleneck_channels
        self.bottleneck_conv = _conv_params(self, "bottleneck.conv", 3, 3, enc[-1], cb, 1, rng)
        self.dec_convs = []
        up_c = cb
        for i in reversed(range(cfg.stages)):
            c = enc[i]
            self.dec_convs.append(
                _conv_params(self, f"dec{i + 1}.conv", 3, 3, up_c + c, c, 1, rng))
            up_c = c
        self.out_conv = _conv_params(self, "out.conv", 1, 1, enc[0], cfg.out_channels, 1, rng)

    def forward(self, x: Tensor, code: AdaINCode) -> Tensor:
        cfg = self.cfg
        expected = cfg.adain_layer_channels
        if len(code) != len(expected):
            raise ContractError(f"code has {len(code)} pairs, generator needs {len(expected)}")
        h, w = x.shape[0], x.shape[1]
        block = 1 << cfg.stages
        if h % block or w % block:
            raise ContractError(f"input {x.shape} not divisible by 2^{cfg.stages}")

        k = 0

        def styled(t, channels):
            nonlocal k
            mean, var = code[k]
            if mean.shape != (channels,) or var.shape != (channels,):
                raise ContractError(
                    f"code pair {k} has shapes {mean.shape}/{var.shape}, expected ({channels},)")
            k += 1
            return relu(adain(t, mean, var, eps=cfg.adain_eps))

        skips = []
        t = x
        for i, c in enumerate(cfg.encoder_channels):
            t = conv2d(t, self.enc_convs[i])
            skips.append(t)                       # pre-AdaIN feature
            t = styled(t, c)
            t = conv2d(t, self.down_convs[i])
        t = conv2d(t, self.bottleneck_conv)
        t = styled(t, cfg.bottleneck_channels)
        for j, i in enumerate(reversed(range(cfg.stages))):
            t = upsample2x(t)
            t = concat([t, skips[i]], axis=-1)
            t = conv2d(t, self.dec_convs[j])
            t = styled(t, cfg.encoder_channels[i])
        return conv2d(t, self.out_conv)


class CodeGenerator(ModelGraph):
    """Maps a fixed input vector to the learned AdaIN code.

    Four shared fully connected layers feed one unshared head per AdaIN
    layer; each head emits [mean || variance] and only the variance half
    passes through ReLU so it cannot go negative.
    """

    def __init__(self, cfg: CodeGenConfig, rng: np.random.Generator):
        super().__init__()
        if not cfg.head_channels:
            raise ContractError("code generator needs at least one head")
        self.cfg = cfg
        self.shared = []
        n_in = cfg.input_len
        for i in range(cfg.shared_layers):
            self.shared.append(_dense_params(self, f"shared{i + 1}", n_in, cfg.hidden_width, rng))
            n_in = cfg.hidden_width
        self.heads = []
        for i, c in enumerate(cfg.head_channels):
            self.heads.append(_dense_params(self, f"head{i + 1}", cfg.hidden_width, 2 * c, rng))

    def forward(self, c: Tensor) -> AdaINCode:
        if c.shape != (self.cfg.input_len,):
            raise ContractError(f"code input must have shape ({self.cfg.input_len},), got {c.shape}")
        t = c
        for layer in self.shared:
            t = relu(dense(t, layer))
        pairs = []
        for channels, head in zip(self.cfg.head_channels, self.heads):
            out = dense(t, head)
            mean = narrow(out, 0, 0, channels)
            var = relu(narrow(out, 0, channels, channels))
            pairs.append((mean, var))
        return AdaINCode(pairs)


class Discriminator(ModelGraph):
    """Convolution stack emitting a spatial real/fake patch map."""

    def __init__(self, cfg: DiscConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.convs = []
        cin = cfg.in_channels
        for i, c in enumerate(cfg.channel_schedule):
            stride = 2 if i < cfg.stride2_layers else 1
            self.convs.append(_conv_params(self, f"conv{i + 1}", 3, 3, cin, c, stride, rng))
            cin = c
        self.out_conv = _conv_params(self, "out", 1, 1, cin, 1, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        t = x
        for p in self.convs:
            t = relu(conv2d(t, p))
        return conv2d(t, self.out_conv)


def build_generator(cfg: GeneratorConfig, rng: np.random.Generator) -> Generator:
    return Generator(cfg, rng)


def build_code_generator(gen_cfg: GeneratorConfig, rng: np.random.Generator,
                         cfg: CodeGenConfig | None = None) -> CodeGenerator:
    cfg = cfg or CodeGenConfig()
    cfg.head_channels = list(gen_cfg.adain_layer_channels)
    return CodeGenerator(cfg, rng)


def build_discriminator(cfg: DiscConfig, rng: np.random.Generator) -> Discriminator:
    return Discriminator(cfg, rng)


def constant_code(cfg: GeneratorConfig) -> AdaINCode:
    """The fixed denoising-direction code: zero means, unit variances."""
    pairs = [(Tensor(np.zeros(c)), Tensor(np.ones(c))) for c in cfg.adain_layer_channels]
    return AdaINCode(pairs)


def ones_code_input(cfg: CodeGenConfig | None = None) -> Tensor:
    """The constant all-ones input vector fed to the code generator."""
    n = (cfg or CodeGenConfig()).input_len
    return Tensor(np.ones(n))
