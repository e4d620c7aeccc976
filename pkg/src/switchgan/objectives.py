"""Adversarial, cycle and identity losses for the alternating min-max training.

Domain X holds high-dose (clean) high-frequency images, domain Y low-dose
(noisy) ones. A translator bundles the two mapping directions:

    to_x(img)  Y -> X, noise removal
    to_y(img)  X -> Y, noise synthesis

so the same losses drive both the switchable single-generator model and
the conventional two-generator baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ContractError
from .models import (
    AdaINCode,
    CodeGenerator,
    Generator,
    GeneratorConfig,
    constant_code,
    ones_code_input,
)
from .tensor import Tensor

GAN_MODES = ("least-squares", "paper-l1")


@dataclass
class LossWeights:
    lambda_cyc: float = 10.0
    lambda_id: float = 5.0
    gan_mode: str = "least-squares"

    def __post_init__(self):
        if self.lambda_cyc < 0 or self.lambda_id < 0:
            raise ContractError("loss weights must be non-negative")
        if self.gan_mode not in GAN_MODES:
            raise ContractError(f"gan_mode must be one of {GAN_MODES}")


class SwitchableTranslator:
    """One shared U-Net; the direction is picked purely by the AdaIN code."""

    def __init__(self, generator: Generator, code_gen: CodeGenerator,
                 cfg: GeneratorConfig | None = None):
        self.generator = generator
        self.code_gen = code_gen
        cfg = cfg or generator.cfg
        self._denoise_code: AdaINCode = constant_code(cfg)
        self._code_input: Tensor = ones_code_input(code_gen.cfg)

    def to_x(self, img: Tensor) -> Tensor:
        return self.generator.forward(img, self._denoise_code)

    def to_y(self, img: Tensor) -> Tensor:
        return self.generator.forward(img, self.code_gen.forward(self._code_input))

    def named_gen_parameters(self) -> dict[str, Tensor]:
        out = {f"G.{k}": v for k, v in self.generator.params.items()}
        out.update({f"F.{k}": v for k, v in self.code_gen.params.items()})
        return out

    def models(self) -> dict[str, object]:
        return {"G": self.generator, "F": self.code_gen}


class TwinTranslator:
    """Two independent U-Nets with fixed unit codes: the cycleGAN baseline."""

    def __init__(self, g_yx: Generator, g_xy: Generator):
        self.g_yx = g_yx
        self.g_xy = g_xy
        self._code_yx = constant_code(g_yx.cfg)
        self._code_xy = constant_code(g_xy.cfg)

    def to_x(self, img: Tensor) -> Tensor:
        return self.g_yx.forward(img, self._code_yx)

    def to_y(self, img: Tensor) -> Tensor:
        return self.g_xy.forward(img, self._code_xy)

    def named_gen_parameters(self) -> dict[str, Tensor]:
        out = {f"GYX.{k}": v for k, v in self.g_yx.params.items()}
        out.update({f"GXY.{k}": v for k, v in self.g_xy.params.items()})
        return out

    def models(self) -> dict[str, object]:
        return {"GYX": self.g_yx, "GXY": self.g_xy}


def _batch_mean(terms: list[Tensor]) -> Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))


def _sq_err_to(t: Tensor, target: float) -> Tensor:
    return ((t - target) ** 2).mean()


def disc_loss(d_x, d_y, translator, batch_x, batch_y,
              gan_mode: str = "least-squares") -> Tensor:
    """Discriminator objective over one pair of batches.

    In least-squares mode the discriminators are pushed toward 1 on real
    and 0 on fake patches. The "paper-l1" mode evaluates the printed L1
    form instead, whose min-max sign convention rewards D(real) -> 0 and
    D(fake) -> 1; both discriminators minimize the returned value.
    The update partition (no generator parameter moves on a D step) is the
    trainer's job: it freezes G and F around this loss, which also keeps
    the fake forwards off the tape.
    """
    fake_y = [translator.to_y(x) for x in batch_x]
    fake_x = [translator.to_x(y) for y in batch_y]
    if gan_mode == "least-squares":
        return (
            _batch_mean([_sq_err_to(d_y.forward(y), 1.0) for y in batch_y])
            + _batch_mean([_sq_err_to(d_y.forward(f), 0.0) for f in fake_y])
            + _batch_mean([_sq_err_to(d_x.forward(x), 1.0) for x in batch_x])
            + _batch_mean([_sq_err_to(d_x.forward(f), 0.0) for f in fake_x])
        )
    if gan_mode == "paper-l1":
        return (
            _batch_mean([d_y.forward(y).abs().mean() for y in batch_y])
            + _batch_mean([(1.0 - d_y.forward(f)).abs().mean() for f in fake_y])
            + _batch_mean([d_x.forward(x).abs().mean() for x in batch_x])
            + _batch_mean([(1.0 - d_x.forward(f)).abs().mean() for f in fake_x])
        )
    raise ContractError(f"gan_mode must be one of {GAN_MODES}")


def gen_adv_loss(d_x, d_y, translator, batch_x, batch_y,
                 gan_mode: str = "least-squares") -> Tensor:
    """Adversarial part of the generator objective (fresh fake forwards)."""
    fake_y = [translator.to_y(x) for x in batch_x]
    fake_x = [translator.to_x(y) for y in batch_y]
    if gan_mode == "least-squares":
        return (
            _batch_mean([_sq_err_to(d_y.forward(f), 1.0) for f in fake_y])
            + _batch_mean([_sq_err_to(d_x.forward(f), 1.0) for f in fake_x])
        )
    if gan_mode == "paper-l1":
        # maximizing the printed discriminator loss == minimizing the
        # negated fake terms
        return -(
            _batch_mean([(1.0 - d_y.forward(f)).abs().mean() for f in fake_y])
            + _batch_mean([(1.0 - d_x.forward(f)).abs().mean() for f in fake_x])
        )
    raise ContractError(f"gan_mode must be one of {GAN_MODES}")


def cycle_loss(translator, batch_x, batch_y) -> Tensor:
    """Mean absolute error of both round trips Y->X->Y and X->Y->X."""
    return (
        _batch_mean([(translator.to_y(translator.to_x(y)) - y).abs().mean() for y in batch_y])
        + _batch_mean([(translator.to_x(translator.to_y(x)) - x).abs().mean() for x in batch_x])
    )


def identity_loss(translator, batch_x, batch_y) -> Tensor:
    """Fixed-point penalty: same-domain inputs must pass through unchanged."""
    return (
        _batch_mean([(translator.to_y(y) - y).abs().mean() for y in batch_y])
        + _batch_mean([(translator.to_x(x) - x).abs().mean() for x in batch_x])
    )


def total_gen_loss(d_x, d_y, translator, batch_x, batch_y,
                   weights: LossWeights) -> tuple[Tensor, dict[str, float]]:
    """Full generator objective and its component values.

    Evaluates the same sum as gen_adv_loss + cycle_loss + identity_loss,
    but the adversarial and cycle terms share one forward pass per fake
    (the tape accumulates both contributions), so a training step costs
    six U-Net forwards instead of eight.
    """
    fake_y = [translator.to_y(x) for x in batch_x]
    fake_x = [translator.to_x(y) for y in batch_y]
    if weights.gan_mode == "least-squares":
        adv = (
            _batch_mean([_sq_err_to(d_y.forward(f), 1.0) for f in fake_y])
            + _batch_mean([_sq_err_to(d_x.forward(f), 1.0) for f in fake_x])
        )
    else:
        adv = -(
            _batch_mean([(1.0 - d_y.forward(f)).abs().mean() for f in fake_y])
            + _batch_mean([(1.0 - d_x.forward(f)).abs().mean() for f in fake_x])
        )
    cyc = (
        _batch_mean([(translator.to_y(f) - y).abs().mean() for f, y in zip(fake_x, batch_y)])
        + _batch_mean([(translator.to_x(f) - x).abs().mean() for f, x in zip(fake_y, batch_x)])
    )
    ident = identity_loss(translator, batch_x, batch_y)
    total = adv + weights.lambda_cyc * cyc + weights.lambda_id * ident
    parts = {"gen_adv": adv.item(), "cycle": cyc.item(), "identity": ident.item()}
    return total, parts
