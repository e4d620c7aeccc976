"""AdaIN-switchable cycleGAN denoising on wavelet high-frequency residuals.

One U-Net generator serves both translation directions (denoise and noise
synthesis); the direction is selected purely by the AdaIN code it is fed.
Training is unsupervised: adversarial + cycle + identity losses over
unpaired pools of wavelet high-frequency images.
"""

from .config import RunConfig
from .errors import (
    ConfigError,
    ContractError,
    DimensionError,
    FormatError,
    NumericError,
)
from .layers import adain, conv2d, dense, glorot_uniform_init, upsample2x
from .models import (
    AdaINCode,
    DiscConfig,
    GeneratorConfig,
    build_code_generator,
    build_discriminator,
    build_generator,
    constant_code,
    param_count,
)
from .objectives import LossWeights, SwitchableTranslator, TwinTranslator
from .tensor import Tensor, channel_stats, finite_difference_check, no_grad
from .trainer import Adam, TrainState, fit, sample_patch_pair, train_step
from .wavelet import WaveletPyramid, dwt2, highfreq_extract, idwt2, recompose_denoised

__version__ = "0.1.0"
