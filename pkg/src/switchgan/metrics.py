"""PSNR, SSIM and residual-noise statistics for evaluation reports.

Pure numpy/scipy functions on 2D arrays; nothing here touches the
autodiff tape. Images are normalized to [0, 1] with the low-dose image's
own min/max before scoring, so every compared image shares one scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ContractError, DimensionError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def metric_normalize(ld: np.ndarray, others: list[np.ndarray]) -> tuple[np.ndarray, list[np.ndarray]]:
    """Shift/scale by the low-dose image's (min, max); the same transform is
    applied to every other image, which may therefore leave [0, 1]."""
    ld = np.asarray(ld, dtype=np.float64)
    lo = ld.min()
    hi = ld.max()
    if hi == lo:
        raise ContractError("metric_normalize needs a non-constant low-dose image")
    span = hi - lo
    return (ld - lo) / span, [(np.asarray(o, dtype=np.float64) - lo) / span for o in others]


def psnr(x: np.ndarray, y: np.ndarray) -> float:
    """20*log10(max(x) / rmse); +inf when the images are identical."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"psnr shapes differ: {x.shape} vs {y.shape}")
    rmse = math.sqrt(float(np.mean((x - y) ** 2)))
    if rmse == 0.0:
        return math.inf
    return 20.0 * math.log10(float(x.max()) / rmse)


def _gaussian_window(n: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    offsets = np.arange(n) - (n - 1) / 2.0
    w = np.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    return w / w.sum()


def _local_mean(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    half = window.size // 2
    out = correlate1d(correlate1d(img, window, axis=0, mode="nearest"),
                      window, axis=1, mode="nearest")
    return out[half:-half, half:-half]


def ssim(x: np.ndarray, y: np.ndarray, data_range: float = 1.0) -> float:
    """Mean local structural similarity with an 11x11 Gaussian window
    (sigma 1.5) and K1=0.01, K2=0.03."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"ssim shapes differ: {x.shape} vs {y.shape}")
    if min(x.shape) < SSIM_WINDOW:
        raise ContractError(f"ssim needs images at least {SSIM_WINDOW} pixels per side")
    window = _gaussian_window()
    mu_x = _local_mean(x, window)
    mu_y = _local_mean(y, window)
    var_x = _local_mean(x * x, window) - mu_x * mu_x
    var_y = _local_mean(y * y, window) - mu_y * mu_y
    cov = _local_mean(x * y, window) - mu_x * mu_y
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def noise_std(image: np.ndarray, reference: np.ndarray) -> float:
    """Standard deviation of the residual against a reference image."""
    image = np.asarray(image, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if image.shape != reference.shape:
        raise DimensionError(f"noise_std shapes differ: {image.shape} vs {reference.shape}")
    return float(np.std(image - reference))


@dataclass
class EvalReport:
    """Per-image metric rows plus their arithmetic means."""

    rows: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    _NUMERIC = ("psnr_in", "psnr_out", "ssim_in", "ssim_out", "noise_in", "noise_out")

    def mean(self, key: str) -> float:
        return float(np.mean([row[key] for row in self.rows]))

    def means(self) -> dict[str, float]:
        return {key: self.mean(key) for key in self._NUMERIC}

    def to_tsv(self) -> str:
        header = ("id",) + self._NUMERIC
        lines = ["\t".join(header)]
        for row in self.rows:
            lines.append("\t".join([row["id"]] + [f"{row[k]:.6f}" for k in self._NUMERIC]))
        lines.append("\t".join(["mean"] + [f"{self.mean(k):.6f}" for k in self._NUMERIC]))
        return "\n".join(lines) + "\n"

    def to_kv(self) -> str:
        lines = [f"mean_{key} = {value:.6f}" for key, value in sorted(self.means().items())]
        for key in sorted(self.config):
            lines.append(f"config_{key} = {self.config[key]}")
        return "\n".join(lines) + "\n"


def score_pair(clean: np.ndarray, noisy: np.ndarray, denoised: np.ndarray,
               pair_id: str = "") -> dict:
    """Metrics for one eval pair, normalized with the low-dose min/max."""
    _, (clean_n, den_n, noisy_n) = metric_normalize(noisy, [clean, denoised, noisy])
    return {
        "id": pair_id,
        "psnr_in": psnr(clean_n, noisy_n),
        "psnr_out": psnr(clean_n, den_n),
        "ssim_in": ssim(clean_n, noisy_n),
        "ssim_out": ssim(clean_n, den_n),
        "noise_in": noise_std(noisy, clean),
        "noise_out": noise_std(denoised, clean),
    }
