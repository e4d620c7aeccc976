"""Multi-level 2D discrete wavelet transform and the high-frequency split.

Orthonormal filter banks (Haar by default, an 8-tap Daubechies pair as the
alternative) with periodic boundary handling, so the transform is exactly
invertible and energy preserving at every level. These functions operate on
plain numpy arrays: the wavelet stage runs outside the training tape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ContractError, DimensionError

# Orthonormal scaling (lowpass) filters, sum = sqrt(2), sum of squares = 1.
_SCALING = {
    "haar": np.array([1.0, 1.0]) / np.sqrt(2.0),
    "db4": np.array([
        -0.010597401784997278, 0.032883011666982945,
        0.030841381835986965, -0.18703481171888114,
        -0.02798376941698385, 0.6308807679295904,
        0.7148465705525415, 0.23037781330885523,
    ]),
}

WAVELET_FAMILIES = tuple(sorted(_SCALING))


def _filters(wavelet: str) -> tuple[np.ndarray, np.ndarray]:
    try:
        lo = _SCALING[wavelet]
    except KeyError:
        raise ContractError(f"unknown wavelet {wavelet!r}; choose from {WAVELET_FAMILIES}") from None
    hi = (lo[::-1] * np.where(np.arange(lo.size) % 2 == 0, 1.0, -1.0)).copy()
    return lo, hi


@lru_cache(maxsize=None)
def _step_matrix(n: int, wavelet: str) -> np.ndarray:
    """Orthogonal one-level analysis matrix for a length-n signal.

    Row i < n/2 holds the lowpass filter at offset 2i (periodized), rows
    n/2.. hold the highpass filter; periodization keeps the matrix
    orthogonal for every even n, so synthesis is the transpose.
    """
    lo, hi = _filters(wavelet)
    half = n // 2
    w = np.zeros((n, n))
    for i in range(half):
        for k in range(lo.size):
            col = (2 * i + k) % n
            w[i, col] += lo[k]
            w[half + i, col] += hi[k]
    return w


@dataclass
class WaveletPyramid:
    """Multi-level 2D decomposition: one coarse LL plus per-level detail bands.

    ``details[k]`` holds the (lh, hl, hh) triple produced at level k+1, so
    the finest bands come first and ``ll`` matches the deepest level.
    """

    ll: np.ndarray
    details: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=list)
    wavelet: str = "haar"

    @property
    def levels(self) -> int:
        return len(self.details)

    def copy(self) -> "WaveletPyramid":
        return WaveletPyramid(
            ll=self.ll.copy(),
            details=[(a.copy(), b.copy(), c.copy()) for a, b, c in self.details],
            wavelet=self.wavelet,
        )


def _as_image(image) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2D image, got shape {arr.shape}")
    return arr


def dwt2(image, levels: int, wavelet: str = "haar") -> WaveletPyramid:
    """Separable 2D analysis repeated ``levels`` times on the LL band."""
    arr = _as_image(image)
    if levels < 1:
        raise ContractError("levels must be >= 1")
    h, w = arr.shape
    if h % (1 << levels) or w % (1 << levels):
        raise ContractError(
            f"image of shape {arr.shape} is not divisible by 2^{levels}; pad first")
    details = []
    ll = arr
    for _ in range(levels):
        n, m = ll.shape
        wr = _step_matrix(n, wavelet)
        wc = _step_matrix(m, wavelet)
        y = wr @ ll @ wc.T
        hn, hm = n // 2, m // 2
        details.append((y[:hn, hm:].copy(), y[hn:, :hm].copy(), y[hn:, hm:].copy()))
        ll = y[:hn, :hm].copy()
    return WaveletPyramid(ll=ll, details=details, wavelet=wavelet)


def idwt2(p: WaveletPyramid) -> np.ndarray:
    """Synthesis inverse of :func:`dwt2`."""
    ll = np.asarray(p.ll, dtype=np.float64)
    for lh, hl, hh in reversed(p.details):
        hn, hm = ll.shape
        if lh.shape != (hn, hm) or hl.shape != (hn, hm) or hh.shape != (hn, hm):
            raise ContractError(
                f"band shapes {lh.shape}/{hl.shape}/{hh.shape} do not match LL {ll.shape}")
        y = np.empty((2 * hn, 2 * hm))
        y[:hn, :hm] = ll
        y[:hn, hm:] = lh
        y[hn:, :hm] = hl
        y[hn:, hm:] = hh
        wr = _step_matrix(2 * hn, p.wavelet)
        wc = _step_matrix(2 * hm, p.wavelet)
        ll = wr.T @ y @ wc
    return ll


def _pad_to_multiple(arr: np.ndarray, block: int) -> tuple[np.ndarray, tuple[int, int]]:
    h, w = arr.shape
    ph = (-h) % block
    pw = (-w) % block
    if ph or pw:
        arr = np.pad(arr, ((0, ph), (0, pw)), mode="symmetric")
    return arr, (h, w)


def highfreq_extract(image, levels: int = 6, wavelet: str = "haar") -> np.ndarray:
    """High-frequency residual: inverse transform with the coarse LL zeroed.

    Images whose sides are not divisible by 2^levels are symmetric-padded
    before the transform and cropped afterwards, so
    highfreq + lowfreq == image still holds on the returned region.
    """
    arr = _as_image(image)
    padded, (h, w) = _pad_to_multiple(arr, 1 << levels)
    p = dwt2(padded, levels, wavelet)
    p.ll = np.zeros_like(p.ll)
    return idwt2(p)[:h, :w]


def lowfreq_extract(image, levels: int = 6, wavelet: str = "haar") -> np.ndarray:
    """Complementary coarse component: inverse transform of the LL band alone."""
    arr = _as_image(image)
    padded, (h, w) = _pad_to_multiple(arr, 1 << levels)
    p = dwt2(padded, levels, wavelet)
    p.details = [tuple(np.zeros_like(b) for b in bands) for bands in p.details]
    return idwt2(p)[:h, :w]


def recompose_denoised(lowdose, hf_in, hf_denoised) -> np.ndarray:
    """Subtract the estimated noise pattern (hf_in - hf_denoised) from the image."""
    lowdose = np.asarray(lowdose, dtype=np.float64)
    hf_in = np.asarray(hf_in, dtype=np.float64)
    hf_denoised = np.asarray(hf_denoised, dtype=np.float64)
    if not (lowdose.shape == hf_in.shape == hf_denoised.shape):
        raise DimensionError(
            f"shape mismatch: {lowdose.shape}, {hf_in.shape}, {hf_denoised.shape}")
    return lowdose - (hf_in - hf_denoised)
