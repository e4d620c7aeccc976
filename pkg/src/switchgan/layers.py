"""Neural layers shared by the generator, code generator and discriminator.

Feature maps are [H, W, C] tensors, kernels are [kh, kw, Cin, Cout]. All
layers are differentiable through :mod:`switchgan.tensor`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError
from .tensor import (
    Tensor,
    _accum,
    _coerce,
    _record,
    concat,
    matmul,
    relu,
)

__all__ = [
    "Conv2DParams",
    "DenseParams",
    "conv2d",
    "dense",
    "upsample2x",
    "adain",
    "concat",
    "relu",
    "glorot_uniform_init",
]


@dataclass
class Conv2DParams:
    """Kernel + bias for a 2D convolution layer."""

    kernel: Tensor  # [kh, kw, Cin, Cout]
    bias: Tensor    # [Cout]
    stride: int = 1
    padding: str = "same"

    def __post_init__(self):
        if self.stride not in (1, 2):
            raise ContractError(f"stride must be 1 or 2, got {self.stride}")
        if self.padding not in ("same", "valid"):
            raise ContractError(f"padding must be 'same' or 'valid', got {self.padding!r}")

    @property
    def parameter_count(self) -> int:
        return self.kernel.size + self.bias.size


@dataclass
class DenseParams:
    """Weight + bias for a fully connected layer."""

    weight: Tensor  # [in, out]
    bias: Tensor    # [out]

    @property
    def parameter_count(self) -> int:
        return self.weight.size + self.bias.size


def _same_padding(extent: int, kernel: int, stride: int) -> tuple[int, int]:
    # output size is ceil(extent / stride); pad split with the extra row/col
    # at the trailing edge
    out = -(-extent // stride)
    total = max((out - 1) * stride + kernel - extent, 0)
    lead = total // 2
    return lead, total - lead


def _pad3(arr: np.ndarray, pt: int, pb: int, pl: int, pr: int) -> np.ndarray:
    if not (pt or pb or pl or pr):
        return arr
    h, w, c = arr.shape
    out = np.zeros((h + pt + pb, w + pl + pr, c))
    out[pt:pt + h, pl:pl + w] = arr
    return out


def _im2col(arr: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    win = np.lib.stride_tricks.sliding_window_view(arr, (kh, kw), axis=(0, 1))
    win = win[::stride, ::stride]             # [Ho, Wo, Cin, kh, kw]
    ho, wo, cin = win.shape[0], win.shape[1], win.shape[2]
    return win.transpose(0, 1, 3, 4, 2).reshape(ho * wo, kh * kw * cin)


def conv2d(x: Tensor, p: Conv2DParams) -> Tensor:
    """Cross-correlation of an [H, W, Cin] map with p.kernel, plus bias."""
    x = _coerce(x)
    kernel, bias = p.kernel, p.bias
    if x.ndim != 3:
        raise DimensionError(f"conv2d input must be [H, W, C], got {x.shape}")
    kh, kw, cin, cout = kernel.shape
    if x.shape[2] != cin:
        raise DimensionError(f"input has {x.shape[2]} channels, kernel expects {cin}")
    h, w = x.shape[0], x.shape[1]
    s = p.stride

    if p.padding == "same":
        pt, pb = _same_padding(h, kh, s)
        pl, pr = _same_padding(w, kw, s)
    else:
        pt = pb = pl = pr = 0

    if kh == 1 and kw == 1 and s == 1:
        # pointwise projection: one matmul over flattened pixels
        kmat = kernel.data.reshape(cin, cout)
        data = (x.data.reshape(h * w, cin) @ kmat).reshape(h, w, cout) + bias.data

        def factory(out):
            def bw():
                g = out.grad
                gmat = g.reshape(h * w, cout)
                if bias.requires_grad:
                    _accum(bias, g.sum(axis=(0, 1)))
                if kernel.requires_grad:
                    _accum(kernel, (x.data.reshape(h * w, cin).T @ gmat).reshape(kernel.shape))
                if x.requires_grad:
                    _accum(x, (gmat @ kmat.T).reshape(h, w, cin))
            return bw

        return _record(data, (x, kernel, bias), factory)

    xp = _pad3(x.data, pt, pb, pl, pr)
    cols = _im2col(xp, kh, kw, s)
    ho = (xp.shape[0] - kh) // s + 1
    wo = (xp.shape[1] - kw) // s + 1
    kmat = kernel.data.reshape(kh * kw * cin, cout)
    data = (cols @ kmat).reshape(ho, wo, cout) + bias.data

    def factory(out):
        def bw():
            g = out.grad
            gmat = g.reshape(ho * wo, cout)
            if bias.requires_grad:
                _accum(bias, g.sum(axis=(0, 1)))
            if kernel.requires_grad:
                _accum(kernel, (cols.T @ gmat).reshape(kh, kw, cin, cout))
            if not x.requires_grad:
                return
            if s == 1:
                # dx as a full correlation of g with the flipped kernel
                gp = _pad3(g, kh - 1 - pt, kh - 1 - pb, kw - 1 - pl, kw - 1 - pr)
                gcols = _im2col(gp, kh, kw, 1)
                krot = kernel.data[::-1, ::-1].transpose(0, 1, 3, 2)
                _accum(x, (gcols @ krot.reshape(kh * kw * cout, cin)).reshape(h, w, cin))
            else:
                dcols = (gmat @ kmat.T).reshape(ho, wo, kh, kw, cin)
                dxp = np.zeros_like(xp)
                for i in range(kh):
                    for j in range(kw):
                        dxp[i:i + s * ho:s, j:j + s * wo:s] += dcols[:, :, i, j, :]
                _accum(x, dxp[pt:pt + h, pl:pl + w])
        return bw

    return _record(data, (x, kernel, bias), factory)


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbor upsampling: each pixel becomes a 2x2 block."""
    x = _coerce(x)
    if x.ndim != 3:
        raise DimensionError(f"upsample2x input must be [H, W, C], got {x.shape}")
    data = np.repeat(np.repeat(x.data, 2, axis=0), 2, axis=1)
    h, w, c = x.shape

    def factory(out):
        def bw():
            _accum(x, out.grad.reshape(h, 2, w, 2, c).sum(axis=(1, 3)))
        return bw

    return _record(data, (x,), factory)


def dense(x: Tensor, p: DenseParams) -> Tensor:
    """Fully connected layer: x @ W + b for a flat input vector."""
    x = _coerce(x)
    if x.ndim != 1:
        raise DimensionError(f"dense input must be 1D, got {x.shape}")
    if x.shape[0] != p.weight.shape[0]:
        raise DimensionError(f"input length {x.shape[0]} != weight rows {p.weight.shape[0]}")
    return matmul(x, p.weight) + p.bias


def adain(x: Tensor, mu_t, var_t, eps: float = 1e-5) -> Tensor:
    """Adaptive instance normalization of an [H, W, C] map.

    Each channel is shifted/scaled so its statistics become
    (mu_t, sqrt(var_t)). The denominator is regularized as
    sqrt(sigma^2 + eps^2), which leaves the eps=0 contract exact and keeps
    the fixed-point error (targets = own stats) at second order in eps.
    A constant channel with eps=0 maps to the plain target mean, and the
    sqrt subgradients at zero are 0, matching the relu convention.

    Implemented as one fused tape node: it sits in every stage of every
    forward pass, so the composed form's dozen intermediates would
    dominate the step time.
    """
    x = _coerce(x)
    mu_t, var_t = _coerce(mu_t), _coerce(var_t)
    if x.ndim != 3:
        raise DimensionError(f"adain input must be [H, W, C], got {x.shape}")
    c = x.shape[2]
    if mu_t.shape != (c,) or var_t.shape != (c,):
        raise DimensionError(
            f"target vectors must have shape ({c},), got {mu_t.shape} and {var_t.shape}")
    if np.any(var_t.data < 0.0):
        raise ContractError("adain target variance has a negative entry")
    if eps < 0.0:
        raise ContractError("adain eps must be non-negative")

    n = x.shape[0] * x.shape[1]
    u = x.data - x.data.mean(axis=(0, 1))            # centered input
    sigma2 = (u * u).mean(axis=(0, 1))
    denom = np.sqrt(sigma2 + eps * eps)
    s = np.sqrt(var_t.data)
    k = np.where(denom > 0.0, s / np.where(denom > 0.0, denom, 1.0), 0.0)
    data = u * k + mu_t.data

    def factory(out):
        def bw():
            g = out.grad
            if mu_t.requires_grad:
                _accum(mu_t, g.sum(axis=(0, 1)))
            gu = None
            if var_t.requires_grad or x.requires_grad:
                gu = (g * u).sum(axis=(0, 1))        # sum of grad * centered input
            if var_t.requires_grad:
                # dz/dvar_t = u / (2 s denom); subgradient 0 at var_t == 0
                safe_s = np.where(s > 0.0, s, 1.0)
                safe_d = np.where(denom > 0.0, denom, 1.0)
                _accum(var_t, np.where((s > 0.0) & (denom > 0.0),
                                       gu / (2.0 * safe_s * safe_d), 0.0))
            if x.requires_grad:
                # d/dx of u*k: k*(g - mean(g)) - s*u*sum(g*u)/(n*denom^3)
                gx = g - g.mean(axis=(0, 1))
                gx *= k
                safe_d = np.where(denom > 0.0, denom, 1.0)
                coeff = np.where(denom > 0.0, s * gu / (n * safe_d ** 3), 0.0)
                gx -= u * coeff
                _accum(x, gx)
        return bw

    return _record(data, (x, mu_t, var_t), factory)


def glorot_uniform_init(shape, rng: np.random.Generator) -> Tensor:
    """Glorot/Xavier uniform sample on [-L, L], L = sqrt(6 / (fan_in + fan_out))."""
    shape = tuple(int(s) for s in shape)
    if len(shape) == 2:
        fan_in, fan_out = shape
    elif len(shape) == 4:
        kh, kw, cin, cout = shape
        fan_in, fan_out = kh * kw * cin, kh * kw * cout
    else:
        raise ContractError(f"cannot derive fans from shape {shape}")
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)
