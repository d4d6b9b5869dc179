"""
Convolution and resampling primitives on [C x H x W] maps.

Maps are latitude-by-longitude. Longitude (W) is periodic, so padding
wraps around; latitude (H) is zero padded. Convolutions are
cross-correlations, output pixel (i, j) is centred on input pixel
(i * stride, j * stride), which gives H' = ceil(H / stride).
"""
from __future__ import annotations

import math
from typing import Literal

import numpy as np

from ioncast.errors import ArgumentError, DimensionError
from ioncast.tensor.tensor import Primitive, Tensor, apply, as_tensor

Padding = Literal["circular", "valid"]


def _pad(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    """Zero-pad latitude, wrap longitude."""
    if pw:
        x = np.pad(x, ((0, 0), (0, 0), (pw, pw)), mode="wrap")
    if ph:
        x = np.pad(x, ((0, 0), (ph, ph), (0, 0)), mode="constant")
    return x


def _unpad(gp: np.ndarray, ph: int, pw: int, height: int, width: int) -> np.ndarray:
    """Adjoint of _pad: crop latitude, fold wrapped longitude columns back."""
    rows = gp[:, ph : ph + height, :]
    if not pw:
        return np.ascontiguousarray(rows)
    out = np.zeros(rows.shape[:2] + (width,), dtype=gp.dtype)
    columns = (np.arange(rows.shape[2]) - pw) % width
    np.add.at(out.transpose(2, 0, 1), columns, rows.transpose(2, 0, 1))
    return out


def _correlate(xp: np.ndarray, kernel: np.ndarray, stride: int) -> np.ndarray:
    """Valid strided cross-correlation of a padded map."""
    kh, kw = kernel.shape[2:]
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]
    c, ho, wo = windows.shape[:3]
    cols = windows.transpose(1, 2, 0, 3, 4).reshape(ho * wo, c * kh * kw)
    out = cols @ kernel.reshape(kernel.shape[0], -1).T
    return np.ascontiguousarray(out.T.reshape(kernel.shape[0], ho, wo))


def _correlate_input_grad(
    grad: np.ndarray, kernel: np.ndarray, stride: int, padded_shape: tuple[int, int]
) -> np.ndarray:
    """Adjoint of _correlate with respect to the padded input."""
    o, c, kh, kw = kernel.shape
    ho, wo = grad.shape[1:]
    cols = kernel.reshape(o, c * kh * kw).T @ grad.reshape(o, ho * wo)
    cols = cols.reshape(c, kh, kw, ho, wo)
    out = np.zeros((c,) + padded_shape, dtype=grad.dtype)
    for a in range(kh):
        for b in range(kw):
            out[:, a : a + stride * (ho - 1) + 1 : stride, b : b + stride * (wo - 1) + 1 : stride] += cols[:, a, b]
    return out


def _correlate_kernel_grad(grad: np.ndarray, xp: np.ndarray, stride: int, kh: int, kw: int) -> np.ndarray:
    """Adjoint of _correlate with respect to the kernel."""
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]
    c, ho, wo = windows.shape[:3]
    cols = windows.transpose(1, 2, 0, 3, 4).reshape(ho * wo, c * kh * kw)
    out = grad.reshape(grad.shape[0], ho * wo) @ cols
    return out.reshape(grad.shape[0], c, kh, kw)


def _check_stride(stride: int) -> None:
    if stride < 1:
        raise ArgumentError(f"stride must be >= 1, got {stride}")


def _check_conv_shapes(x: np.ndarray, kernel: np.ndarray, op: str) -> None:
    if x.ndim != 3 or kernel.ndim != 4:
        raise DimensionError(f"{op}: expected input [C x H x W] and kernel [O x C x kh x kw], got {x.shape} and {kernel.shape}")
    if kernel.shape[1] != x.shape[0]:
        raise DimensionError(f"{op}: input has {x.shape[0]} channels, kernel {kernel.shape} expects {kernel.shape[1]}")


class Conv2dCircular(Primitive):
    name = "conv2d_circular"

    def __init__(self, stride: int) -> None:
        self.stride = stride

    def forward(self, x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
        _check_conv_shapes(x, kernel, self.name)
        kh, kw = kernel.shape[2:]
        if kh % 2 == 0 or kw % 2 == 0:
            raise DimensionError(f"{self.name}: kernel extents must be odd, got {kh}x{kw}")
        xp = _pad(x, kh // 2, kw // 2)
        if xp.shape[1] < kh or xp.shape[2] < kw:
            raise DimensionError(f"{self.name}: kernel {kh}x{kw} larger than padded input {xp.shape[1:]}")
        return _correlate(xp, kernel, self.stride)

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        x, kernel = inputs
        kh, kw = kernel.shape[2:]
        ph, pw = kh // 2, kw // 2
        xp = _pad(x, ph, pw)
        g_xp = _correlate_input_grad(grad, kernel, self.stride, xp.shape[1:])
        g_x = _unpad(g_xp, ph, pw, x.shape[1], x.shape[2])
        g_k = _correlate_kernel_grad(grad, xp, self.stride, kh, kw)
        return g_x, g_k


class Conv2dTransposed(Primitive):
    """
    Adjoint of a strided convolution.

    ``kernel`` has the layout of the forward convolution it transposes,
    [I x C x kh x kw]: the input here has I channels and the output C.
    """

    name = "conv2d_transposed"

    def __init__(self, stride: int, padding: Padding, output_size: tuple[int, int] | None) -> None:
        self.stride = stride
        self.padding = padding
        self.output_size = output_size

    def _geometry(self, y: np.ndarray, kernel: np.ndarray) -> tuple[int, int, int, int]:
        kh, kw = kernel.shape[2:]
        ho, wo = y.shape[1:]
        if self.padding == "circular":
            if kh % 2 == 0 or kw % 2 == 0:
                raise DimensionError(f"{self.name}: circular padding needs odd kernel extents, got {kh}x{kw}")
            height, width = self.output_size or (ho * self.stride, wo * self.stride)
            if math.ceil(height / self.stride) != ho or math.ceil(width / self.stride) != wo:
                raise DimensionError(
                    f"{self.name}: output size {(height, width)} does not downsample to input {(ho, wo)} at stride {self.stride}"
                )
            return height, width, kh // 2, kw // 2
        height = (ho - 1) * self.stride + kh
        width = (wo - 1) * self.stride + kw
        if self.output_size is not None and tuple(self.output_size) != (height, width):
            raise DimensionError(f"{self.name}: valid padding produces {(height, width)}, not {self.output_size}")
        return height, width, 0, 0

    def forward(self, y: np.ndarray, kernel: np.ndarray) -> np.ndarray:
        if y.ndim != 3 or kernel.ndim != 4 or kernel.shape[0] != y.shape[0]:
            raise DimensionError(f"{self.name}: input {y.shape} incompatible with kernel {kernel.shape}")
        height, width, ph, pw = self._geometry(y, kernel)
        g_xp = _correlate_input_grad(y, kernel, self.stride, (height + 2 * ph, width + 2 * pw))
        if self.padding == "circular":
            return _unpad(g_xp, ph, pw, height, width)
        return g_xp

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        y, kernel = inputs
        kh, kw = kernel.shape[2:]
        _, _, ph, pw = self._geometry(y, kernel)
        gp = _pad(grad, ph, pw) if self.padding == "circular" else grad
        g_y = _correlate(gp, kernel, self.stride)
        g_k = _correlate_kernel_grad(y, gp, self.stride, kh, kw)
        return g_y, g_k


def _bilinear_matrix(size: int, factor: int, dtype: np.dtype) -> np.ndarray:
    """[factor*size x size] interpolation operator, cell-centre convention."""
    out = np.zeros((size * factor, size), dtype=dtype)
    src = (np.arange(size * factor) + 0.5) / factor - 0.5
    src = np.clip(src, 0.0, size - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, size - 1)
    frac = src - lo
    rows = np.arange(size * factor)
    np.add.at(out, (rows, lo), 1.0 - frac)
    np.add.at(out, (rows, hi), frac)
    return out


class UpsampleBilinear(Primitive):
    name = "upsample_bilinear"

    def __init__(self, factor: int) -> None:
        self.factor = factor

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3:
            raise DimensionError(f"{self.name}: expected [C x H x W], got {x.shape}")
        uh = _bilinear_matrix(x.shape[1], self.factor, x.dtype)
        uw = _bilinear_matrix(x.shape[2], self.factor, x.dtype)
        return np.ascontiguousarray(np.einsum("ph,chw,qw->cpq", uh, x, uw))

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        (x,) = inputs
        uh = _bilinear_matrix(x.shape[1], self.factor, grad.dtype)
        uw = _bilinear_matrix(x.shape[2], self.factor, grad.dtype)
        return (np.ascontiguousarray(np.einsum("ph,cpq,qw->chw", uh, grad, uw)),)


def conv2d_circular(x: Tensor, kernel: Tensor, stride: int = 1) -> Tensor:
    """
    Strided convolution with longitude wrap and latitude zero padding.

    Args:
        x: Input map [C x H x W].
        kernel: Weights [O x C x kh x kw], odd extents.
        stride: Output subsampling; output is [O x ceil(H/s) x ceil(W/s)].
    """
    _check_stride(stride)
    return apply(Conv2dCircular(stride), as_tensor(x), as_tensor(kernel))


def conv2d_transposed(
    y: Tensor,
    kernel: Tensor,
    stride: int = 1,
    padding: Padding = "circular",
    output_size: tuple[int, int] | None = None,
) -> Tensor:
    """
    Transposed convolution: the exact adjoint of the matching convolution.

    With ``padding="circular"`` it is the adjoint of conv2d_circular with
    the same kernel and stride; ``output_size`` picks between the spatial
    sizes that downsample to the input (default input size times stride).
    With ``padding="valid"`` it is the adjoint of an unpadded correlation
    and the output is (H - 1) * stride + kh by (W - 1) * stride + kw.
    """
    _check_stride(stride)
    if padding not in ("circular", "valid"):
        raise ArgumentError(f"unknown padding {padding!r}")
    return apply(Conv2dTransposed(stride, padding, output_size), as_tensor(y), as_tensor(kernel))


def upsample_bilinear(x: Tensor, factor: int) -> Tensor:
    """Bilinear upsampling by an integer factor (align-corners off)."""
    if factor < 1:
        raise ArgumentError(f"upsample factor must be >= 1, got {factor}")
    return apply(UpsampleBilinear(factor), as_tensor(x))
