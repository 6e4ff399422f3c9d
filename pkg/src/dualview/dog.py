"""Fixed multi-scale Difference-of-Gaussian filter bank.

Each kernel is the difference of two normalised isotropic Gaussians sampled at
integer pixel offsets,

    DoG_s(x, y) = exp(-r^2 / 2s^2) / (2 pi s^2) - exp(-r^2 / s^2) / (pi s^2),

i.e. a width-``s`` Gaussian minus a width-``s/sqrt(2)`` Gaussian. Truncating
the support at ``ceil(3 s)`` clips part of the wide lobe, so the sampled kernel
no longer sums to zero. With ``zero_dc`` (the default) the missing mass is
returned to the wide lobe off-centre, which keeps the centre tap equal to the
closed form and the kernel exactly symmetric while restoring a zero DC
response. The correction is itself separable, which the fast path relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .tensor import ShapeError, Tensor, _result

SIGMAS: tuple[float, ...] = (
    math.sqrt(2), 2.0, 2 * math.sqrt(2), 4.0, 4 * math.sqrt(2), 8.0, 8 * math.sqrt(2), 16.0)


def half_width_for(sigma: float) -> int:
    return math.ceil(3 * sigma)


def _gauss_1d(offsets: np.ndarray, width: float) -> np.ndarray:
    return np.exp(-offsets ** 2 / (2 * width ** 2)) / (math.sqrt(2 * math.pi) * width)


@dataclass(frozen=True)
class _Terms:
    """Separable pieces: kernel = wide_gain * outer(wide) - outer(narrow) + delta_gain * delta."""
    wide: np.ndarray
    narrow: np.ndarray
    wide_gain: float
    delta_gain: float


def _terms(sigma: float, half_width: int, zero_dc: bool) -> _Terms:
    x = np.arange(-half_width, half_width + 1, dtype=np.float64)
    wide = _gauss_1d(x, sigma)
    narrow = _gauss_1d(x, sigma / math.sqrt(2))
    if not zero_dc:
        return _Terms(wide, narrow, 1.0, 0.0)
    wide_sum = wide.sum() ** 2
    residual = wide_sum - narrow.sum() ** 2
    centre = wide[half_width] ** 2
    alpha = residual / (wide_sum - centre)
    return _Terms(wide, narrow, 1.0 - alpha, alpha * centre)


def make_dog_kernel(sigma: float, half_width: int | None = None, zero_dc: bool = True) -> np.ndarray:
    """Sample the DoG at integer offsets on a ``2*half_width+1`` square grid (float64)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    min_hw = half_width_for(sigma)
    if half_width is None:
        half_width = min_hw
    if half_width < min_hw:
        raise ValueError(
            f"half_width {half_width} below the 3-sigma support ceil(3*{sigma:g}) = {min_hw}")
    x = np.arange(-half_width, half_width + 1, dtype=np.float64)
    r2 = x[:, None] ** 2 + x[None, :] ** 2
    s2 = sigma * sigma
    wide = np.exp(-r2 / (2 * s2)) / (2 * math.pi * s2)
    narrow = np.exp(-r2 / s2) / (math.pi * s2)
    kernel = wide - narrow
    if zero_dc:
        t = _terms(sigma, half_width, True)
        centre = kernel[half_width, half_width]
        kernel = kernel - (1.0 - t.wide_gain) * wide
        kernel[half_width, half_width] = centre
    return kernel


def _toeplitz(taps: np.ndarray, size: int) -> np.ndarray:
    """Banded matrix T with (T @ v)[i] = sum_j taps[j - i + h] v[j] (zero padding)."""
    h = len(taps) // 2
    idx = np.arange(size)
    d = idx[None, :] - idx[:, None]
    mat = np.zeros((size, size), dtype=np.float64)
    band = np.abs(d) <= h
    mat[band] = taps[(d + h)[band]]
    return mat


_BLOCK = 32


def _band_blocks(mat: np.ndarray, half_width: int) -> list:
    """Split a banded matrix into row blocks that only touch their nonzero columns."""
    n = mat.shape[0]
    blocks = []
    for r0 in range(0, n, _BLOCK):
        r1 = min(n, r0 + _BLOCK)
        c0, c1 = max(0, r0 - half_width), min(n, r1 + half_width)
        blocks.append((r0, r1, c0, c1, np.ascontiguousarray(mat[r0:r1, c0:c1])))
    return blocks


@lru_cache(maxsize=64)
def _operators(sigma: float, half_width: int, zero_dc: bool, size: int, dtype: str):
    t = _terms(sigma, half_width, zero_dc)
    wide = _band_blocks(_toeplitz(t.wide, size).astype(dtype), half_width)
    narrow = _band_blocks(_toeplitz(t.narrow, size).astype(dtype), half_width)
    return wide, narrow, t.wide_gain, t.delta_gain


def _separable_pass(images: np.ndarray, rows: list, cols: list) -> np.ndarray:
    """rows_matrix @ image @ cols_matrix for every image, skipping zero blocks."""
    tmp = np.empty_like(images)
    for r0, r1, c0, c1, blk in rows:
        np.matmul(blk, images[:, c0:c1], out=tmp[:, r0:r1])
    out = np.empty_like(images)
    # the banded matrices are symmetric, so a row block doubles as a column block
    for r0, r1, c0, c1, blk in cols:
        np.matmul(tmp[:, :, c0:c1], blk.T, out=out[:, :, r0:r1])
    return out


@dataclass(frozen=True)
class DoGFilterBank:
    sigmas: tuple[float, ...] = SIGMAS
    zero_dc: bool = True
    kernels: tuple[np.ndarray, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ks = []
        for s in self.sigmas:
            k = make_dog_kernel(s, half_width_for(s), self.zero_dc)
            k.setflags(write=False)
            ks.append(k)
        object.__setattr__(self, "kernels", tuple(ks))

    @property
    def half_widths(self) -> tuple[int, ...]:
        return tuple(half_width_for(s) for s in self.sigmas)

    def __len__(self) -> int:
        return len(self.sigmas)


def build_bank() -> DoGFilterBank:
    return DoGFilterBank()


def _filter_one(images: np.ndarray, sigma: float, half_width: int, zero_dc: bool) -> np.ndarray:
    n, h, w = images.shape
    code = images.dtype.str
    rw, rn, gw, gd = _operators(sigma, half_width, zero_dc, h, code)
    cw, cn = (rw, rn) if w == h else _operators(sigma, half_width, zero_dc, w, code)[:2]
    cast = images.dtype.type
    res = _separable_pass(images, rw, cw)
    res *= cast(gw)
    res -= _separable_pass(images, rn, cn)
    if gd:
        res += cast(gd) * images
    return res


def filter_images(images: np.ndarray, bank: DoGFilterBank, direct: bool = False) -> np.ndarray:
    """Same-size zero-padded correlation of (N,H,W) images with every kernel -> (N,K,H,W).

    The default path factorises each Gaussian term into row and column passes
    written as banded matrix products. ``direct=True`` sums over every tap of
    the full 2-D kernel instead and is kept as the reference.
    """
    images = np.asarray(images)
    if images.ndim != 3:
        raise ShapeError(f"expected (N, H, W) images, got {images.shape}")
    if not np.issubdtype(images.dtype, np.floating):
        images = images.astype(np.float64)
    n, h, w = images.shape
    out = np.empty((n, len(bank), h, w), dtype=images.dtype)
    for k, (sigma, hw) in enumerate(zip(bank.sigmas, bank.half_widths)):
        if direct:
            out[:, k] = _direct(images, bank.kernels[k])
        else:
            out[:, k] = _filter_one(images, sigma, hw, bank.zero_dc)
    return out


def _direct(images: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Reference correlation: one banded product per kernel row, every tap used."""
    n, h, w = images.shape
    hw = kernel.shape[0] // 2
    padded = np.zeros((n, h + 2 * hw, w), dtype=np.float64)
    padded[:, hw:hw + h] = images
    out = np.zeros((n, h, w), dtype=np.float64)
    for dy in range(kernel.shape[0]):
        row = _toeplitz(kernel[dy], w)
        out += padded[:, dy:dy + h] @ row.T
    return out


def apply_bank(image: Tensor, bank: DoGFilterBank, size: int | None = None) -> Tensor:
    """(N,1,H,W) -> (N,1+K,H,W): the raw image followed by the K DoG responses.

    Kernels are constants; gradient flows only to the image. Because every
    kernel is symmetric the layer is self-adjoint, so backward reuses forward.
    """
    if image.data.ndim != 4 or image.shape[1] != 1:
        raise ShapeError(f"apply_bank expects (N, 1, H, W), got {image.shape}")
    if size is not None and image.shape[2:] != (size, size):
        raise ShapeError(f"apply_bank expects {size}x{size} images, got {image.shape[2]}x{image.shape[3]}")
    x = image.data[:, 0]
    responses = filter_images(x, bank)
    data = np.concatenate([image.data, responses], axis=1)
    out = _result(data, (image,), "dog_bank")

    def _backward(g):
        gx = g[:, 0] + np.einsum("nkhw->nhw", _adjoint(g[:, 1:], bank))
        image._accumulate(gx[:, None])
    out._backward = _backward
    return out


def _adjoint(g: np.ndarray, bank: DoGFilterBank) -> np.ndarray:
    res = np.empty_like(g)
    for i, (sigma, hw) in enumerate(zip(bank.sigmas, bank.half_widths)):
        res[:, i] = _filter_one(np.ascontiguousarray(g[:, i]), sigma, hw, bank.zero_dc)
    return res
