"""Image container, pyramid, patch and disk-filter primitives.

Images are numpy float64 arrays of shape (channels, height, width) with
intensities kept in the native [0, 255] range. Channels is 1 (grayscale)
or 3 (RGB). No implicit rescaling happens anywhere in the package; every
threshold is documented against that range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .errors import FrameEmpty, FrameUnreadable, FrameUnsupported

#: Gaussian prefilter width used before each dyadic decimation.
PYRAMID_SIGMA = 0.8

_LUMA = np.array([0.299, 0.587, 0.114])


def load_frame(path) -> np.ndarray:
    """Read an 8-bit grayscale or RGB raster into a (C, H, W) float array.

    Raises FrameUnreadable for missing/corrupt files, FrameUnsupported for
    bit depths other than 8 bits per sample, FrameEmpty for zero-sized
    images.
    """
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I", "I;16", "I;16B", "I;16L", "F"):
                raise FrameUnsupported(f"{path}: unsupported bit depth (mode {mode})")
            if mode == "L":
                arr = np.asarray(im, dtype=np.float64)[None, :, :]
            elif mode == "RGB":
                arr = np.asarray(im, dtype=np.float64).transpose(2, 0, 1)
            elif mode in ("P", "RGBA", "LA", "1"):
                target = "L" if mode in ("LA", "1") else "RGB"
                conv = im.convert(target)
                arr = np.asarray(conv, dtype=np.float64)
                arr = arr[None, :, :] if arr.ndim == 2 else arr.transpose(2, 0, 1)
            else:
                raise FrameUnsupported(f"{path}: unsupported mode {mode}")
    except (FileNotFoundError, UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise FrameUnreadable(f"{path}: {exc}") from exc
    if arr.size == 0:
        raise FrameEmpty(f"{path}: zero-sized image")
    return np.ascontiguousarray(arr)


def save_frame(img: np.ndarray, path) -> None:
    """Write a (C, H, W) array as an 8-bit PNG/PPM/PGM, clamping to [0, 255]."""
    data = np.clip(np.round(img), 0, 255).astype(np.uint8)
    if data.shape[0] == 1:
        Image.fromarray(data[0], mode="L").save(path)
    else:
        Image.fromarray(data.transpose(1, 2, 0), mode="RGB").save(path)


def luminance(img: np.ndarray) -> np.ndarray:
    """Rec. 601 luminance plane of a (C, H, W) image."""
    if img.shape[0] == 1:
        return img[0]
    return np.tensordot(_LUMA, img, axes=(0, 0))


def max_scales(height: int, width: int, min_size: int = 1) -> int:
    """Largest pyramid depth such that the coarsest level is >= min_size."""
    n = 0
    side = min(height, width)
    while side >= min_size:
        n += 1
        side //= 2
    return n


def build_pyramid(img: np.ndarray, n_scales: int, min_size: int = 1) -> list[np.ndarray]:
    """Dyadic Gaussian pyramid; level 0 is the input.

    Each level is the previous one blurred with sigma PYRAMID_SIGMA and
    decimated by 2 per axis, so level s is floor(H / 2**s) x floor(W / 2**s).
    """
    if n_scales < 1:
        raise ValueError("n_scales must be >= 1")
    _, h, w = img.shape
    feasible = max_scales(h, w, min_size)
    if n_scales > feasible:
        raise ValueError(
            f"image {w}x{h} too small for {n_scales} scales with min level "
            f"size {min_size}; at most {feasible} scales are feasible"
        )
    levels = [np.asarray(img, dtype=np.float64)]
    for _ in range(n_scales - 1):
        prev = levels[-1]
        blurred = ndimage.gaussian_filter(
            prev, sigma=(0, PYRAMID_SIGMA, PYRAMID_SIGMA), mode="reflect"
        )
        h2, w2 = prev.shape[1] // 2, prev.shape[2] // 2
        levels.append(np.ascontiguousarray(blurred[:, : 2 * h2 : 2, : 2 * w2 : 2]))
    return levels


@dataclass
class PatchMatrix:
    """Dense patch-vector matrix: one column per patch origin.

    columns has shape (n, P) with n = side**2 * channels; each column is the
    channel-major flattening of a side x side window (all of channel 0 in
    row-major order, then channel 1, ...). origins[p] = (i, j) is the
    top-left pixel of column p.
    """

    columns: np.ndarray
    origins: np.ndarray
    side: int
    channels: int

    @property
    def patch_dim(self) -> int:
        return self.columns.shape[0]

    @property
    def count(self) -> int:
        return self.columns.shape[1]


def extract_patches(img: np.ndarray, side: int, stride: int = 1) -> PatchMatrix:
    """All fully in-bounds side x side patches at the given stride."""
    c, h, w = img.shape
    if side > h or side > w:
        raise ValueError(f"patch side {side} exceeds image dimensions {w}x{h}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    win = np.lib.stride_tricks.sliding_window_view(img, (side, side), axis=(1, 2))
    win = win[:, ::stride, ::stride]  # (C, nh, nw, side, side)
    nh, nw = win.shape[1], win.shape[2]
    cols = win.transpose(1, 2, 0, 3, 4).reshape(nh * nw, c * side * side).T
    ii, jj = np.meshgrid(
        np.arange(0, nh * stride, stride), np.arange(0, nw * stride, stride), indexing="ij"
    )
    origins = np.stack([ii.ravel(), jj.ravel()], axis=1)
    return PatchMatrix(np.ascontiguousarray(cols), origins, side, c)


def place_patches(
    accum: np.ndarray,
    counts: np.ndarray,
    origins: np.ndarray,
    columns: np.ndarray,
    side: int,
) -> None:
    """Accumulate patch columns back into per-pixel sums and coverage counts.

    accum is (C, H, W), counts is (H, W); both are mutated in place.
    """
    c, h, w = accum.shape
    if columns.shape[0] != c * side * side:
        raise ValueError("column dimension does not match accumulator geometry")
    oi = origins[:, 0]
    oj = origins[:, 1]
    if oi.size and (
        oi.min() < 0 or oj.min() < 0 or oi.max() + side > h or oj.max() + side > w
    ):
        raise ValueError("patch origin out of bounds")
    patches = columns.T.reshape(-1, c, side, side)
    for di in range(side):
        for dj in range(side):
            counts[oi + di, oj + dj] += 1
            for ch in range(c):
                accum[ch, oi + di, oj + dj] += patches[:, ch, di, dj]


@dataclass(frozen=True)
class DiskKernel:
    """Mean filter supported on integer points within Euclidean radius r."""

    radius: int
    weights: np.ndarray

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.weights))


def disk_kernel(radius: int) -> DiskKernel:
    if not 1 <= radius <= 8:
        raise ValueError("disk radius must be in [1, 8]")
    r = radius
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    inside = (yy * yy + xx * xx) <= r * r
    weights = inside / inside.sum()
    return DiskKernel(radius=r, weights=weights)


def convolve_disk(plane: np.ndarray, kernel: DiskKernel) -> np.ndarray:
    """Disk-mean filter with mirror (symmetric) border extension."""
    k = kernel.weights.shape[0]
    if plane.shape[0] < k or plane.shape[1] < k:
        raise ValueError(
            f"plane {plane.shape} smaller than kernel support {k}x{k}"
        )
    return ndimage.convolve(plane, kernel.weights, mode="reflect")
