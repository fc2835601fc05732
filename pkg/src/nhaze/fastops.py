"""Windowed kernels with cost independent of window size.

* sliding minimum/maximum via the van Herk / Gil-Werman block scheme
* summed-area tables for box sums and box means
* the fast guided filter (coefficients solved on a subsampled pair)
* area downsampling and bilinear / nearest upsampling

Every window is centered and truncated at the image border, so results
only ever contain observed values and never see padding.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Literal

import cv2

import numpy as np

Mode = Literal["min", "max"]

_STRIP_ELEMS = 1 << 16
# up to this size OpenCV's O(size) morphology beats the O(1) block scan
MORPH_MAX_SIZE = 31


@dataclass(frozen=True)
class WindowSpec:
    size: int
    mode: Mode = "max"

    def __post_init__(self):
        if self.size < 1 or self.size % 2 == 0:
            raise ValueError(f"window size must be a positive odd integer, got {self.size}")
        if self.mode not in ("min", "max"):
            raise ValueError(f"mode must be 'min' or 'max', got {self.mode!r}")

    @property
    def radius(self) -> int:
        return self.size // 2


def channel_max(img: np.ndarray) -> np.ndarray:
    """Per-pixel maximum over the last axis; much faster than ``max(axis=-1)``
    for a handful of channels."""
    return functools.reduce(np.maximum, (img[..., c] for c in range(img.shape[-1])))


def channel_min(img: np.ndarray) -> np.ndarray:
    """Per-pixel minimum over the last axis."""
    return functools.reduce(np.minimum, (img[..., c] for c in range(img.shape[-1])))


def _sliding_1d(a: np.ndarray, size: int, op: np.ufunc, fill: float, axis: int) -> np.ndarray:
    """Centered sliding extremum along ``axis`` in O(n), independent of size."""
    axis = axis % a.ndim
    n = a.shape[axis]
    r = size // 2
    nblocks = -(-(n + 2 * r) // size)
    pshape = a.shape[:axis] + (nblocks * size,) + a.shape[axis + 1:]
    padded = np.full(pshape, fill, dtype=a.dtype)
    inner = (slice(None),) * axis
    padded[inner + (slice(r, r + n),)] = a
    blocks = padded.reshape(a.shape[:axis] + (nblocks, size) + a.shape[axis + 1:])
    prefix = op.accumulate(blocks, axis=axis + 1).reshape(pshape)
    rev = (slice(None),) * (axis + 1) + (slice(None, None, -1),)
    suffix = op.accumulate(blocks[rev], axis=axis + 1)[rev].reshape(pshape)
    # window [i, i + size) spans at most two blocks
    return op(suffix[inner + (slice(0, n),)], prefix[inner + (slice(size - 1, size - 1 + n),)])


def window_extremum(img: np.ndarray, size: int | WindowSpec, mode: Mode = "max") -> np.ndarray:
    """Min or max over the ``size x size`` window centered at each pixel.

    Accepts (H, W) or (H, W, C); channels are filtered independently.  The
    output is bit-identical to a naive scan over the truncated window.
    """
    spec = size if isinstance(size, WindowSpec) else WindowSpec(int(size), mode)
    img = np.asarray(img)
    if img.ndim not in (2, 3):
        raise ValueError("expected a 2-D or 3-D image")
    if spec.size == 1:
        return img.copy()
    work = np.ascontiguousarray(img, dtype=np.float64)
    channels = 1 if work.ndim == 2 else work.shape[2]
    if spec.size <= MORPH_MAX_SIZE and channels <= 4:
        # extrema are exact in any order; OpenCV's default border ignores outside pixels
        kernel = cv2.getStructuringElement(cv2.MORPH_RECT, (spec.size, spec.size))
        out = (cv2.dilate if spec.mode == "max" else cv2.erode)(work, kernel)
        return out.reshape(work.shape)
    op, fill = (np.maximum, -np.inf) if spec.mode == "max" else (np.minimum, np.inf)
    h, w = work.shape[:2]
    per_px = work.size // (h * w)
    # strips keep the pass temporaries cache-sized; rows (cols) are independent
    rows = np.empty_like(work)
    step = max(1, _STRIP_ELEMS // (w * per_px))
    for y in range(0, h, step):
        rows[y:y + step] = _sliding_1d(work[y:y + step], spec.size, op, fill, axis=1)
    out = np.empty_like(work)
    step = max(1, _STRIP_ELEMS // (h * per_px))
    for x in range(0, w, step):
        out[:, x:x + step] = _sliding_1d(rows[:, x:x + step], spec.size, op, fill, axis=0)
    return out


def _valid_1d(a: np.ndarray, size: int, op: np.ufunc, fill: float, axis: int) -> np.ndarray:
    """Extremum of every full window ``a[i:i+size]`` along ``axis``."""
    n = a.shape[axis]
    if size > n:
        raise ValueError(f"window {size} larger than extent {n}")
    shifted = np.moveaxis(a, axis, -1)
    nblocks = -(-n // size)
    padded = np.full(shifted.shape[:-1] + (nblocks * size,), fill, dtype=a.dtype)
    padded[..., :n] = shifted
    blocks = padded.reshape(shifted.shape[:-1] + (nblocks, size))
    prefix = op.accumulate(blocks, axis=-1).reshape(padded.shape)
    suffix = op.accumulate(blocks[..., ::-1], axis=-1)[..., ::-1].reshape(padded.shape)
    m = n - size + 1
    return np.moveaxis(op(suffix[..., :m], prefix[..., size - 1:size - 1 + m]), -1, axis)


def window_extremum_valid(img: np.ndarray, size: int, mode: Mode = "max") -> np.ndarray:
    """Extremum over every ``size x size`` window lying fully inside the image.

    Output is ``(H - size + 1, W - size + 1[, C])``; ``size`` may be even.
    """
    if size < 1:
        raise ValueError("window size must be >= 1")
    op, fill = (np.maximum, -np.inf) if mode == "max" else (np.minimum, np.inf)
    work = np.asarray(img, dtype=np.float64)
    out = _valid_1d(work, size, op, fill, axis=1)
    return np.ascontiguousarray(_valid_1d(out, size, op, fill, axis=0))


class SummedAreaTable:
    """``(H+1) x (W+1)`` running sums; entry (y, x) is the sum of ``img[:y, :x]``."""

    def __init__(self, img: np.ndarray):
        img = np.asarray(img, dtype=np.float64)
        if img.ndim != 2:
            raise ValueError("summed-area table needs a single-channel image")
        h, w = img.shape
        self.table = np.zeros((h + 1, w + 1), dtype=np.float64)
        np.cumsum(np.cumsum(img, axis=0), axis=1, out=self.table[1:, 1:])

    @property
    def shape(self) -> tuple[int, int]:
        return self.table.shape[0] - 1, self.table.shape[1] - 1

    def box_sum(self, y0: int, x0: int, y1: int, x1: int) -> float:
        """Sum over rows ``[y0, y1)`` and columns ``[x0, x1)``."""
        h, w = self.shape
        if not (0 <= y0 <= y1 <= h and 0 <= x0 <= x1 <= w):
            raise IndexError(f"rect ({y0},{x0})-({y1},{x1}) outside {h}x{w} image")
        t = self.table
        return float(t[y1, x1] - t[y0, x1] - t[y1, x0] + t[y0, x0])


def box_sum_map(img: np.ndarray, radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Windowed sums and truncated-window pixel counts for a 2-D image."""
    sat = SummedAreaTable(img).table
    h, w = img.shape
    ys, xs = np.arange(h), np.arange(w)
    y0, y1 = np.maximum(ys - radius, 0), np.minimum(ys + radius + 1, h)
    x0, x1 = np.maximum(xs - radius, 0), np.minimum(xs + radius + 1, w)
    sums = (sat[y1][:, x1] - sat[y0][:, x1]) - (sat[y1][:, x0] - sat[y0][:, x0])
    counts = np.outer(y1 - y0, x1 - x0).astype(np.float64)
    return sums, counts


def box_mean(img: np.ndarray, radius: int) -> np.ndarray:
    """Mean over the truncated ``(2r+1)^2`` window; channels independent."""
    img = np.asarray(img, dtype=np.float64)
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if img.ndim == 3:
        return np.stack([box_mean(img[..., c], radius) for c in range(img.shape[2])], axis=2)
    sums, counts = box_sum_map(img, radius)
    return sums / counts


# ---------------------------------------------------------------------------
# resampling

def _target(n: int, factor: float) -> int:
    return max(1, int(round(n / factor)))


def nearest_index(n_src: int, n_dst: int) -> np.ndarray:
    """Source index of each of ``n_dst`` output pixels under nearest
    sampling of pixel centers."""
    return np.minimum(((np.arange(n_dst) + 0.5) * n_src / n_dst).astype(np.int64), n_src - 1)


@functools.lru_cache(maxsize=64)
def _area_norm(h: int, w: int, th: int, tw: int) -> np.ndarray:
    norm = cv2.resize(np.ones((h, w)), (tw, th), interpolation=cv2.INTER_AREA)
    norm.setflags(write=False)
    return norm


def resample(img: np.ndarray, factor: float, mode: str = "bilinear-down",
             size: tuple[int, int] | None = None) -> np.ndarray:
    """Resize by ``factor`` (>= 1) or to an explicit ``size=(h, w)``.

    ``bilinear-down`` shrinks with area weighting; ``bilinear-up`` and
    ``nearest-up`` enlarge by mapping output pixel centers back to source
    coordinates.
    """
    img = np.asarray(img, dtype=np.float64)
    if factor < 1:
        raise ValueError(f"resample factor must be >= 1, got {factor}")
    h, w = img.shape[:2]
    if size is None:
        if mode == "bilinear-down":
            size = (_target(h, factor), _target(w, factor))
        else:
            size = (int(round(h * factor)), int(round(w * factor)))
    th, tw = size
    if th < 1 or tw < 1:
        raise ValueError(f"target dimension must be >= 1, got {size}")
    if (th, tw) == (h, w):
        return img.copy()
    if mode == "nearest-up":
        rows, cols = nearest_index(h, th), nearest_index(w, tw)
        return np.take(np.take(img, rows, axis=0), cols, axis=1)
    if mode == "bilinear-down":
        interp = cv2.INTER_AREA
    elif mode == "bilinear-up":
        interp = cv2.INTER_LINEAR
    else:
        raise ValueError(f"unknown resample mode {mode!r}")
    out = cv2.resize(img, (tw, th), interpolation=interp)
    if img.ndim == 3 and out.ndim == 2:
        out = out[:, :, None]
    if interp == cv2.INTER_AREA:
        # area weights are single precision; renormalize so they sum to 1
        norm = _area_norm(h, w, th, tw)
        out /= norm[:, :, None] if out.ndim == 3 else norm
    return out


# ---------------------------------------------------------------------------
# guided filter

def _guided_coefficients(mean_i, var_i, mean_p, corr_ip, radius, eps):
    a = (corr_ip - mean_i * mean_p) / (var_i + eps)
    b = mean_p - a * mean_i
    return box_mean(a, radius), box_mean(b, radius)


def guided_filter_fast(guide: np.ndarray, src: np.ndarray, radius: int, eps: float,
                       subsample: int = 1) -> np.ndarray:
    """Gray-guide guided filter.

    With ``subsample = d > 1`` the window statistics (means of I, p, I*I and
    I*p) are taken on d-times shrunken moment images with radius ``r/d``;
    the linear coefficients are then bilinearly enlarged and applied to the
    full-resolution guide.  Shrinking the moments rather than the images
    keeps the local variance of a textured guide intact.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    if not eps > 0:
        raise ValueError("eps must be positive")
    if subsample < 1:
        raise ValueError("subsample must be >= 1")
    guide = np.asarray(guide, dtype=np.float64)
    src = np.asarray(src, dtype=np.float64)
    if guide.ndim == 3:
        if guide.shape[2] != 1:
            raise ValueError("guide must be single channel")
        guide = guide[:, :, 0]
    if src.shape[:2] != guide.shape:
        raise ValueError(f"guide {guide.shape} and source {src.shape[:2]} differ in size")

    h, w = guide.shape
    if subsample == 1:
        shrink = lambda x: x  # noqa: E731
        r = radius
    else:
        shrink = lambda x: resample(x, subsample, "bilinear-down")  # noqa: E731
        r = max(1, int(round(radius / subsample)))
    mean_i = box_mean(shrink(guide), r)
    var_i = box_mean(shrink(guide * guide), r) - mean_i * mean_i

    def one(p):
        mean_a, mean_b = _guided_coefficients(mean_i, var_i, box_mean(shrink(p), r),
                                              box_mean(shrink(guide * p), r), r, eps)
        if subsample > 1:
            mean_a = resample(mean_a, 1, "bilinear-up", size=(h, w))
            mean_b = resample(mean_b, 1, "bilinear-up", size=(h, w))
        mean_a *= guide
        mean_a += mean_b
        return mean_a

    if src.ndim == 3:
        out = np.empty(src.shape)
        for c in range(src.shape[2]):
            out[..., c] = one(src[..., c])
        return out
    return one(src)
