"""Optimal-scale maximum reflectance.

For a set of window sizes the per-channel windowed maxima are computed on
progressively shrunken copies of the image (a fixed base window on an image
downsampled by the radius ratio), which keeps the cost per scale
proportional to the shrunken pixel count.  The product of the three channel
maxima is the whiteness probability, and the optimal scale of a pixel is
the smallest scale reaching the maximum probability.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .fastops import nearest_index, resample, window_extremum

DEFAULT_SIZES = tuple(range(7, 44, 4))
EPS_TIE = 1e-4


@dataclass(frozen=True)
class ScaleSet:
    sizes: tuple[int, ...] = DEFAULT_SIZES
    downsample: bool = True

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if not sizes:
            raise ValueError("scale set is empty")
        if any(s < 1 or s % 2 == 0 for s in sizes):
            raise ValueError(f"scale sizes must be odd and positive: {sizes}")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError(f"scale sizes must be strictly increasing: {sizes}")
        if self.downsample and sizes[0] < 3:
            raise ValueError("downsampling needs a base window of at least 3")

    def __len__(self) -> int:
        return len(self.sizes)

    def ratio(self, i: int) -> float:
        """Downsample ratio ``k_s``: patch radius relative to the smallest scale."""
        if not self.downsample:
            return 1.0
        return (self.sizes[i] // 2) / (self.sizes[0] // 2)


class MultiScaleMax:
    """Per-channel windowed maxima at every scale, kept at reduced resolution.

    ``levels[i]`` is the maximum map computed on the image shrunk by
    ``ratio(i)``; :meth:`full` enlarges it with nearest sampling.
    """

    def __init__(self, img: np.ndarray, scales: ScaleSet):
        img = np.asarray(img, dtype=np.float64)
        self.shape = img.shape[:2]
        self.scales = scales
        self.levels: list[np.ndarray] = []
        for i, size in enumerate(scales.sizes):
            k = scales.ratio(i)
            if k == 1.0:
                self.levels.append(window_extremum(img, size, "max"))
            else:
                small = resample(img, k, "bilinear-down")
                self.levels.append(window_extremum(small, scales.sizes[0], "max"))

    def __len__(self) -> int:
        return len(self.levels)

    def full(self, i: int) -> np.ndarray:
        level = self.levels[i]
        if level.shape[:2] == self.shape:
            return level
        return resample(level, 1, "nearest-up", size=self.shape)


class MaxReflectanceStack:
    """Windowed channel maxima across ascending scales, made monotone by a
    running maximum so that larger scales never report less.

    Iteration yields one buffer updated in place; copy a map to keep it.
    """

    def __init__(self, Rhat: np.ndarray, scales: ScaleSet):
        Rhat = np.clip(np.asarray(Rhat, dtype=np.float64), 0.0, 1.0)
        if Rhat.ndim != 3 or Rhat.shape[2] != 3:
            raise ValueError("reflectance estimate must have 3 channels")
        self.scales = scales
        self.maxima = MultiScaleMax(Rhat, scales)

    def __len__(self) -> int:
        return len(self.maxima)

    def __iter__(self) -> Iterator[np.ndarray]:
        running = None
        for i in range(len(self.maxima)):
            level = self.maxima.full(i)
            if running is None:
                running = level.copy()
            else:
                np.maximum(running, level, out=running)
            yield running

    def to_array(self) -> np.ndarray:
        """All scales as ``(S, H, W, 3)``."""
        return np.stack([m.copy() for m in self], axis=0)


def max_reflectance_stack(Rhat: np.ndarray, scales: ScaleSet | None = None) -> MaxReflectanceStack:
    return MaxReflectanceStack(Rhat, scales or ScaleSet())


def whiteness_probability(M: np.ndarray) -> np.ndarray:
    """Product of the channel maxima; works on (..., 3) arrays."""
    M = np.asarray(M, dtype=np.float64)
    return M[..., 0] * M[..., 1] * M[..., 2]


def probability_stack(stack: MaxReflectanceStack | Sequence[np.ndarray]) -> np.ndarray:
    """``(S, H, W)`` whiteness probabilities for every scale."""
    return np.stack([whiteness_probability(m) for m in stack], axis=0)


def optimal_scale_map(P: np.ndarray, eps_tie: float = EPS_TIE) -> np.ndarray:
    """Index of the smallest scale whose probability is within ``eps_tie`` of
    the per-pixel maximum over scales."""
    P = np.asarray(P)
    best = P.max(axis=0)
    return np.argmax(P >= best - eps_tie, axis=0).astype(np.int64)


_STRIP_PIXELS = 1 << 15


def optimal_scale(Rhat: np.ndarray, scales: ScaleSet | None = None,
                  eps_tie: float = EPS_TIE) -> tuple[np.ndarray, np.ndarray]:
    """``(s_star, P_at_s_star)`` of a reflectance estimate.

    Same result as running :func:`optimal_scale_map` on the full probability
    stack, computed in row strips so the stack is never held at full size.
    """
    stack = max_reflectance_stack(Rhat, scales)
    maxima = stack.maxima
    h, w = maxima.shape
    s_star = np.empty((h, w), dtype=np.int64)
    p_star = np.empty((h, w))
    maps = []
    for level in maxima.levels:
        lh, lw = level.shape[:2]
        maps.append((level, nearest_index(lh, h), nearest_index(lw, w)))
    step = max(1, _STRIP_PIXELS // w)
    for y in range(0, h, step):
        P = np.empty((len(maps), min(step, h - y), w))
        running = None
        for i, (level, rows, cols) in enumerate(maps):
            m = np.take(np.take(level, rows[y:y + step], axis=0), cols, axis=1)
            running = m if running is None else np.maximum(running, m, out=running)
            P[i] = whiteness_probability(running)
        s = optimal_scale_map(P, eps_tie)
        s_star[y:y + step] = s
        p_star[y:y + step] = np.take_along_axis(P, s[None], axis=0)[0]
    return s_star, p_star
