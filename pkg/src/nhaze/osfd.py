"""Two-pass nighttime dehazing by optimal-scale fusion.

Pass one estimates the color cast at every scale from per-channel windowed
maxima of the hazy input, averages the scales, removes the cast, and
dehazes with a dark-channel transmission.  Pass two normalizes that first
result by its illuminance, finds each pixel's optimal scale on it, picks
the cast estimate of that scale, and dehazes the original input again.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fastops import (
    channel_max,
    channel_min,
    guided_filter_fast,
    nearest_index,
    resample,
    window_extremum,
)
from .imaging import to_gray
from .osmrp import EPS_TIE, MultiScaleMax, ScaleSet, optimal_scale

_STRIP_PIXELS = 1 << 15


@dataclass(frozen=True)
class GuidedParams:
    radius: int = 41
    eps: float = 1e-3
    subsample: int = 4

    def __post_init__(self):
        if self.radius < 1 or not self.eps > 0 or self.subsample < 1:
            raise ValueError(f"invalid guided filter parameters: {self}")

    def apply(self, guide: np.ndarray, src: np.ndarray) -> np.ndarray:
        # guided filter needs the subsampled image to keep at least one pixel
        d = max(1, min(self.subsample, min(guide.shape[:2])))
        return guided_filter_fast(guide, src, self.radius, self.eps, d)


@dataclass(frozen=True)
class DehazeParams:
    scales: ScaleSet = field(default_factory=ScaleSet)
    omega_t: int = 15
    omega_L: int = 15
    t0: float = 0.1
    eta_min: float = 0.1
    L_min: float = 0.05
    eps_tie: float = EPS_TIE
    eta_filter: GuidedParams = GuidedParams(41, 1e-3, 4)
    L_filter: GuidedParams = GuidedParams(41, 1e-4, 4)
    t_filter: GuidedParams = GuidedParams(41, 1e-4, 4)

    def __post_init__(self):
        for name in ("t0", "eta_min", "L_min"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        for name in ("omega_t", "omega_L"):
            v = getattr(self, name)
            if v < 1 or v % 2 == 0:
                raise ValueError(f"{name} must be a positive odd window size, got {v}")


class CastStack:
    """Per-scale color cast and illuminance of the hazy input.

    Maps are held at the reduced resolution each scale was computed on and
    enlarged on request, so memory stays near one full-size image.
    """

    def __init__(self, I: np.ndarray, scales: ScaleSet):
        maxima = MultiScaleMax(I, scales)
        self.shape = maxima.shape
        self.scales = scales
        self._maxima = maxima
        self.eta_levels = []
        self.L_levels = []
        for level in maxima.levels:
            eta, L = _cast_from_maxima(level)
            self.eta_levels.append(eta)
            self.L_levels.append(L)

    def __len__(self) -> int:
        return len(self.eta_levels)

    def eta(self, i: int) -> np.ndarray:
        return self._enlarge(self.eta_levels[i])

    def L(self, i: int) -> np.ndarray:
        return self._enlarge(self.L_levels[i])

    def eta_at(self, i: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """``eta(i)`` sampled at full-resolution pixels ``(rows, cols)``."""
        level = self.eta_levels[i]
        h, w = level.shape[:2]
        if (h, w) != self.shape:
            rows = nearest_index(h, self.shape[0])[rows]
            cols = nearest_index(w, self.shape[1])[cols]
        return level[rows, cols]

    def _enlarge(self, level):
        if level.shape[:2] == self.shape:
            return level
        return resample(level, 1, "nearest-up", size=self.shape)

    def to_array(self) -> np.ndarray:
        return np.stack([self.eta(i) for i in range(len(self))], axis=0)


def _cast_from_maxima(maxima: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    L = channel_max(maxima)
    eta = np.ones_like(maxima)
    np.divide(maxima, L[..., None], out=eta, where=L[..., None] > 0)
    return eta, L


def estimate_cast_scale(I: np.ndarray, size: int, base: int = 7,
                        downsample: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Color cast ``eta_s`` (H, W, 3) and illuminance ``L_s`` (H, W) at one
    window size; windows larger than ``base`` use the shrunken image."""
    I = np.asarray(I, dtype=np.float64)
    if I.ndim != 3 or I.shape[2] != 3:
        raise ValueError("input must have 3 channels")
    sizes = (base, size) if size > base else (size,)
    stack = CastStack(I, ScaleSet(sizes, downsample=downsample and len(sizes) > 1))
    return stack.eta(len(sizes) - 1), stack.L(len(sizes) - 1)


def fuse_cast_mean(stack: CastStack, guide: np.ndarray | None = None,
                   refine: GuidedParams | None = None) -> np.ndarray:
    """Mean cast over scales, optionally refined with a guided filter."""
    if len(stack) == 0:
        raise ValueError("empty cast stack")
    h, w = stack.shape
    maps = [(level, nearest_index(level.shape[0], h), nearest_index(level.shape[1], w))
            for level in stack.eta_levels]
    eta = np.zeros((h, w, 3))
    # row strips keep the enlarged levels cache-sized
    step = max(1, _STRIP_PIXELS // w)
    for y in range(0, h, step):
        acc = eta[y:y + step]
        for level, rows, cols in maps:
            acc += np.take(np.take(level, rows[y:y + step], axis=0), cols, axis=1)
    eta /= len(stack)
    if guide is not None:
        eta = (refine or GuidedParams()).apply(guide, eta)
    return eta


def fuse_cast_optimal(stack: CastStack, s_star: np.ndarray, guide: np.ndarray | None = None,
                      refine: GuidedParams | None = None) -> np.ndarray:
    """Pick each pixel's cast from the scale named by ``s_star``."""
    s_star = np.asarray(s_star)
    if s_star.size and (s_star.min() < 0 or s_star.max() >= len(stack)):
        raise IndexError("optimal-scale index out of range")
    eta = np.empty(stack.shape + (3,))
    # each pixel is read only from its selected level
    flat = s_star.astype(np.uint8 if len(stack) < 256 else np.int64).ravel()
    out = eta.reshape(-1, 3)
    for i in range(len(stack)):
        idx = np.flatnonzero(flat == i)
        if idx.size:
            out[idx] = stack.eta_at(i, *np.divmod(idx, stack.shape[1]))
    if guide is not None:
        eta = (refine or GuidedParams()).apply(guide, eta)
    return eta


def correct_cast(I: np.ndarray, eta: np.ndarray, eta_min: float = 0.1) -> np.ndarray:
    """Divide out the cast; the result is not clamped."""
    I = np.asarray(I, dtype=np.float64)
    d = np.maximum(eta, eta_min)
    if d.shape != I.shape:
        return I / d
    return np.divide(I, d, out=d)


def estimate_illuminance(I_corr: np.ndarray, omega: int = 15, guide: np.ndarray | None = None,
                         refine: GuidedParams | None = None) -> np.ndarray:
    L = window_extremum(channel_max(I_corr), omega, "max")
    if guide is not None:
        L = (refine or GuidedParams(eps=1e-4)).apply(guide, L)
        np.maximum(L, 0.0, out=L)
    return L


def estimate_transmission(I_corr: np.ndarray, L: np.ndarray, omega: int = 15,
                          guide: np.ndarray | None = None,
                          refine: GuidedParams | None = None) -> np.ndarray:
    """Dark-channel transmission against a spatially varying airlight ``L``.

    Where the windowed minimum of ``L`` is not positive there is no airlight
    evidence and ``t`` is 1.
    """
    dark = window_extremum(channel_min(I_corr), omega, "min")
    L_low = window_extremum(L, omega, "min")
    ratio = np.zeros_like(dark)
    np.divide(dark, L_low, out=ratio, where=L_low > 0)
    t = np.subtract(1.0, ratio, out=ratio)
    np.clip(t, 0.0, 1.0, out=t)
    if guide is not None:
        t = (refine or GuidedParams(eps=1e-4)).apply(guide, t)
        np.clip(t, 0.0, 1.0, out=t)
    return t


def recover(I_corr: np.ndarray, L: np.ndarray, t: np.ndarray, t0: float = 0.1,
            clamp: bool = True) -> np.ndarray:
    """``J = (I - L) / max(t, t0) + L``."""
    L3 = L[..., None]
    J = np.subtract(I_corr, L3)
    J /= np.maximum(t, t0)[..., None]
    J += L3
    if clamp:
        np.clip(J, 0.0, 1.0, out=J)
    return J


@dataclass
class DehazeResult:
    J: np.ndarray
    eta: np.ndarray
    L: np.ndarray
    t: np.ndarray
    s_star: np.ndarray
    eta_stack: CastStack
    initial: dict = field(default_factory=dict)


def _dehaze_with_cast(I, eta, p: DehazeParams):
    I_corr = correct_cast(I, eta, p.eta_min)
    guide = to_gray(I_corr)
    L = estimate_illuminance(I_corr, p.omega_L, guide, p.L_filter)
    t = estimate_transmission(I_corr, L, p.omega_t, guide, p.t_filter)
    return recover(I_corr, L, t, p.t0), L, t


def osfd(I: np.ndarray, params: DehazeParams | None = None) -> DehazeResult:
    p = params or DehazeParams()
    I = np.asarray(I, dtype=np.float64)
    if I.ndim != 3 or I.shape[2] != 3:
        raise ValueError("input must be an RGB image")
    gray = to_gray(I)

    stack = CastStack(I, p.scales)
    eta1 = fuse_cast_mean(stack, gray, p.eta_filter)
    J1, L1, t1 = _dehaze_with_cast(I, eta1, p)

    Rhat = J1 / np.maximum(L1, p.L_min)[..., None]
    s_star, _ = optimal_scale(Rhat, p.scales, p.eps_tie)
    eta2 = fuse_cast_optimal(stack, s_star, gray, p.eta_filter)
    J2, L2, t2 = _dehaze_with_cast(I, eta2, p)

    return DehazeResult(J2, eta2, L2, t2, s_star, stack,
                        initial={"J": J1, "eta": eta1, "L": L1, "t": t1})
