"""Empirical prior over artificial light colors.

Light colors are parametrized with red fixed at 1.  Blue follows a line in
green (``blue = slope * green + intercept``) within a vertical band of
half-width ``band_halfwidth``, and green follows a binned histogram over
``[0, 1]``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import tomli
import tomli_w

from .fastops import resample, window_extremum_valid

DEFAULT_SLOPE = 1.133
DEFAULT_INTERCEPT = -0.3616
DEFAULT_BAND = 0.08
HIST_BINS = 32
COVERAGE = 0.9868
FIT_SIZE = 100


def _default_green_hist(bins: int = HIST_BINS, center: float = 0.75, sigma: float = 0.12,
                        lo: float = 0.4, hi: float = 1.0) -> np.ndarray:
    edges = np.linspace(0.0, 1.0, bins + 1)
    a, b = np.clip(edges[:-1], lo, hi), np.clip(edges[1:], lo, hi)
    cdf = lambda x: 0.5 * (1.0 + np.vectorize(math.erf)((x - center) / (sigma * math.sqrt(2))))
    mass = np.where(b > a, cdf(b) - cdf(a), 0.0)
    return mass / mass.sum()


@dataclass
class LightPriorModel:
    slope: float = DEFAULT_SLOPE
    intercept: float = DEFAULT_INTERCEPT
    band_halfwidth: float = DEFAULT_BAND
    green_hist: np.ndarray = field(default_factory=_default_green_hist)

    def __post_init__(self):
        self.green_hist = np.asarray(self.green_hist, dtype=np.float64)
        if self.green_hist.ndim != 1 or self.green_hist.size == 0:
            raise ValueError("green histogram is empty")
        if np.any(self.green_hist < 0) or not self.green_hist.sum() > 0:
            raise ValueError("green histogram must be non-negative with positive mass")
        self.green_hist = self.green_hist / self.green_hist.sum()
        if not self.band_halfwidth > 0:
            raise ValueError("band_halfwidth must be positive")

    @property
    def bin_edges(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.green_hist.size + 1)

    def predict_blue(self, green):
        """Center of the band at ``green``; not clamped."""
        return green * self.slope + self.intercept

    def in_band(self, green, blue, tol: float = 1e-12):
        return np.abs(np.asarray(blue) - self.predict_blue(green)) <= self.band_halfwidth + tol

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "slope": float(self.slope),
            "intercept": float(self.intercept),
            "band_halfwidth": float(self.band_halfwidth),
            "green_hist": [float(p) for p in self.green_hist],
        }

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "wb") as f:
            tomli_w.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "LightPriorModel":
        with open(path, "rb") as f:
            data = tomli.load(f)
        unknown = set(data) - {"slope", "intercept", "band_halfwidth", "green_hist"}
        if unknown:
            raise ValueError(f"unknown light prior keys: {sorted(unknown)}")
        return cls(**data)


def predict_blue(green: float, model: LightPriorModel | None = None) -> float:
    return (model or LightPriorModel()).predict_blue(green)


def _blue_interval(model: LightPriorModel, green: np.ndarray):
    center = model.predict_blue(green)
    lo = np.maximum(center - model.band_halfwidth, 0.0)
    hi = np.minimum(center + model.band_halfwidth, 1.0)
    return lo, hi


def sample_light_colors(model: LightPriorModel, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` RGB light colors, shape ``(n, 3)``, red always 1.

    Green is uniform within a histogram bin picked by bin mass; blue is
    uniform over the band at that green intersected with ``[0, 1]``.  Bins
    whose band misses ``[0, 1]`` entirely are never picked.
    """
    edges = model.bin_edges
    p = model.green_hist.copy()
    # a bin is usable if the band touches [0, 1] somewhere inside it
    lo_e, hi_e = _blue_interval(model, edges[:-1])
    lo_f, hi_f = _blue_interval(model, edges[1:])
    p[(lo_e > hi_e) & (lo_f > hi_f)] = 0.0
    if not p.sum() > 0:
        raise ValueError("light prior has no histogram mass where the band meets [0, 1]")
    p /= p.sum()
    out = np.ones((n, 3))
    remaining = np.arange(n)
    while remaining.size:
        bins = rng.choice(p.size, size=remaining.size, p=p)
        green = rng.uniform(edges[bins], edges[bins + 1])
        lo, hi = _blue_interval(model, green)
        ok = lo <= hi
        u = rng.uniform(0.0, 1.0, size=remaining.size)
        idx = remaining[ok]
        out[idx, 1] = green[ok]
        out[idx, 2] = lo[ok] + u[ok] * (hi[ok] - lo[ok])
        remaining = remaining[~ok]
    return out


def sample_light_color(model: LightPriorModel, rng: np.random.Generator) -> np.ndarray:
    return sample_light_colors(model, rng, 1)[0]


def default_fit_scales(count: int = 10, smallest: int = 11, largest: int = FIT_SIZE) -> list[int]:
    sizes = np.geomspace(smallest, largest, count)
    return sorted({int(round(s)) for s in sizes})


def _patch_colors(img: np.ndarray, size: int) -> np.ndarray:
    """MRP color estimate of every ``size x size`` patch inside ``img``.

    Returns (n, 2) normalized (green, blue) with red scaled to 1.
    """
    size = min(size, *img.shape[:2])
    maxima = window_extremum_valid(img, size, "max").reshape(-1, 3)
    red = maxima[:, 0]
    keep = red > 0
    gb = maxima[keep, 1:] / red[keep, None]
    return np.clip(gb, 0.0, 1.0)


def fit_light_prior(corpus: Sequence[np.ndarray], scales: Sequence[int] | None = None,
                    bins: int = HIST_BINS, coverage: float = COVERAGE) -> LightPriorModel:
    """Fit the line, band and green histogram from nighttime images.

    Each image is shrunk to 100x100; for every patch scale the per-channel
    patch maxima give a light color (red normalized to 1).  The line is the
    least-squares fit through the per-scale mean colors; the band is the
    smallest half-width containing ``coverage`` of all estimates.
    """
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    scales = list(scales or default_fit_scales())
    per_scale: list[np.ndarray] = [[] for _ in scales]
    for img in corpus:
        img = np.asarray(img, dtype=np.float64)
        if img.ndim != 3 or img.shape[2] != 3:
            raise ValueError("corpus images must have 3 channels")
        h, w = img.shape[:2]
        mode = "bilinear-down" if min(h, w) >= FIT_SIZE else "bilinear-up"
        small = resample(img, 1, mode, size=(FIT_SIZE, FIT_SIZE))
        for k, s in enumerate(scales):
            per_scale[k].append(_patch_colors(small, s))
    # sorted so reductions do not depend on corpus order
    per_scale = [np.concatenate(p) for p in per_scale]
    per_scale = [p[np.lexsort(p.T[::-1])] for p in per_scale]
    samples = np.concatenate(per_scale)
    if samples.size == 0:
        raise ValueError("corpus produced no color estimates (all-black images?)")
    centers = np.array([p.mean(axis=0) for p in per_scale if len(p)])

    g, b = centers[:, 0], centers[:, 1]
    if np.ptp(g) < 1e-9:
        # one distinct center: horizontal line through it
        slope, intercept = 0.0, float(b.mean())
    else:
        slope, intercept = np.polyfit(g, b, 1)
    resid = np.abs(samples[:, 1] - (slope * samples[:, 0] + intercept))
    halfwidth = float(np.quantile(resid, coverage, method="higher"))
    halfwidth = max(halfwidth, 1e-6)

    hist, _ = np.histogram(samples[:, 0], bins=bins, range=(0.0, 1.0))
    return LightPriorModel(float(slope), float(intercept), halfwidth, hist.astype(np.float64))
