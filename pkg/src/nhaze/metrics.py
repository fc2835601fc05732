"""Full-reference image quality: PSNR, SSIM and CIEDE2000."""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imaging import ImageIOError, list_images, read_image, to_gray

logger = logging.getLogger(__name__)

CSV_HEADER = ["path", "psnr", "ssim", "ciede2000"]


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio for peak 1; identical inputs give ``inf``."""
    a, b = _pair(a, b)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * math.log10(1.0 / mse))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - size // 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a: np.ndarray, b: np.ndarray, win: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM on 601 luma over all fully-inside 11x11 Gaussian windows."""
    a, b = _pair(a, b)
    x, y = to_gray(a), to_gray(b)
    if min(x.shape) < win:
        raise ValueError(f"image {x.shape} smaller than the {win}x{win} window")
    w = _gaussian_window(win, sigma)
    r = win // 2

    def filt(img):
        return ndimage.correlate(img, w, mode="constant")[r:-r, r:-r]

    mx, my = filt(x), filt(y)
    vx = filt(x * x) - mx * mx
    vy = filt(y * y) - my * my
    cxy = filt(x * y) - mx * my
    c1, c2 = k1 ** 2, k2 ** 2
    s = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    return float(s.mean())


# ---------------------------------------------------------------------------
# color difference

_SRGB_TO_XYZ = np.array([
    [0.412453, 0.357580, 0.180423],
    [0.212671, 0.715160, 0.072169],
    [0.019334, 0.119193, 0.950227],
])
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])


def srgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """sRGB in [0, 1] to CIELAB (D65, 2 degree observer)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    lin = np.where(rgb > 0.04045, ((rgb + 0.055) / 1.055) ** 2.4, rgb / 12.92)
    xyz = lin @ _SRGB_TO_XYZ.T / _WHITE_D65
    eps = (6 / 29) ** 3
    f = np.where(xyz > eps, np.cbrt(xyz), xyz / (3 * (6 / 29) ** 2) + 4 / 29)
    L = 116 * f[..., 1] - 16
    A = 500 * (f[..., 0] - f[..., 1])
    B = 200 * (f[..., 1] - f[..., 2])
    return np.stack([L, A, B], axis=-1)


def delta_e_2000(lab1: np.ndarray, lab2: np.ndarray, kL: float = 1.0, kC: float = 1.0,
                 kH: float = 1.0) -> np.ndarray:
    """Per-element CIEDE2000 between Lab arrays of shape (..., 3)."""
    lab1 = np.asarray(lab1, dtype=np.float64)
    lab2 = np.asarray(lab2, dtype=np.float64)
    L1, a1, b1 = np.moveaxis(lab1, -1, 0)
    L2, a2, b2 = np.moveaxis(lab2, -1, 0)

    C1 = np.hypot(a1, b1)
    C2 = np.hypot(a2, b2)
    Cbar7 = ((C1 + C2) / 2) ** 7
    G = 0.5 * (1 - np.sqrt(Cbar7 / (Cbar7 + 25.0 ** 7)))
    a1p, a2p = (1 + G) * a1, (1 + G) * a2
    C1p, C2p = np.hypot(a1p, b1), np.hypot(a2p, b2)
    h1p = np.degrees(np.arctan2(b1, a1p)) % 360
    h2p = np.degrees(np.arctan2(b2, a2p)) % 360
    h1p = np.where((a1p == 0) & (b1 == 0), 0.0, h1p)
    h2p = np.where((a2p == 0) & (b2 == 0), 0.0, h2p)

    dLp = L2 - L1
    dCp = C2p - C1p
    prod = C1p * C2p
    dh = h2p - h1p
    dh = np.where(dh > 180, dh - 360, np.where(dh < -180, dh + 360, dh))
    dh = np.where(prod == 0, 0.0, dh)
    dHp = 2 * np.sqrt(prod) * np.sin(np.radians(dh) / 2)

    Lbar = (L1 + L2) / 2
    Cbarp = (C1p + C2p) / 2
    hsum = h1p + h2p
    hbar = np.where(np.abs(h1p - h2p) <= 180, hsum / 2,
                    np.where(hsum < 360, (hsum + 360) / 2, (hsum - 360) / 2))
    hbar = np.where(prod == 0, hsum, hbar)

    T = (1 - 0.17 * np.cos(np.radians(hbar - 30)) + 0.24 * np.cos(np.radians(2 * hbar))
         + 0.32 * np.cos(np.radians(3 * hbar + 6)) - 0.20 * np.cos(np.radians(4 * hbar - 63)))
    dtheta = 30 * np.exp(-(((hbar - 275) / 25) ** 2))
    Cbarp7 = Cbarp ** 7
    Rc = 2 * np.sqrt(Cbarp7 / (Cbarp7 + 25.0 ** 7))
    Sl = 1 + 0.015 * (Lbar - 50) ** 2 / np.sqrt(20 + (Lbar - 50) ** 2)
    Sc = 1 + 0.045 * Cbarp
    Sh = 1 + 0.015 * Cbarp * T
    Rt = -np.sin(np.radians(2 * dtheta)) * Rc

    tl, tc, th = dLp / (kL * Sl), dCp / (kC * Sc), dHp / (kH * Sh)
    return np.sqrt(tl ** 2 + tc ** 2 + th ** 2 + Rt * tc * th)


def ciede2000(a: np.ndarray, b: np.ndarray) -> float:
    """Mean per-pixel CIEDE2000 between two sRGB images."""
    a, b = _pair(a, b)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError("CIEDE2000 needs RGB images")
    return float(delta_e_2000(srgb_to_lab(a), srgb_to_lab(b)).mean())


# ---------------------------------------------------------------------------
# batch evaluation

@dataclass
class MetricRow:
    path: str
    psnr: float = math.nan
    ssim: float = math.nan
    ciede2000: float = math.nan
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class MetricReport:
    rows: list[MetricRow] = field(default_factory=list)

    def mean(self) -> MetricRow:
        ok = [r for r in self.rows if not r.failed]
        if not ok:
            return MetricRow("MEAN")
        # an infinite PSNR dominates the mean, which is the honest answer
        return MetricRow("MEAN",
                         float(np.mean([r.psnr for r in ok])),
                         float(np.mean([r.ssim for r in ok])),
                         float(np.mean([r.ciede2000 for r in ok])))

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(CSV_HEADER)
            for r in self.rows + [self.mean()]:
                if r.failed:
                    w.writerow([r.path, "failed", "failed", "failed"])
                else:
                    w.writerow([r.path, _fmt(r.psnr), _fmt(r.ssim), _fmt(r.ciede2000)])


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def evaluate_pair(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float, float]:
    return psnr(pred, truth), ssim(pred, truth), ciede2000(pred, truth)


def _evaluate_one(name: str, pred_dir: Path, truth_dir: Path) -> MetricRow:
    pred_path = pred_dir / name
    if not pred_path.exists():
        return MetricRow(name, error="missing prediction")
    try:
        p, s, c = evaluate_pair(read_image(pred_path), read_image(truth_dir / name))
    except (ImageIOError, ValueError) as e:
        logger.warning("evaluation of %s failed: %s", name, e)
        return MetricRow(name, error=str(e))
    return MetricRow(name, p, s, c)


def evaluate_dir(pred_dir: str | os.PathLike, truth_dir: str | os.PathLike,
                 csv_path: str | os.PathLike | None = None, threads: int = 1) -> MetricReport:
    """Score every ground-truth PNG against the same-named prediction."""
    pred_dir, truth_dir = Path(pred_dir), Path(truth_dir)
    names = [p.name for p in list_images(truth_dir)]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(lambda n: _evaluate_one(n, pred_dir, truth_dir), names))
    report = MetricReport(sorted(rows, key=lambda r: r.path))
    if csv_path is not None:
        report.write_csv(csv_path)
    return report
