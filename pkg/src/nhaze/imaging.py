"""Image containers, file I/O and the forward nighttime imaging model.

Images are plain ``numpy`` arrays of shape ``(H, W, C)`` (or ``(H, W)`` for
single-channel maps) holding float64 values normalized to ``[0, 1]``.  Channel
order is R, G, B.  No sRGB linearization is applied anywhere.
"""

from __future__ import annotations

import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import cv2
import numpy as np
import tomli

logger = logging.getLogger(__name__)

ROAD = "road"
SKY = "sky"
OTHER = "other"


class ImageIOError(ValueError):
    """Raised when an image or map file cannot be read or written."""


class DimensionError(ValueError):
    """Raised when inputs that must be aligned have different shapes."""


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "CameraIntrinsics":
        with open(path, "rb") as f:
            data = tomli.load(f)
        data = data.get("camera", data)
        unknown = set(data) - {"fx", "fy", "cx", "cy"}
        if unknown:
            raise ValueError(f"unknown camera keys: {sorted(unknown)}")
        return cls(float(data["fx"]), float(data["fy"]), float(data["cx"]), float(data["cy"]))


@dataclass
class DepthMap:
    """Metric depth in meters with a sky/invalid mask.

    Pixels flagged in ``sky_mask`` carry no usable depth.
    """

    data: np.ndarray
    sky_mask: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.sky_mask = np.asarray(self.sky_mask, dtype=bool)
        if self.data.ndim != 2 or self.sky_mask.shape != self.data.shape:
            raise DimensionError("depth and sky mask must be 2-D and aligned")
        valid = self.data[~self.sky_mask]
        if valid.size and not (np.all(np.isfinite(valid)) and np.all(valid > 0)):
            raise ValueError("non-sky depths must be finite and positive")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @classmethod
    def from_array(cls, depth: np.ndarray, sky: np.ndarray | None = None) -> "DepthMap":
        """Build a depth map, masking non-finite or non-positive entries."""
        depth = np.asarray(depth, dtype=np.float64)
        mask = ~np.isfinite(depth) | (depth <= 0)
        if sky is not None:
            mask |= np.asarray(sky, dtype=bool)
        clean = np.where(mask, 0.0, depth)
        return cls(clean, mask)

    def with_sky(self, sky: np.ndarray) -> "DepthMap":
        return DepthMap(np.where(sky, 0.0, self.data), self.sky_mask | sky)


@dataclass
class SemanticMap:
    labels: np.ndarray
    class_config: Mapping[str, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 2:
            raise DimensionError("label map must be 2-D")
        if not np.issubdtype(self.labels.dtype, np.integer):
            self.labels = self.labels.astype(np.int64)
        self.class_config = {k: tuple(int(i) for i in v) for k, v in self.class_config.items()}

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def mask(self, kind: str) -> np.ndarray:
        """Boolean mask of pixels whose id is listed under ``kind``.

        ``other`` is everything not listed as road or sky.
        """
        if kind == OTHER:
            return ~(self.mask(ROAD) | self.mask(SKY))
        ids = self.class_config.get(kind, ())
        return np.isin(self.labels, ids)

    def kinds(self) -> np.ndarray:
        """Per-pixel coarse class: 0 other, 1 road, 2 sky."""
        out = np.zeros(self.shape, dtype=np.int64)
        out[self.mask(ROAD)] = 1
        out[self.mask(SKY)] = 2
        return out


def load_class_map(path: str | os.PathLike) -> dict[str, tuple[int, ...]]:
    """Read ``class_map.toml`` with integer lists under ``road`` and ``sky``."""
    with open(path, "rb") as f:
        data = tomli.load(f)
    unknown = set(data) - {ROAD, SKY, OTHER}
    if unknown:
        raise ValueError(f"unknown class_map keys: {sorted(unknown)}")
    out = {}
    for key, ids in data.items():
        if not isinstance(ids, list) or not all(isinstance(i, int) for i in ids):
            raise ValueError(f"class_map entry {key!r} must be a list of integers")
        out[key] = tuple(ids)
    return out


@dataclass
class LatentMaps:
    """Per-pixel illuminance ``L`` (H, W), color cast ``eta`` (H, W, 3) and
    transmission ``t`` (H, W)."""

    L: np.ndarray
    eta: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        if self.L.shape != self.t.shape or self.eta.shape != self.L.shape + (3,):
            raise DimensionError(
                f"latent shapes disagree: L{self.L.shape} eta{self.eta.shape} t{self.t.shape}")


# ---------------------------------------------------------------------------
# file I/O

def _imread(path) -> np.ndarray | None:
    if not Path(path).is_file():
        return None
    return cv2.imread(str(path), cv2.IMREAD_UNCHANGED)


def read_image(path: str | os.PathLike) -> np.ndarray:
    """Read an 8- or 16-bit PNG (gray or RGB) as floats in ``[0, 1]``."""
    path = Path(path)
    raw = _imread(path)
    if raw is None:
        raise ImageIOError(f"cannot read image {path}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ImageIOError(f"unsupported sample type {raw.dtype} in {path}")
    if raw.ndim == 3:
        if raw.shape[2] == 4:
            raw = raw[:, :, :3]
        elif raw.shape[2] != 3:
            raise ImageIOError(f"unsupported channel count {raw.shape[2]} in {path}")
        raw = raw[:, :, ::-1]
    return raw.astype(np.float64) / scale


def write_image(path: str | os.PathLike, img: np.ndarray, bits: int = 8) -> None:
    """Write a ``[0, 1]`` image as PNG; values are clamped and rounded."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim == 3 and img.shape[2] != 3:
        raise ImageIOError(f"unsupported channel count {img.shape[2]}")
    if not np.all(np.isfinite(img)):
        raise ImageIOError("refusing to write non-finite values")
    top = (1 << bits) - 1
    codes = np.rint(np.clip(img, 0.0, 1.0) * top).astype(np.uint8 if bits == 8 else np.uint16)
    if codes.ndim == 3:
        codes = np.ascontiguousarray(codes[:, :, ::-1])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), codes):
        raise ImageIOError(f"cannot write image {path}")


def write_label_png(path: str | os.PathLike, labels: np.ndarray) -> None:
    """Write an integer map verbatim (8-bit if it fits, else 16-bit)."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > 65535:
        raise ImageIOError("label values must be in [0, 65535]")
    dtype = np.uint8 if labels.max() <= 255 else np.uint16
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), labels.astype(dtype)):
        raise ImageIOError(f"cannot write {path}")


def read_label_png(path: str | os.PathLike) -> np.ndarray:
    raw = _imread(path)
    if raw is None:
        raise ImageIOError(f"cannot read label map {path}")
    if raw.ndim == 3:
        # color-coded ids are not supported, but gray stored as RGB is
        if not (np.array_equal(raw[..., 0], raw[..., 1]) and np.array_equal(raw[..., 1], raw[..., 2])):
            raise ImageIOError(f"label map {path} must be single channel")
        raw = raw[..., 0]
    return raw.astype(np.int64)


def read_pfm(path: str | os.PathLike) -> np.ndarray:
    """Read a PFM file; rows are returned top-to-bottom."""
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header not in (b"Pf", b"PF"):
            raise ImageIOError(f"{path} is not a PFM file")
        channels = 1 if header == b"Pf" else 3
        dims = f.readline()
        while dims.startswith(b"#"):
            dims = f.readline()
        m = re.match(rb"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not m:
            raise ImageIOError(f"malformed PFM dimensions in {path}")
        width, height = int(m.group(1)), int(m.group(2))
        scale = float(f.readline().strip())
        endian = "<" if scale < 0 else ">"
        data = np.frombuffer(f.read(), dtype=endian + "f4")
    if data.size < width * height * channels:
        raise ImageIOError(f"truncated PFM {path}")
    data = data[: width * height * channels].reshape(height, width, channels)
    data = np.flipud(data).astype(np.float64)
    if np.any(np.isnan(data)):
        raise ImageIOError(f"NaN in PFM {path}")
    return data[:, :, 0] if channels == 1 else data


def write_pfm(path: str | os.PathLike, data: np.ndarray) -> None:
    """Write a little-endian PFM."""
    data = np.asarray(data, dtype="<f4")
    channels = 1 if data.ndim == 2 else data.shape[2]
    if channels not in (1, 3):
        raise ImageIOError("PFM supports 1 or 3 channels")
    height, width = data.shape[:2]
    with open(path, "wb") as f:
        f.write(b"Pf\n" if channels == 1 else b"PF\n")
        f.write(f"{width} {height}\n-1.0\n".encode())
        f.write(np.ascontiguousarray(np.flipud(data)).tobytes())


def read_depth(path: str | os.PathLike, depth_scale: float | None = None) -> DepthMap:
    """Read depth in meters.

    PNG codes are taken as millimeters, PFM values as meters, unless
    ``depth_scale`` (meters per stored unit) says otherwise.
    """
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        raw = read_pfm(path)
        if raw.ndim == 3:
            raw = raw[:, :, 0]
        scale = 1.0 if depth_scale is None else depth_scale
    else:
        raw = _imread(path)
        if raw is None:
            raise ImageIOError(f"cannot read depth {path}")
        if raw.ndim == 3:
            raw = raw[:, :, 0]
        raw = raw.astype(np.float64)
        scale = 1e-3 if depth_scale is None else depth_scale
    return DepthMap.from_array(raw * scale)


# ---------------------------------------------------------------------------
# imaging model

def _check_same_hw(*arrays: np.ndarray) -> None:
    shapes = {a.shape[:2] for a in arrays}
    if len(shapes) != 1:
        raise DimensionError(f"spatial dimensions disagree: {sorted(shapes)}")


def apply_imaging_model(R: np.ndarray, latents: LatentMaps, clamp: bool = True) -> np.ndarray:
    """Render ``I = R*L*eta*t + L*eta*(1 - t)`` per pixel and channel."""
    R = np.asarray(R, dtype=np.float64)
    if R.ndim != 3 or R.shape[2] != 3:
        raise DimensionError("reflectance must have 3 channels")
    _check_same_hw(R, latents.L, latents.eta, latents.t)
    L = latents.L[..., None]
    t = latents.t[..., None]
    airlight = L * latents.eta
    out = R * airlight * t + airlight * (1.0 - t)
    return np.clip(out, 0.0, 1.0) if clamp else out


def compose_nighttime_clear(R: np.ndarray, L: np.ndarray) -> np.ndarray:
    """Nighttime clear image ``J = R * L``."""
    R = np.asarray(R, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    _check_same_hw(R, L)
    if L.ndim == 3:
        L = L[..., 0]
    return R * (L[..., None] if R.ndim == 3 else L)


def to_gray(img: np.ndarray) -> np.ndarray:
    """ITU-R 601 luma; single-channel inputs pass through."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.shape[2] == 1:
        return img[:, :, 0]
    return img[..., 0] * 0.299 + img[..., 1] * 0.587 + img[..., 2] * 0.114


def list_images(directory: str | os.PathLike, suffixes: Iterable[str] = (".png",)) -> list[Path]:
    directory = Path(directory)
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in suffixes)
