"""Procedural street scenes with exact depth, labels and intrinsics.

A pinhole camera 1.5 m above a flat ground looks down a straight street
lined by building facades and closed by a far wall.  Each pixel's ray is
intersected with the ground, the two facades and the far wall; anything
above the buildings is sky.  Textures are evaluated in world coordinates
so they stay consistent across resolutions.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tomli_w

from .imaging import CameraIntrinsics, DepthMap, SemanticMap, write_image, write_label_png, write_pfm

ROAD_ID, SIDEWALK_ID, BUILDING_ID, SKY_ID = 0, 1, 2, 3
CLASS_MAP = {"road": [ROAD_ID], "sky": [SKY_ID]}


@dataclass
class Scene:
    R: np.ndarray
    labels: SemanticMap
    depth: DepthMap
    K: CameraIntrinsics

    def save(self, directory: str | os.PathLike) -> Path:
        """Write the scene directory layout consumed by ``nhaze synth``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_image(d / "rgb.png", self.R)
        write_pfm(d / "depth.pfm", np.where(self.depth.sky_mask, 0.0, self.depth.data))
        write_label_png(d / "labels.png", self.labels.labels)
        with open(d / "class_map.toml", "wb") as f:
            tomli_w.dump({k: list(v) for k, v in self.labels.class_config.items()}, f)
        with open(d / "camera.toml", "wb") as f:
            tomli_w.dump({"fx": self.K.fx, "fy": self.K.fy, "cx": self.K.cx, "cy": self.K.cy}, f)
        return d


def _hash_noise(a: np.ndarray, b: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic per-cell noise in [0, 1) from integer cell coordinates."""
    h = (a.astype(np.int64) * 73856093) ^ (b.astype(np.int64) * 19349663) ^ (seed * 83492791)
    h = (h ^ (h >> 13)) * 1274126177
    return ((h ^ (h >> 16)) & 0xFFFF) / 65536.0


def make_street_scene(height: int = 256, width: int = 256, seed: int = 0,
                      road_half: float = 5.0, street_half: float = 9.0,
                      camera_height: float = 1.5, far: float = 120.0) -> Scene:
    """Render a seeded street scene.

    Geometry: ground ``y = camera_height``, facades ``x = +-street_half`` with
    per-block heights, far wall ``z = far``.  Road is the ground strip
    ``|x| < road_half``; the rest of the ground is sidewalk.
    """
    rng = np.random.default_rng(seed)
    f = 0.8 * width
    K = CameraIntrinsics(f, f, (width - 1) / 2.0, (height - 1) * rng.uniform(0.42, 0.5))
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    rx, ry = (u - K.cx) / K.fx, (v - K.cy) / K.fy  # ray (rx, ry, 1)

    block = 12.0
    n_blocks = int(far // block) + 2
    block_h = {s: rng.uniform(6.0, 22.0, n_blocks) for s in (-1, 1)}
    wall_h = rng.uniform(8.0, 20.0)

    z = np.full((height, width), np.inf)
    label = np.full((height, width), SKY_ID)

    with np.errstate(divide="ignore", invalid="ignore"):
        zg = np.where(ry > 0, camera_height / ry, np.inf)
        ground = (zg < far) & (np.abs(rx * zg) < street_half)
        z = np.where(ground, zg, z)
        label = np.where(ground, np.where(np.abs(rx * zg) < road_half, ROAD_ID, SIDEWALK_ID), label)

        for side in (-1, 1):
            zw = np.where(side * rx > 0, street_half / np.abs(rx), np.inf)
            finite = np.isfinite(zw)
            bi = np.clip(np.where(finite, zw, 0.0) // block, 0, n_blocks - 1).astype(np.int64)
            top = camera_height - block_h[side][bi]
            hit = finite & (zw < far) & (ry * zw >= top) & (zw < z)
            z = np.where(hit, zw, z)
            label = np.where(hit, BUILDING_ID, label)

        yb, xb = ry * far, rx * far
        back = (np.abs(xb) <= street_half) & (yb >= camera_height - wall_h) & (yb <= camera_height) & (far < z)
        z = np.where(back, far, z)
        label = np.where(back, BUILDING_ID, label)

    sky = label == SKY_ID
    X = np.where(sky, 0.0, rx * z)
    Y = np.where(sky, 0.0, ry * z)
    Z = np.where(sky, 0.0, z)
    R = _texture(label, X, Y, Z, road_half, street_half, far, seed)
    depth = DepthMap(Z, sky)
    return Scene(R, SemanticMap(label, CLASS_MAP), depth, K)


def _speckle(X, Y, Z, seed, cell=0.04, dark=0.15, bright=0.08):
    """Fine-grained dark and bright flecks, as in natural surfaces, so most
    small patches hold both a near-black and a near-white pixel."""
    a = np.floor((X + Y) / cell)
    b = np.floor(Z / cell)
    n = _hash_noise(a, b, seed)
    return np.where(n < dark, -1, np.where(n > 1 - bright, 1, 0))


def _texture(label, X, Y, Z, road_half, street_half, far, seed):
    rng = np.random.default_rng(seed + 1)
    R = np.zeros(label.shape + (3,))
    fine = _hash_noise(np.floor(X * 20), np.floor(Z * 20), seed)[..., None]
    fleck = _speckle(X, Y, Z, seed + 5)[..., None]

    road = label == ROAD_ID
    asphalt = np.array([0.14, 0.14, 0.16]) + 0.2 * fine
    dash = (np.abs(X) < 0.12) & ((Z % 6.0) < 3.0)
    edge = np.abs(np.abs(X) - (road_half - 0.3)) < 0.1
    marking = (dash | edge)[..., None]
    R[road] = np.where(marking, 0.95, asphalt)[road]

    walk = label == SIDEWALK_ID
    tile = _hash_noise(np.floor(X / 0.8), np.floor(Z / 0.8), seed + 2)[..., None]
    grout = ((X % 0.8) < 0.05) | ((Z % 0.8) < 0.05)
    walk_rgb = np.array([0.6, 0.45, 0.35]) * (0.6 + 0.7 * tile)
    R[walk] = np.where(grout[..., None], 0.05, walk_rgb)[walk]

    bld = label == BUILDING_ID
    # facade coordinate along the wall: z on the sides, x on the far wall
    along = np.where(Z >= far - 1e-6, X + 1000.0, Z)
    bid = np.floor(along / 12.0)
    hue = _hash_noise(bid, np.sign(X), seed + 3)
    palette = np.array([[0.8, 0.35, 0.25], [0.9, 0.8, 0.45], [0.3, 0.45, 0.7],
                        [0.45, 0.6, 0.35], [0.85, 0.85, 0.8], [0.55, 0.3, 0.25]])
    base = palette[(hue * len(palette)).astype(int) % len(palette)]
    base = base * (0.75 + 0.5 * fine)
    wy, wa = (-Y) % 3.0, along % 2.5
    window = (wy > 0.8) & (wy < 2.2) & (wa > 0.6) & (wa < 1.9)
    lit = _hash_noise(np.floor(along / 2.5), np.floor(-Y / 3.0), seed + 4)[..., None]
    win_rgb = np.where(lit > 0.7, np.array([0.97, 0.95, 0.88]), np.array([0.03, 0.04, 0.06]) + 0.1 * lit)
    fac = np.where(window[..., None], win_rgb, base)
    R[bld] = fac[bld]

    solid = ~(label == SKY_ID)[..., None]
    R = np.where(solid & (fleck < 0), 0.03, R)
    R = np.where(solid & (fleck > 0), 0.95, R)

    sky = label == SKY_ID
    R[sky] = np.array([0.55, 0.65, 0.85]) + rng.uniform(-0.05, 0.05, 3)
    return np.clip(R, 0.02, 0.98)
