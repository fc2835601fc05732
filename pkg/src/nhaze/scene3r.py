"""3R synthesis: reconstruct geometry, simulate light rays, render haze.

Camera frame is x right, y down, z forward (meters).  Depth maps hold the
z coordinate, so a pixel ``(u, v)`` with depth ``d`` backprojects to
``((u - cx) d / fx, (v - cy) d / fy, d)``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .imaging import (
    ROAD,
    SKY,
    CameraIntrinsics,
    DepthMap,
    DimensionError,
    LatentMaps,
    SemanticMap,
    apply_imaging_model,
    to_gray,
)
from .lightprior import LightPriorModel, sample_light_colors
from .osfd import GuidedParams
from .superpixels import segment_superpixels

logger = logging.getLogger(__name__)

D_MIN = 0.5
D_SKY = 300.0


class NoRoadWarning(UserWarning):
    """No road pixels, so no lamps could be placed."""


# ---------------------------------------------------------------------------
# reconstruct

def backproject(D: DepthMap, K: CameraIntrinsics) -> np.ndarray:
    """Per-pixel camera-frame points ``(H, W, 3)``; masked pixels are NaN."""
    h, w = D.shape
    v, u = np.mgrid[0:h, 0:w].astype(np.float64)
    d = D.data
    X = np.stack([(u - K.cx) * d / K.fx, (v - K.cy) * d / K.fy, d], axis=-1)
    X[D.sky_mask] = np.nan
    return X


@dataclass(frozen=True)
class PlaneFit:
    """Plane ``v . x + m = 0`` with unit normal ``v`` facing the camera."""

    v: np.ndarray
    m: float
    degenerate: bool = False


def _fallback_normal(centroid: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(centroid, axis=-1, keepdims=True)
    out = np.zeros_like(centroid)
    out[..., 2] = -1.0
    np.divide(-centroid, n, out=out, where=n > 0)
    return out


def _planes_from_moments(count, mean, cov, rank_tol=1e-10):
    """Batched PCA plane fit; returns (normals, offsets, degenerate)."""
    evals, evecs = np.linalg.eigh(cov)
    v = evecs[..., :, 0]
    degenerate = (count < 3) | (evals[..., 1] <= rank_tol * np.maximum(evals[..., 2], 1e-300))
    v = np.where(degenerate[..., None], _fallback_normal(mean), v)
    # face the camera: v . centroid <= 0
    flip = np.einsum("...i,...i->...", v, mean) > 0
    v = np.where(flip[..., None], -v, v)
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    m = -np.einsum("...i,...i->...", v, mean)
    return v, m, degenerate


def fit_plane(points: np.ndarray) -> PlaneFit:
    """Least-squares plane through ``points`` (n, 3) by PCA.

    Fewer than three points, or collinear points, fall back to a normal
    facing straight back at the camera and are flagged degenerate.
    """
    P = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(P) == 0:
        return PlaneFit(np.array([0.0, 0.0, -1.0]), 0.0, True)
    mean = P.mean(axis=0)
    Q = P - mean
    cov = Q.T @ Q / len(P)
    v, m, deg = _planes_from_moments(np.array(len(P)), mean, cov)
    return PlaneFit(v, float(m), bool(deg))


def fit_superpixel_planes(points: np.ndarray, segments: np.ndarray, valid: np.ndarray):
    """Plane per superpixel from its valid points.

    Returns ``(normals (n, 3), offsets (n,), degenerate (n,))``.
    """
    n = int(segments.max()) + 1
    ids = segments[valid]
    P = points[valid]
    count = np.bincount(ids, minlength=n).astype(np.float64)
    safe = np.maximum(count, 1)
    mean = np.stack([np.bincount(ids, P[:, k], n) for k in range(3)], axis=1) / safe[:, None]
    Q = P - mean[ids]
    cov = np.empty((n, 3, 3))
    for i in range(3):
        for j in range(i, 3):
            cov[:, i, j] = cov[:, j, i] = np.bincount(ids, Q[:, i] * Q[:, j], n) / safe
    return _planes_from_moments(count, mean, cov)


@dataclass
class SceneGeometry:
    """World point and unit surface normal per pixel, plus the sky mask."""

    points: np.ndarray
    normals: np.ndarray
    sky: np.ndarray
    segments: np.ndarray | None = None

    def __post_init__(self):
        if self.points.shape != self.normals.shape or self.points.shape[:2] != self.sky.shape:
            raise DimensionError("geometry maps are not aligned")
        n = np.linalg.norm(self.normals[~self.sky], axis=-1)
        if n.size and not np.allclose(n, 1.0, atol=1e-9):
            raise ValueError("surface normals must be unit length on non-sky pixels")

    @property
    def shape(self) -> tuple[int, int]:
        return self.sky.shape


def reconstruct(C: SemanticMap, D: DepthMap, K: CameraIntrinsics,
                superpixels: int = 2000) -> SceneGeometry:
    """Segment, backproject and fit one plane per superpixel."""
    if C.shape != D.shape:
        raise DimensionError(f"label map {C.shape} and depth {D.shape} differ")
    sky = D.sky_mask | C.mask(SKY)
    segments = segment_superpixels(C.labels, superpixels)
    X = backproject(D, K)
    valid = ~sky
    normals = np.full(X.shape, np.nan)
    if valid.any():
        V, _, _ = fit_superpixel_planes(X, segments, valid)
        normals[valid] = V[segments[valid]]
    X[sky] = np.nan
    return SceneGeometry(X, normals, sky, segments)


# ---------------------------------------------------------------------------
# rays

@dataclass(frozen=True)
class LightSource:
    position: np.ndarray
    color: np.ndarray
    intensity: float = 1.0

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64)
        col = np.asarray(self.color, dtype=np.float64)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "color", col)
        if pos.shape != (3,) or not np.all(np.isfinite(pos)):
            raise ValueError(f"light position must be a finite 3-vector, got {pos}")
        if col.shape != (3,):
            raise ValueError("light color must have 3 components")
        if not self.intensity > 0:
            raise ValueError("light intensity must be positive")


def place_roadside_lights(C: SemanticMap, D: DepthMap, K: CameraIntrinsics,
                          spacing: float = 30.0, height: float = 5.0,
                          prior: LightPriorModel | None = None,
                          rng: np.random.Generator | None = None,
                          intensity: float = 1.0, offset: float = 0.0) -> list[LightSource]:
    """Two lamps per depth slab, above the leftmost and rightmost road points.

    Slabs are ``spacing`` meters deep along +z, starting ``offset`` meters
    before the nearest road point.  Lamp colors are drawn from ``prior``.
    """
    if spacing <= 0 or height < 0:
        raise ValueError("spacing must be positive and height non-negative")
    road = C.mask(ROAD) & ~D.sky_mask
    if not road.any():
        warnings.warn("no road pixels; no lamps placed", NoRoadWarning, stacklevel=2)
        return []
    X = backproject(D, K)[road]
    z = X[:, 2]
    z0 = z.min() - offset
    n_slabs = max(1, math.ceil((z.max() - z0) / spacing))
    slab = np.minimum(np.floor((z - z0) / spacing).astype(np.int64), n_slabs - 1)

    positions = []
    for s in range(n_slabs):
        pts = X[slab == s]
        if len(pts) == 0:
            continue
        for p in (pts[np.argmin(pts[:, 0])], pts[np.argmax(pts[:, 0])]):
            positions.append(p - np.array([0.0, height, 0.0]))
    rng = rng if rng is not None else np.random.default_rng(0)
    colors = sample_light_colors(prior or LightPriorModel(), rng, len(positions))
    return [LightSource(p, c, intensity) for p, c in zip(positions, colors)]


@dataclass
class Illumination:
    L: np.ndarray
    eta: np.ndarray
    L_raw: np.ndarray
    eta_raw: np.ndarray
    direct: np.ndarray


def direct_light(lights: list[LightSource], geom: SceneGeometry, d_min: float = D_MIN) -> np.ndarray:
    """Summed Lambert irradiance of all lights, ``(H, W, 3)``, zero on sky."""
    out = np.zeros(geom.shape + (3,))
    valid = ~geom.sky
    X = geom.points[valid]
    V = geom.normals[valid]
    acc = np.zeros((len(X), 3))
    for light in lights:  # list order fixes the summation order
        diff = light.position - X
        d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        cos = np.ones_like(d)
        np.divide(np.einsum("ij,ij->i", diff, V), d, out=cos, where=d > 0)
        gain = light.intensity / np.maximum(d, d_min) ** 2 * np.maximum(cos, 0.0)
        acc += gain[:, None] * light.color
    out[valid] = acc
    return out


def illuminance(lights: list[LightSource], geom: SceneGeometry, guide: np.ndarray | None,
                ambient: float = 0.05, d_min: float = D_MIN,
                refine: GuidedParams | None = None) -> Illumination:
    """Illuminance ``L`` (max channel of the total light) and cast ``eta``.

    The total light is the direct term plus ``ambient`` on every channel;
    sky pixels get the ambient term only.  ``L`` is refined by a guided
    filter steered by ``guide`` when one is given.
    """
    if ambient < 0:
        raise ValueError("ambient must be non-negative")
    direct = direct_light(lights, geom, d_min)
    total = direct + ambient
    L_raw = total.max(axis=-1)
    eta = np.ones_like(total)
    np.divide(total, L_raw[..., None], out=eta, where=L_raw[..., None] > 0)
    L = L_raw
    if guide is not None:
        L = np.maximum((refine or GuidedParams()).apply(to_gray(guide), L_raw), 0.0)
    return Illumination(L, eta, L_raw, eta, direct)


# ---------------------------------------------------------------------------
# haze

def transmission_from_depth(D: DepthMap | np.ndarray, beta_t: float, d_sky: float = D_SKY) -> np.ndarray:
    """``t = exp(-beta_t * d)``; sky pixels take depth ``d_sky``."""
    if not beta_t > 0:
        raise ValueError("beta_t must be positive")
    if isinstance(D, DepthMap):
        d = np.where(D.sky_mask, d_sky, D.data)
    else:
        d = np.asarray(D, dtype=np.float64)
    return np.exp(-beta_t * d)


@dataclass(frozen=True)
class SynthParams:
    beta_l: float = 1.0
    beta_t: float = 0.01
    ambient: float = 0.05
    spacing: float = 30.0
    height: float = 5.0
    superpixels: int = 2000
    d_sky: float = D_SKY
    d_min: float = D_MIN
    lights: bool = True
    jitter_lights: bool = False
    L_filter: GuidedParams = GuidedParams(radius=20, eps=1e-1, subsample=4)

    def __post_init__(self):
        checks = {
            "beta_l": self.beta_l > 0, "beta_t": self.beta_t > 0, "ambient": self.ambient >= 0,
            "spacing": self.spacing > 0, "height": self.height >= 0,
            "superpixels": self.superpixels >= 1, "d_sky": self.d_sky > 0, "d_min": self.d_min > 0,
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise ValueError(f"invalid synthesis parameters: {bad}")


@dataclass
class SynthResult:
    I: np.ndarray
    lowlight: np.ndarray
    lowlight_cast: np.ndarray
    dayhaze: np.ndarray
    latents: LatentMaps
    lights: list[LightSource] = field(default_factory=list)
    illumination: Illumination | None = None

    def images(self) -> dict[str, np.ndarray]:
        """Outputs keyed by their file stem."""
        return {
            "hazy": self.I,
            "lowlight": self.lowlight,
            "lowlight_cast": self.lowlight_cast,
            "dayhaze": self.dayhaze,
            "L": self.latents.L,
            "eta": self.latents.eta,
            "t": self.latents.t,
        }


def simulate_lights(R, C, D, K, geom: SceneGeometry, params: SynthParams,
                    prior: LightPriorModel | None, rng: np.random.Generator):
    """Place lamps and compute the illumination they produce."""
    lights = []
    if params.lights:
        offset = rng.uniform(0.0, params.spacing) if params.jitter_lights else 0.0
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", NoRoadWarning)
            lights = place_roadside_lights(C, D, K, params.spacing, params.height, prior, rng,
                                           params.beta_l, offset)
        if caught:
            logger.warning("no road pixels; rendering with ambient light only")
    illum = illuminance(lights, geom, R, params.ambient, params.d_min, params.L_filter)
    return lights, illum


def render_haze(R: np.ndarray, illum: Illumination, D: DepthMap, beta_t: float,
                d_sky: float = D_SKY, lights: list[LightSource] | None = None) -> SynthResult:
    t = transmission_from_depth(D, beta_t, d_sky)
    latents = LatentMaps(illum.L, illum.eta, t)
    I = apply_imaging_model(R, latents)
    L3 = illum.L[..., None]
    t3 = t[..., None]
    return SynthResult(
        I=I,
        lowlight=np.clip(R * L3, 0.0, 1.0),
        lowlight_cast=np.clip(R * L3 * illum.eta, 0.0, 1.0),
        dayhaze=np.clip(R * t3 + (1.0 - t3), 0.0, 1.0),
        latents=latents,
        lights=list(lights or []),
        illumination=illum,
    )


def render_3r(R: np.ndarray, C: SemanticMap, D: DepthMap, K: CameraIntrinsics,
              params: SynthParams | None = None, prior: LightPriorModel | None = None,
              rng: np.random.Generator | int | None = 0) -> SynthResult:
    """Synthesize a nighttime hazy image from a clear image and its geometry."""
    p = params or SynthParams()
    R = np.asarray(R, dtype=np.float64)
    if R.ndim != 3 or R.shape[2] != 3 or R.shape[:2] != D.shape:
        raise DimensionError("clear image must be RGB and aligned with the depth map")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    geom = reconstruct(C, D, K, p.superpixels)
    lights, illum = simulate_lights(R, C, D, K, geom, p, prior, rng)
    sky = geom.sky
    return render_haze(R, illum, DepthMap(np.where(sky, 0.0, D.data), sky), p.beta_t, p.d_sky, lights)
