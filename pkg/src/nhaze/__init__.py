"""Nighttime haze: imaging model, 3R synthesis and optimal-scale dehazing."""

__version__ = "0.1.0"

from .imaging import (  # noqa: F401
    CameraIntrinsics,
    DepthMap,
    LatentMaps,
    SemanticMap,
    apply_imaging_model,
    read_image,
    write_image,
)
from .lightprior import LightPriorModel, fit_light_prior, sample_light_colors  # noqa: F401
from .metrics import ciede2000, psnr, ssim  # noqa: F401
from .osfd import DehazeParams, osfd  # noqa: F401
from .osmrp import ScaleSet, optimal_scale  # noqa: F401
from .scene3r import SynthParams, render_3r  # noqa: F401
