"""Panorama geometry, distortion-aware metrics and a toy decoupled denoiser."""

__version__ = "0.1.0"

from .geometry import DistortionMap, SphereCoord, build_distortion_map, pixel_to_sphere, sphere_to_pixel
from .projection import ViewSpec, equirect_to_perspective, make_nfov_mask, perspective_to_equirect
from .metrics import GaussianStats, distort_fid, frechet_distance, gaussian_stats, inception_score

__all__ = [
    "DistortionMap", "SphereCoord", "build_distortion_map", "pixel_to_sphere", "sphere_to_pixel",
    "ViewSpec", "equirect_to_perspective", "make_nfov_mask", "perspective_to_equirect",
    "GaussianStats", "distort_fid", "frechet_distance", "gaussian_stats", "inception_score",
]
