"""
Panorama geometry and perspective views
=======================================

Build the four-plane distortion map, cut a perspective view out of a
procedural panorama, paste it back, and check the known-region mask.
Run with ``python notebooks/01_geometry_projection.py``.
"""

# %%
import numpy as np

from panometric.corpus import SceneSpec, render_panorama
from panometric.geometry import build_distortion_map, pixel_to_sphere, sphere_to_pixel
from panometric.projection import ViewSpec, equirect_to_perspective, make_nfov_mask, perspective_to_equirect

# %% The distortion map stores (sin, cos) of both spherical angles per pixel.
dmap = build_distortion_map(512, 256)
print("map shape", dmap.data.shape)
print("unit-circle error", np.max(np.abs(dmap.data[..., 0] ** 2 + dmap.data[..., 1] ** 2 - 1)))

# %% Pixel centres map to the sphere and back exactly.
j, i = np.mgrid[0:256, 0:512]
x, y = sphere_to_pixel(pixel_to_sphere(i, j, 512, 256), 512, 256)
print("lattice round trip exact:", np.array_equal(x, i) and np.array_equal(y, j))

# %% A 90 degree view looking 40 degrees right and 10 degrees up.
pano = render_panorama(SceneSpec.random(3), 1024, 512)
view = ViewSpec(yaw=np.radians(40), pitch=np.radians(10), fov=np.pi / 2, out_size=256)
persp = equirect_to_perspective(pano, view)
back, mask = perspective_to_equirect(persp, view, 1024, 512)
mse = np.mean((back[mask] - pano[mask]) ** 2)
print(f"known region: {mask.mean():.3%} of pixels, PSNR {10 * np.log10(1 / mse):.1f} dB")
print("mask agrees with the standalone mask:", np.array_equal(mask, make_nfov_mask(view, 1024, 512)))
