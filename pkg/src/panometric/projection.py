"""Gnomonic (perspective) views of equirectangular panoramas and their inverse.

Camera frame is right-handed with z forward, x right and y along increasing
image rows. A view is oriented by yaw about the y axis, then pitch about the
camera x axis; positive pitch raises elevation. Images are float arrays of
shape ``(H, W, C)`` with samples in [0, 1]; masks are boolean ``(H, W)``
arrays where True marks known pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import check_panorama_dims, normalized_grid

# inclusive slack on the frustum test so boundary pixels are classified stably
FRUSTUM_SLACK = 1e-12


@dataclass(frozen=True)
class ViewSpec:
    yaw: float = 0.0
    pitch: float = 0.0
    fov: float = np.pi / 2
    out_size: int = 256

    def __post_init__(self):
        if not 0.0 < self.fov < np.pi:
            raise ValueError(f"fov must lie in (0, pi), got {self.fov}")
        if abs(self.pitch) > np.pi / 2:
            raise ValueError(f"|pitch| must be <= pi/2, got {self.pitch}")
        if self.out_size < 1:
            raise ValueError(f"out_size must be positive, got {self.out_size}")

    @property
    def half_extent(self) -> float:
        """Half-width of the image plane at unit depth."""
        return float(np.tan(self.fov / 2))


def check_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=float)
    if img.ndim == 2:
        img = img[..., None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"image must be (H, W, 1|3), got shape {img.shape}")
    if not np.all(np.isfinite(img)) or img.min(initial=0.0) < 0.0 or img.max(initial=0.0) > 1.0:
        raise ValueError("image samples must be finite and in [0, 1]")
    return img


def rotation(yaw: float, pitch: float) -> np.ndarray:
    """Camera-to-world rotation: yaw about y applied after pitch about x."""
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    r_yaw = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    r_pitch = np.array([[1.0, 0.0, 0.0], [0.0, cp, sp], [0.0, -sp, cp]])
    return r_yaw @ r_pitch


def direction_to_sphere(d: np.ndarray):
    """(azimuth, elevation) of unit directions stacked on the last axis."""
    az = np.arctan2(d[..., 0], d[..., 2])
    el = np.arcsin(np.clip(d[..., 1], -1.0, 1.0))
    return az, el


def perspective_directions(view: ViewSpec) -> np.ndarray:
    """World-space unit ray for every output pixel, shape ``(P, P, 3)``."""
    P = view.out_size
    s = (2.0 * np.arange(P) / P - 1.0) * view.half_extent
    x, y = np.meshgrid(s, s)
    d = np.stack([x, y, np.ones_like(x)], axis=-1)
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    return d @ rotation(view.yaw, view.pitch).T


def sample_image(img: np.ndarray, x: np.ndarray, y: np.ndarray, interp: str, wrap_x: bool) -> np.ndarray:
    H, W = img.shape[:2]
    y = np.clip(y, 0.0, H - 1)
    if not wrap_x:
        x = np.clip(x, 0.0, W - 1)
    if interp == "nearest":
        xi = np.rint(x).astype(np.int64)
        xi = xi % W if wrap_x else np.clip(xi, 0, W - 1)
        yi = np.clip(np.rint(y).astype(np.int64), 0, H - 1)
        return img[yi, xi]
    if interp != "bilinear":
        raise ValueError(f"unknown interpolation {interp!r}")
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    if wrap_x:
        x1 = (x0 + 1) % W
        x0 = x0 % W
    else:
        x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def sample_equirect(pano: np.ndarray, az, el, interp: str = "bilinear", wrap: str = "wrap") -> np.ndarray:
    """Sample a panorama at sphere directions.

    Azimuth wraps modulo the width (``wrap="clamp"`` clamps instead);
    elevation clamps to the pole rows.
    """
    if wrap not in ("wrap", "clamp"):
        raise ValueError(f"wrap must be 'wrap' or 'clamp', got {wrap!r}")
    H, W = pano.shape[:2]
    x = (np.asarray(az) / np.pi + 1.0) * W / 2
    y = (np.asarray(el) / (np.pi / 2) + 1.0) * H / 2
    return sample_image(pano, x, y, interp, wrap == "wrap")


def equirect_to_perspective(pano: np.ndarray, view: ViewSpec, interp: str = "bilinear",
                            wrap: str = "wrap") -> np.ndarray:
    pano = check_image(pano)
    check_panorama_dims(pano.shape[1], pano.shape[0])
    az, el = direction_to_sphere(perspective_directions(view))
    return np.clip(sample_equirect(pano, az, el, interp, wrap), 0.0, 1.0)


def lattice_turns(yaw: float, W: int) -> float:
    # yaw in units of pi, snapped onto the column lattice when it is within
    # rounding of it; this keeps column-multiple rotations exactly equivariant
    turns = yaw / np.pi
    k = np.rint(turns * W / 2)
    if abs(turns * W / 2 - k) < 1e-9:
        return 2.0 * k / W
    return turns


def panorama_camera_coords(view: ViewSpec, W: int, H: int) -> np.ndarray:
    """Camera-frame direction of every panorama pixel, shape ``(H, W, 3)``."""
    check_panorama_dims(W, H)
    u, v = normalized_grid(W, H)
    u_rel = np.mod(u - lattice_turns(view.yaw, W) + 1.0, 2.0) - 1.0
    az = np.pi * u_rel[None, :]
    el = (np.pi / 2) * v[:, None]
    dx = np.cos(el) * np.sin(az)
    dy = np.broadcast_to(np.sin(el), dx.shape)
    dz = np.cos(el) * np.cos(az)
    cp, sp = np.cos(view.pitch), np.sin(view.pitch)
    return np.stack([dx, cp * dy - sp * dz, sp * dy + cp * dz], axis=-1)


def _frustum(cam: np.ndarray, t: float) -> np.ndarray:
    x, y, z = cam[..., 0], cam[..., 1], cam[..., 2]
    return (z > 0) & (np.abs(x) <= t * z + FRUSTUM_SLACK) & (np.abs(y) <= t * z + FRUSTUM_SLACK)


def make_nfov_mask(view: ViewSpec, W: int, H: int) -> np.ndarray:
    """Panorama pixels visible through the view's square frustum."""
    return _frustum(panorama_camera_coords(view, W, H), view.half_extent)


def perspective_to_equirect(img: np.ndarray, view: ViewSpec, W: int, H: int,
                            interp: str = "bilinear"):
    """Splat a perspective image into an otherwise empty ``W x H`` panorama.

    Returns ``(panorama, mask)``; pixels outside the frustum are zero.
    """
    img = check_image(img)
    P = view.out_size
    if img.shape[0] != P or img.shape[1] != P:
        raise ValueError(f"image is {img.shape[1]}x{img.shape[0]}, view expects {P}x{P}")
    cam = panorama_camera_coords(view, W, H)
    mask = _frustum(cam, view.half_extent)
    t = view.half_extent
    c = cam[mask]
    a = (c[:, 0] / c[:, 2] / t + 1.0) * P / 2
    b = (c[:, 1] / c[:, 2] / t + 1.0) * P / 2
    pano = np.zeros((H, W, img.shape[2]))
    pano[mask] = np.clip(sample_image(img, a, b, interp, wrap_x=False), 0.0, 1.0)
    return pano, mask
