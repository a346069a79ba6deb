"""Equirectangular pixel/sphere coordinates and the panoramic distortion map.

Conventions: azimuth runs along the image width, elevation along the height,
and pixel positions are corner-anchored (no half-pixel offset). Column ``i``
of a ``W``-wide panorama sits at azimuth ``(2i/W - 1) * pi`` and row ``j`` of
an ``H``-high panorama at elevation ``(2j/H - 1) * pi / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def check_panorama_dims(W: int, H: int) -> None:
    if W < 2 or H < 1 or W != 2 * H:
        raise ValueError(f"panorama must be 2:1 (W = 2H), got W={W}, H={H}")


@dataclass(frozen=True)
class SphereCoord:
    azimuth: float
    elevation: float

    def __post_init__(self):
        if not -np.pi <= self.azimuth <= np.pi:
            raise ValueError(f"azimuth {self.azimuth} outside [-pi, pi]")
        if not -np.pi / 2 <= self.elevation <= np.pi / 2:
            raise ValueError(f"elevation {self.elevation} outside [-pi/2, pi/2]")


def pixel_to_sphere(i, j, W: int, H: int):
    """Map pixel indices to (azimuth, elevation) in radians.

    Accepts scalars or arrays; scalars give a :class:`SphereCoord`.
    """
    check_panorama_dims(W, H)
    i_arr = np.asarray(i)
    j_arr = np.asarray(j)
    if np.any(i_arr < 0) or np.any(i_arr >= W) or np.any(j_arr < 0) or np.any(j_arr >= H):
        raise ValueError("pixel index out of range")
    az = (2.0 * i_arr / W - 1.0) * np.pi
    el = (2.0 * j_arr / H - 1.0) * np.pi / 2
    if az.ndim == 0 and el.ndim == 0:
        return SphereCoord(float(az), float(el))
    return az, el


LATTICE_SNAP = 1e-9


def _snap(x):
    # positions within round-off of an integer are put back on the lattice
    r = np.rint(x)
    return np.where(np.abs(x - r) < LATTICE_SNAP, r, x)


def sphere_to_pixel(coord, W: int, H: int):
    """Continuous (x, y) image position of a sphere direction.

    ``coord`` is a :class:`SphereCoord` or an ``(azimuth, elevation)`` pair of
    arrays. Exact inverse of :func:`pixel_to_sphere` on the pixel lattice.
    """
    check_panorama_dims(W, H)
    if isinstance(coord, SphereCoord):
        az, el = coord.azimuth, coord.elevation
    else:
        az, el = (np.asarray(c, dtype=float) for c in coord)
    x = _snap((np.asarray(az) / np.pi + 1.0) * W / 2)
    y = _snap((np.asarray(el) / (np.pi / 2) + 1.0) * H / 2)
    if np.ndim(x) == 0:
        return float(x), float(y)
    return x, y


def normalized_grid(W: int, H: int):
    """Normalized coordinates ``u`` (per column) and ``v`` (per row) in [-1, 1)."""
    u = 2.0 * np.arange(W) / W - 1.0
    v = 2.0 * np.arange(H) / H - 1.0
    return u, v


@dataclass(frozen=True)
class DistortionMap:
    """Four-channel positional field ``(sin pi*u, cos pi*u, sin pi*v, cos pi*v)``.

    ``data`` has shape ``(H, W, 4)``.
    """

    width: int
    height: int
    data: np.ndarray

    @property
    def azimuth_pair(self) -> np.ndarray:
        return self.data[..., 0:2]

    @property
    def elevation_pair(self) -> np.ndarray:
        return self.data[..., 2:4]

    def as_rows(self) -> np.ndarray:
        """``(H, 4W)`` float32 rows, channel planes laid out consecutively per row."""
        return np.ascontiguousarray(self.data.transpose(0, 2, 1).reshape(self.height, 4 * self.width),
                                    dtype=np.float32)

    def preview(self) -> np.ndarray:
        """8-bit RGBA preview, each channel mapped affinely from [-1, 1] to [0, 255]."""
        return np.clip(np.rint((self.data + 1.0) * 127.5), 0, 255).astype(np.uint8)


def encode_angle(t) -> np.ndarray:
    """``[sin(pi t), cos(pi t)]`` stacked on the last axis."""
    t = np.asarray(t, dtype=float)
    return np.stack([np.sin(np.pi * t), np.cos(np.pi * t)], axis=-1)


def build_distortion_map(W: int, H: int) -> DistortionMap:
    check_panorama_dims(W, H)
    u, v = normalized_grid(W, H)
    az = np.broadcast_to(encode_angle(u)[None, :, :], (H, W, 2))
    el = np.broadcast_to(encode_angle(v)[:, None, :], (H, W, 2))
    data = np.concatenate([az, el], axis=-1)
    data.setflags(write=False)
    return DistortionMap(W, H, data)


def downsample_distortion_map(dmap: DistortionMap, factor: int) -> DistortionMap:
    """Area-average by ``factor`` then renormalize each (sin, cos) pair."""
    if dmap.height % factor or dmap.width % factor:
        raise ValueError(f"factor {factor} does not divide {dmap.width}x{dmap.height}")
    h, w = dmap.height // factor, dmap.width // factor
    avg = dmap.data.reshape(h, factor, w, factor, 4).mean(axis=(1, 3))
    pairs = avg.reshape(h, w, 2, 2)
    pairs = pairs / np.linalg.norm(pairs, axis=-1, keepdims=True)
    data = pairs.reshape(h, w, 4)
    data.setflags(write=False)
    return DistortionMap(w, h, data)
