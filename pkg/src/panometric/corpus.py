"""Procedural three-class corpus: panoramas, perspective views and random warps.

Every class shares scene content. The scene is a checkered box room around
the camera with a sky/ground colour split at the horizon and a soft light,
evaluated analytically from a direction, so equirectangular renders carry
genuine panoramic distortion (curved straight edges, stretched poles).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .geometry import check_panorama_dims, normalized_grid
from .projection import ViewSpec, sample_image, lattice_turns, equirect_to_perspective

CLASSES = ("panorama", "perspective", "random")
PANORAMA, PERSPECTIVE, RANDOM = range(3)

WARP_AMPLITUDE = 0.08
WARP_OCTAVES = 3
WARP_WAVES_PER_OCTAVE = 2
# panorama resolution multiplier used as the source of perspective views
PERSPECTIVE_SUPERSAMPLE = 4
MAX_PITCH = 0.3


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    sky_color: tuple = (0.55, 0.7, 0.9)
    ground_color: tuple = (0.45, 0.35, 0.25)
    checker_freq: int = 4
    light_azimuth: float = 0.0
    checker_contrast: float = 0.7
    light_strength: float = 0.2
    checker_phase: tuple = (0.0, 0.0, 0.0)

    @classmethod
    def random(cls, seed: int) -> "SceneSpec":
        rng = np.random.default_rng(seed)
        sky = rng.uniform(0.1, 0.9, 3)
        ground = rng.uniform(0.1, 0.9, 3)
        return cls(seed=int(seed), sky_color=tuple(float(c) for c in sky),
                   ground_color=tuple(float(c) for c in ground),
                   checker_freq=int(rng.integers(4, 7)),
                   light_azimuth=float(rng.uniform(-np.pi, np.pi)),
                   checker_phase=tuple(float(c) for c in rng.uniform(0.0, 1.0, 3)))


def scene_radiance(spec: SceneSpec, az_rel, el) -> np.ndarray:
    """RGB radiance for directions given relative to the light azimuth."""
    az_rel = np.asarray(az_rel, dtype=float)
    el = np.asarray(el, dtype=float)
    d = np.stack(np.broadcast_arrays(np.cos(el) * np.sin(az_rel), np.sin(el),
                                     np.cos(el) * np.cos(az_rel)), axis=-1)
    p = d / np.max(np.abs(d), axis=-1, keepdims=True)
    f = spec.checker_freq
    cells = np.floor(f * (p + 1.0) * 0.5 + np.array(spec.checker_phase) - 1e-9).sum(axis=-1)
    checker = np.mod(cells, 2.0)
    # rows grow toward +elevation, which the room treats as the floor side
    blend = 1.0 / (1.0 + np.exp(-12.0 * el))
    base = (1 - blend)[..., None] * np.array(spec.sky_color) + blend[..., None] * np.array(spec.ground_color)
    shade = 1.0 - spec.checker_contrast * checker + spec.light_strength * (np.cos(az_rel) - 1.0) / 2
    return np.clip(base * shade[..., None], 0.0, 1.0)


def render_panorama(spec: SceneSpec, W: int, H: int) -> np.ndarray:
    """Point-sample the scene at every lattice pixel of a ``W x H`` panorama."""
    check_panorama_dims(W, H)
    u, v = normalized_grid(W, H)
    u_rel = np.mod(u - lattice_turns(spec.light_azimuth, W) + 1.0, 2.0) - 1.0
    az = np.broadcast_to(np.pi * u_rel[None, :], (H, W))
    el = np.broadcast_to((np.pi / 2) * v[:, None], (H, W))
    return scene_radiance(spec, az, el)


@dataclass(frozen=True)
class DisplacementField:
    """Sum of sinusoids, horizontally periodic over the image width.

    Each wave is ``(axis, amplitude, fx, fy, phase)`` with integer cycle counts
    across the width and the height; amplitudes are in pixels.
    """

    width: int
    height: int
    waves: tuple = field(default_factory=tuple)

    def evaluate(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        dx = np.zeros(np.broadcast(x, y).shape)
        dy = np.zeros_like(dx)
        for axis, amp, fx, fy, phase in self.waves:
            wave = amp * np.sin(2 * np.pi * (fx * x / self.width + fy * y / self.height) + phase)
            if axis == 0:
                dx += wave
            else:
                dy += wave
        return dx, dy

    def max_bound(self) -> float:
        """Upper bound on the displacement along either axis."""
        return max((sum(abs(a) for ax, a, *_ in self.waves if ax == k) for k in (0, 1)), default=0.0)

    def analytic_rms(self, axis: int) -> float:
        """RMS over a full period; exact since wave frequencies are distinct."""
        return float(np.sqrt(sum(a * a / 2 for ax, a, *_ in self.waves if ax == axis)))


def displacement_field(seed: int, W: int, H: int, amplitude: float = WARP_AMPLITUDE,
                       octaves: int = WARP_OCTAVES) -> DisplacementField:
    """Band-limited random field whose displacement never exceeds ``amplitude * W``."""
    rng = np.random.default_rng(seed)
    waves = []
    for axis in (0, 1):
        raw = []
        for octave in range(octaves):
            base = 2 ** octave
            for k in range(WARP_WAVES_PER_OCTAVE):
                # odd multiples keep every x-frequency distinct across octaves
                fx = base * (2 * k + 1)
                fy = int(rng.integers(-base, base + 1))
                raw.append((axis, 2.0 ** -octave * rng.uniform(0.5, 1.0), fx, fy,
                            float(rng.uniform(0, 2 * np.pi))))
        total = sum(a for _, a, *_ in raw)
        scale = amplitude * W / total if total else 0.0
        waves += [(ax, float(a * scale), fx, fy, ph) for ax, a, fx, fy, ph in raw]
    return DisplacementField(W, H, tuple(waves))


def random_warp(img: np.ndarray, seed: int, amplitude: float = WARP_AMPLITUDE) -> np.ndarray:
    """Bilinear resample through a seeded smooth displacement field."""
    img = np.asarray(img, dtype=float)
    H, W = img.shape[:2]
    if amplitude == 0:
        return img.copy()
    fld = displacement_field(seed, W, H, amplitude)
    y, x = np.mgrid[0:H, 0:W].astype(float)
    dx, dy = fld.evaluate(x, y)
    return np.clip(sample_image(img, x + dx, y + dy, "bilinear", wrap_x=True), 0.0, 1.0)


def make_class_triplet(spec: SceneSpec, view: ViewSpec, warp_seed: int, W: int, H: int,
                       warp_amplitude: float = WARP_AMPLITUDE):
    """Panorama, perspective view and randomly warped panorama of one scene.

    The perspective image is the gnomonic view of a supersampled render with
    ``view.out_size`` forced to ``W``, centre-cropped to ``H`` rows so all three
    images are ``H x W``.
    """
    pano = render_panorama(spec, W, H)
    s = PERSPECTIVE_SUPERSAMPLE
    source = render_panorama(spec, s * W, s * H)
    square = equirect_to_perspective(source, ViewSpec(view.yaw, view.pitch, view.fov, W))
    top = (W - H) // 2
    persp = square[top:top + H]
    warped = random_warp(pano, warp_seed, warp_amplitude)
    return pano, persp, warped


def sample_seeds(seed: int, n: int) -> list[dict]:
    """Per-sample scene, view and warp seeds, reproducible from one integer."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        scene_seed, warp_seed = (int(s) for s in rng.integers(0, 2 ** 31, 2))
        out.append({"scene_seed": scene_seed, "warp_seed": warp_seed,
                    "yaw": float(rng.uniform(-np.pi, np.pi)),
                    "pitch": float(rng.uniform(-MAX_PITCH, MAX_PITCH))})
    return out


def generate_corpus(n_per_class: int, W: int = 64, H: int = 32, seed: int = 0,
                    fov: float = np.pi / 2):
    """Images ``(3 * n, H, W, 3)``, class labels and a manifest list.

    Samples are ordered class-major: all panoramas, then perspectives, then
    random warps; index ``k`` of every class shares scene content.
    """
    entries = sample_seeds(seed, n_per_class)
    images = np.zeros((len(CLASSES), n_per_class, H, W, 3))
    for k, e in enumerate(entries):
        spec = SceneSpec.random(e["scene_seed"])
        view = ViewSpec(yaw=e["yaw"], pitch=e["pitch"], fov=fov, out_size=W)
        images[:, k] = make_class_triplet(spec, view, e["warp_seed"], W, H)
        e["scene"] = asdict(spec)
    labels = np.repeat(np.arange(len(CLASSES)), n_per_class)
    return images.reshape(-1, H, W, 3), labels, entries


def write_corpus(out_dir, n_per_class: int, W: int, H: int, seed: int, config: dict | None = None):
    from .fileio import write_image

    out = Path(out_dir)
    images, labels, entries = generate_corpus(n_per_class, W, H, seed)
    for c, name in enumerate(CLASSES):
        (out / name).mkdir(parents=True, exist_ok=True)
        for k in range(n_per_class):
            write_image(out / name / f"{k:04d}.png", images[c * n_per_class + k])
    manifest = {"classes": list(CLASSES), "per_class": n_per_class, "width": W, "height": H,
                "seed": seed, "config": config or {}, "samples": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return images, labels


def load_corpus(root):
    """Images and labels from a directory written by :func:`write_corpus`."""
    from .fileio import read_image

    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory {root} does not exist")
    images, labels = [], []
    for c, name in enumerate(CLASSES):
        files = sorted((root / name).glob("*.png"))
        for f in files:
            images.append(read_image(f))
            labels.append(c)
    if not images:
        raise FileNotFoundError(f"no images found under {root}")
    return np.stack(images), np.array(labels)
