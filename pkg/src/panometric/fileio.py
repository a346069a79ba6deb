"""PNG images, feature files and encoder parameter dumps.

Feature file layout (little-endian)::

    magic   4 bytes  b"PFEA"
    version u16
    hash    32 bytes extractor identity
    n       u32
    d       u32
    data    n*d float32, row-major

Parameter dump layout (little-endian)::

    magic   4 bytes  b"PPRM"
    version u16
    count   u32      number of tensors
    per tensor: name length u16, utf-8 name, ndim u8, ndim * u32 dims
    hash    32 bytes SHA-256 of the payload
    payload float64 values of every tensor in order
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

FEATURE_MAGIC = b"PFEA"
FEATURE_VERSION = 1
FEATURE_HEADER = struct.Struct("<4sH32sII")
PARAMS_MAGIC = b"PPRM"
PARAMS_VERSION = 1
NO_EXTRACTOR = bytes(32)


class FormatError(ValueError):
    """A file does not match its declared layout."""


def read_image(path) -> np.ndarray:
    """8-bit PNG as floats in [0, 1], shape ``(H, W, C)``."""
    with PILImage.open(path) as im:
        if im.mode not in ("L", "RGB", "RGBA"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.uint8)
    if arr.ndim == 2:
        arr = arr[..., None]
    return arr.astype(float) / 255.0


def to_uint8(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=float)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def write_image(path, img: np.ndarray) -> None:
    arr = img if np.asarray(img).dtype == np.uint8 else to_uint8(img)
    PILImage.fromarray(arr).save(path, format="PNG")


def write_mask(path, mask: np.ndarray) -> None:
    write_image(path, np.asarray(mask, dtype=np.uint8) * 255)


@dataclass(frozen=True)
class FeatureFile:
    features: np.ndarray
    extractor_hash: bytes = NO_EXTRACTOR
    version: int = FEATURE_VERSION

    def __post_init__(self):
        if len(self.extractor_hash) != 32:
            raise ValueError("extractor hash must be 32 bytes")
        if np.ndim(self.features) != 2:
            raise ValueError("features must be 2-D")


def encode_features(ff: FeatureFile) -> bytes:
    data = np.ascontiguousarray(ff.features, dtype="<f4")
    n, d = data.shape
    return FEATURE_HEADER.pack(FEATURE_MAGIC, ff.version, ff.extractor_hash, n, d) + data.tobytes()


def decode_features(blob: bytes) -> FeatureFile:
    if len(blob) < FEATURE_HEADER.size:
        raise FormatError(f"truncated header: expected at least {FEATURE_HEADER.size} bytes, "
                          f"got {len(blob)}")
    magic, version, digest, n, d = FEATURE_HEADER.unpack_from(blob)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {FEATURE_MAGIC!r}")
    expected = FEATURE_HEADER.size + 4 * n * d
    if len(blob) != expected:
        raise FormatError(f"length mismatch for n={n}, d={d}: expected {expected} bytes, "
                          f"got {len(blob)} (data starts at offset {FEATURE_HEADER.size})")
    data = np.frombuffer(blob, dtype="<f4", offset=FEATURE_HEADER.size).reshape(n, d)
    return FeatureFile(data.copy(), digest, version)


def write_features(path, features, extractor_hash: bytes = NO_EXTRACTOR) -> None:
    Path(path).write_bytes(encode_features(FeatureFile(np.asarray(features), extractor_hash)))


def read_features(path) -> FeatureFile:
    return decode_features(Path(path).read_bytes())


def encode_params(tensors: dict[str, np.ndarray]) -> bytes:
    header = [struct.pack("<4sHI", PARAMS_MAGIC, PARAMS_VERSION, len(tensors))]
    payload = []
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode()
        header.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim)
                      + struct.pack(f"<{arr.ndim}I", *arr.shape))
        payload.append(np.ascontiguousarray(arr).tobytes())
    body = b"".join(payload)
    return b"".join(header) + hashlib.sha256(body).digest() + body


def decode_params(blob: bytes):
    """Tensors in file order and the payload hash."""
    try:
        magic, version, count = struct.unpack_from("<4sHI", blob, 0)
    except struct.error as exc:
        raise FormatError(f"truncated header ({len(blob)} bytes)") from exc
    if magic != PARAMS_MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {PARAMS_MAGIC!r}")
    pos = 10
    shapes = []
    try:
        for _ in range(count):
            (length,) = struct.unpack_from("<H", blob, pos)
            name = blob[pos + 2:pos + 2 + length].decode()
            pos += 2 + length
            (ndim,) = struct.unpack_from("<B", blob, pos)
            dims = struct.unpack_from(f"<{ndim}I", blob, pos + 1)
            pos += 1 + 4 * ndim
            shapes.append((name, dims))
    except struct.error as exc:
        raise FormatError(f"truncated tensor table at offset {pos}") from exc
    digest = blob[pos:pos + 32]
    pos += 32
    total = sum(int(np.prod(dims)) for _, dims in shapes)
    expected = pos + 8 * total
    if len(blob) != expected:
        raise FormatError(f"length mismatch: expected {expected} bytes, got {len(blob)}")
    body = blob[pos:]
    if hashlib.sha256(body).digest() != digest:
        raise FormatError(f"payload hash mismatch at offset {pos - 32}")
    tensors = {}
    for name, dims in shapes:
        size = int(np.prod(dims))
        tensors[name] = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).reshape(dims).copy()
        pos += 8 * size
    return tensors, digest


def params_hash(tensors: dict[str, np.ndarray]) -> bytes:
    return decode_params(encode_params(tensors))[1]


def write_params(path, tensors: dict[str, np.ndarray]) -> bytes:
    blob = encode_params(tensors)
    Path(path).write_bytes(blob)
    return decode_params(blob)[1]


def read_params(path):
    return decode_params(Path(path).read_bytes())
