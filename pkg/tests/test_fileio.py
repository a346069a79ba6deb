import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from panometric.fileio import (
    FEATURE_HEADER, FeatureFile, FormatError, decode_features, decode_params, encode_features,
    encode_params, read_features, read_image, read_params, write_features, write_image, write_mask,
    write_params,
)


def test_png_round_trip(tmp_path, rng):
    img = rng.random((12, 24, 3))
    write_image(tmp_path / "a.png", img)
    back = read_image(tmp_path / "a.png")
    assert back.shape == img.shape
    assert np.max(np.abs(back - img)) <= 1 / 510 + 1e-12


def test_mask_png(tmp_path):
    m = np.zeros((4, 8), dtype=bool)
    m[1:3, 2:5] = True
    write_mask(tmp_path / "m.png", m)
    back = read_image(tmp_path / "m.png")
    assert np.array_equal(back[..., 0] > 0.5, m)


def test_feature_round_trip_bitwise(tmp_path, rng):
    X = rng.normal(size=(7, 5)).astype(np.float32)
    write_features(tmp_path / "f.pfea", X, b"\x01" * 32)
    ff = read_features(tmp_path / "f.pfea")
    assert ff.features.tobytes() == X.tobytes() and ff.extractor_hash == b"\x01" * 32
    blob = (tmp_path / "f.pfea").read_bytes()
    assert len(blob) == 4 + 2 + 32 + 4 + 4 + 4 * 7 * 5
    assert blob[:4] == b"PFEA"


def test_feature_errors(rng):
    blob = encode_features(FeatureFile(rng.normal(size=(3, 2))))
    with pytest.raises(FormatError, match="expected 70 bytes, got 66"):
        decode_features(blob[:-4])
    with pytest.raises(FormatError, match="offset 0"):
        decode_features(b"XXXX" + blob[4:])
    with pytest.raises(FormatError, match="truncated header"):
        decode_features(blob[:10])
    with pytest.raises(ValueError):
        FeatureFile(np.zeros((2, 2)), b"short")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 6), st.integers(1, 6), st.integers(0, 2 ** 31))
def test_feature_round_trip_property(n, d, seed):
    X = np.random.default_rng(seed).normal(size=(n, d)).astype(np.float32)
    assert decode_features(encode_features(FeatureFile(X))).features.tobytes() == X.tobytes()


def test_params_round_trip(tmp_path, rng):
    tensors = {"w": rng.normal(size=(3, 4)), "b": rng.normal(size=4), "s": np.array(2.5)}
    digest = write_params(tmp_path / "p.bin", tensors)
    back, digest2 = read_params(tmp_path / "p.bin")
    assert digest == digest2 and list(back) == ["w", "b", "s"]
    for k in tensors:
        np.testing.assert_array_equal(back[k], tensors[k])


def test_params_corruption_detected(rng):
    blob = bytearray(encode_params({"w": rng.normal(size=(2, 2))}))
    blob[-1] ^= 0xFF
    with pytest.raises(FormatError, match="hash"):
        decode_params(bytes(blob))
    with pytest.raises(FormatError, match="length"):
        decode_params(bytes(blob[:-8]))
    with pytest.raises(FormatError):
        decode_params(b"NOPE" + bytes(blob[4:]))
