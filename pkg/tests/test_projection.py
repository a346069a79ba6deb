import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from panometric.projection import (
    ViewSpec, direction_to_sphere, equirect_to_perspective, make_nfov_mask,
    perspective_directions, perspective_to_equirect, rotation, sample_equirect,
)


def smooth_pano(W, H):
    j, i = np.mgrid[0:H, 0:W]
    az = (2 * i / W - 1) * np.pi
    el = (2 * j / H - 1) * np.pi / 2
    r = 0.5 + 0.3 * np.cos(el) * np.sin(az)
    g = 0.5 + 0.3 * np.sin(el)
    b = 0.5 + 0.3 * np.cos(el) * np.cos(az)
    return np.stack([r, g, b], axis=-1)


def smooth_persp(P):
    b, a = np.mgrid[0:P, 0:P] / P
    return np.stack([0.5 + 0.4 * np.sin(np.pi * a) * np.cos(np.pi * b), 0.3 + 0.5 * a * b,
                     0.5 + 0.3 * np.cos(2 * np.pi * (a - b))], axis=-1)


def psnr(a, b):
    return 10 * np.log10(1.0 / np.mean((a - b) ** 2))


def brute_force_mask(view, W, H, tol=1e-9):
    """Per-pixel frustum test, written independently of the library."""
    R = rotation(view.yaw, view.pitch)
    t = np.tan(view.fov / 2)
    out = np.zeros((H, W), dtype=bool)
    for j in range(H):
        el = (2 * j / H - 1) * np.pi / 2
        for i in range(W):
            az = (2 * i / W - 1) * np.pi
            d = np.array([np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)])
            x, y, z = R.T @ d
            out[j, i] = z > 0 and abs(x / z) <= t + tol and abs(y / z) <= t + tol
    return out


def test_view_validation():
    with pytest.raises(ValueError):
        ViewSpec(fov=0.0)
    with pytest.raises(ValueError):
        ViewSpec(fov=np.pi)
    with pytest.raises(ValueError):
        ViewSpec(pitch=2.0)
    with pytest.raises(ValueError):
        ViewSpec(out_size=0)


def test_center_pixel_looks_forward():
    view = ViewSpec(out_size=8)
    az, el = direction_to_sphere(perspective_directions(view))
    assert az[4, 4] == 0.0 and el[4, 4] == 0.0


def test_corner_direction():
    d = rotation(0.0, 0.0) @ (np.ones(3) / np.sqrt(3))
    az, el = direction_to_sphere(d)
    assert az == pytest.approx(np.pi / 4, abs=1e-15)
    assert el == pytest.approx(0.6154797086703873, abs=1e-12)


def test_perspective_pixel_formula(rng):
    view = ViewSpec(yaw=0.3, pitch=-0.2, fov=1.2, out_size=16)
    dirs = perspective_directions(view)
    t = np.tan(0.6)
    for a, b in rng.integers(0, 16, size=(5, 2)):
        ray = np.array([(2 * a / 16 - 1) * t, (2 * b / 16 - 1) * t, 1.0])
        ray = rotation(0.3, -0.2) @ (ray / np.linalg.norm(ray))
        np.testing.assert_allclose(dirs[b, a], ray, atol=1e-14)


def test_constant_pano_gives_constant_view():
    pano = np.full((32, 64, 3), 0.3)
    out = equirect_to_perspective(pano, ViewSpec(yaw=1.0, pitch=0.4, out_size=20))
    np.testing.assert_allclose(out, 0.3, atol=1e-15)


def test_input_validation():
    with pytest.raises(ValueError):
        equirect_to_perspective(np.zeros((32, 32, 3)), ViewSpec())
    with pytest.raises(ValueError):
        equirect_to_perspective(np.full((32, 64, 3), 2.0), ViewSpec())
    with pytest.raises(ValueError):
        perspective_to_equirect(np.zeros((10, 10, 3)), ViewSpec(out_size=12), 64, 32)
    with pytest.raises(ValueError):
        sample_equirect(np.zeros((4, 8, 3)), 0.0, 0.0, wrap="mirror")


def test_round_trip_psnr_full_scale():
    img = smooth_persp(256)
    view = ViewSpec(fov=np.pi / 2, out_size=256)
    pano, mask = perspective_to_equirect(img, view, 1024, 512)
    back = equirect_to_perspective(pano, view)
    assert psnr(back, img) > 30


def test_unprojected_known_region_matches_pano():
    pano = smooth_pano(256, 128)
    view = ViewSpec(yaw=0.5, pitch=0.3, out_size=128)
    back, mask = perspective_to_equirect(equirect_to_perspective(pano, view), view, 256, 128)
    assert psnr(back[mask], pano[mask]) > 30
    assert np.all(back[~mask] == 0)


def test_black_input_black_known_region():
    view = ViewSpec(out_size=16)
    pano, mask = perspective_to_equirect(np.zeros((16, 16, 3)), view, 64, 32)
    assert mask.any() and not pano.any()


@pytest.mark.parametrize("view", [ViewSpec(), ViewSpec(yaw=0.7, pitch=0.4, fov=1.0), ViewSpec(pitch=-0.9)])
def test_mask_matches_brute_force(view):
    W, H = 128, 64
    assert np.array_equal(make_nfov_mask(view, W, H), brute_force_mask(view, W, H))


def test_mask_count_512():
    view = ViewSpec(fov=np.pi / 2)
    mask = make_nfov_mask(view, 512, 256)
    assert mask.sum() == brute_force_mask(view, 512, 256).sum()


def test_mask_solid_angle_monte_carlo():
    W, H = 1024, 512
    mask = make_nfov_mask(ViewSpec(), W, H)
    el = (2 * np.arange(H) / H - 1) * np.pi / 2
    weights = np.broadcast_to(np.cos(el)[:, None], (H, W))
    fraction = (weights * mask).sum() / weights.sum()
    rng = np.random.default_rng(0)
    v = rng.normal(size=(400_000, 3))
    x, y, z = v.T
    inside = (z > 0) & (np.abs(x) <= z) & (np.abs(y) <= z)
    mc = inside.mean()
    assert abs(fraction - mc) / mc < 0.01
    assert mc == pytest.approx(1 / 6, rel=0.01)


def test_mask_wide_fov_covers_front_hemisphere_columns():
    W, H = 64, 32
    mask = make_nfov_mask(ViewSpec(fov=np.pi - 1e-6), W, H)
    front = np.abs((2 * np.arange(W) / W - 1) * np.pi) < np.pi / 2 - 0.01
    assert mask[H // 2, front].all()


def test_mask_yaw_pi_is_half_shift():
    W, H = 128, 64
    m0 = make_nfov_mask(ViewSpec(), W, H)
    mpi = make_nfov_mask(ViewSpec(yaw=np.pi), W, H)
    assert np.array_equal(mpi, np.roll(m0, W // 2, axis=1))


@settings(max_examples=20, deadline=None)
@given(st.integers(-32, 32), st.floats(-1.2, 1.2))
def test_unproject_equivariance(k, pitch):
    W, H, P = 64, 32, 16
    img = smooth_persp(P)
    base = ViewSpec(yaw=0.0, pitch=pitch, fov=1.4, out_size=P)
    moved = ViewSpec(yaw=2 * np.pi * k / W, pitch=pitch, fov=1.4, out_size=P)
    p0, m0 = perspective_to_equirect(img, base, W, H)
    p1, m1 = perspective_to_equirect(img, moved, W, H)
    assert np.array_equal(m1, np.roll(m0, k, axis=1))
    np.testing.assert_array_equal(p1, np.roll(p0, k, axis=1))


def test_horizontal_wrap():
    W, H = 16, 8
    pano = np.zeros((H, W, 1))
    pano[:, 0] = 1.0
    pano[:, -1] = 0.5
    below = sample_equirect(pano, np.pi - 1e-9, 0.0)
    above = sample_equirect(pano, -np.pi + 1e-9, 0.0)
    # just below +pi sits between the last column and column 0
    assert 0.99 < below[0] <= 1.0
    assert above[0] == pytest.approx(1.0, abs=1e-6)
    clamped = sample_equirect(pano, np.pi - 1e-9, 0.0, wrap="clamp")
    assert clamped[0] == pytest.approx(0.5)


def test_nearest_interp():
    pano = np.random.default_rng(1).random((16, 32, 3))
    out = equirect_to_perspective(pano, ViewSpec(out_size=8), interp="nearest")
    assert np.isin(out[..., 0], pano[..., 0]).all()
