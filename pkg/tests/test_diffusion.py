import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from panometric.diffusion import (
    add_noise, loss_dist, loss_rec, make_schedule, recover_z0, schedule_from_betas, total_loss,
)
from panometric.numerics import Tape, grad_check
from panometric.numerics import autodiff as ad


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def test_schedule_examples():
    s = make_schedule(1, 0.5, 0.5)
    np.testing.assert_allclose(s.alpha_bar, [0.5])
    s = schedule_from_betas([0.1, 0.2])
    np.testing.assert_allclose(s.alpha_bar, [0.9, 0.72], atol=1e-15)
    s = make_schedule()
    assert s.T == 1000 and s.beta[0] == 1e-4 and s.beta[-1] == pytest.approx(0.02)
    assert np.all(np.diff(s.alpha_bar) < 0)
    np.testing.assert_allclose(s.alpha_bar, np.cumprod(1 - s.beta), rtol=1e-15)


def test_schedule_errors():
    with pytest.raises(ValueError):
        make_schedule(0)
    with pytest.raises(ValueError):
        make_schedule(10, 0.2, 0.1)
    with pytest.raises(ValueError):
        make_schedule(10, 0.0, 0.1)
    s = make_schedule(10)
    with pytest.raises(ValueError):
        add_noise(np.zeros(3), np.zeros(3), 10, s)
    with pytest.raises(ValueError):
        add_noise(np.zeros(3), np.zeros(2), 0, s)
    with pytest.raises(ValueError):
        add_noise(np.zeros(3), np.zeros(3), 1.5, s)


def test_add_noise_examples(rng):
    s = make_schedule(10, 1e-12, 1e-12)
    z0 = rng.normal(size=5)
    np.testing.assert_allclose(add_noise(z0, rng.normal(size=5), 0, s), z0, atol=1e-5)
    s = make_schedule(10)
    np.testing.assert_array_equal(add_noise(z0, np.zeros(5), 3, s), np.sqrt(s.alpha_bar[3]) * z0)
    eps = rng.normal(size=5)
    ab = np.prod(1 - s.beta[:6])
    expected = [np.sqrt(ab) * a + np.sqrt(1 - ab) * e for a, e in zip(z0, eps)]
    np.testing.assert_allclose(add_noise(z0, eps, 5, s), expected, atol=1e-15)


def test_recover_examples(rng):
    s = make_schedule(10)
    z = rng.normal(size=5)
    np.testing.assert_allclose(recover_z0(z, np.zeros(5), 2, s), z / np.sqrt(s.alpha_bar[2]), rtol=1e-15)
    eps = rng.normal(size=5)
    ab = np.prod(1 - s.beta[:8])
    expected = [(a - np.sqrt(1 - ab) * e) / np.sqrt(ab) for a, e in zip(z, eps)]
    np.testing.assert_allclose(recover_z0(z, eps, 7, s), expected, atol=1e-12)


def test_round_trip_all_t(rng):
    s = make_schedule()
    z0 = rng.normal(size=(4, 8))
    eps = rng.normal(size=(4, 8))
    for t in range(s.T):
        assert np.max(np.abs(recover_z0(add_noise(z0, eps, t, s), eps, t, s) - z0)) < 1e-10


def test_per_sample_timesteps(rng):
    s = make_schedule()
    z0 = rng.normal(size=(3, 2, 2))
    eps = rng.normal(size=(3, 2, 2))
    t = np.array([0, 500, 999])
    batched = add_noise(z0, eps, t, s)
    for k in range(3):
        np.testing.assert_array_equal(batched[k], add_noise(z0[k], eps[k], int(t[k]), s))


def test_variance_law():
    s = make_schedule()
    rng = np.random.default_rng(0)
    for t in (0, 300, 999):
        z = add_noise(rng.normal(size=10_000), rng.normal(size=10_000), t, s)
        assert abs(z.var() - 1) < 0.03


def test_loss_rec_examples(rng):
    a = rng.normal(size=(3, 4))
    assert loss_rec(a, a) == 0.0
    assert loss_rec(a, a + 1) == pytest.approx(1.0, abs=1e-15)
    b = rng.normal(size=(3, 4))
    assert loss_rec(a, b) == pytest.approx(sum((x - y) ** 2 for x, y in zip(a.ravel(), b.ravel())) / 12,
                                           abs=1e-12)
    with pytest.raises(ValueError):
        loss_rec(a, b[:2])


def test_loss_dist_examples(rng):
    e = np.eye(3)
    assert loss_dist(e[0], e) == 1.0
    x = np.array([0, 0, 0, 1.0])
    assert loss_dist(x, np.eye(4)[:3]) == 0.0
    x = unit(rng.normal(size=5))
    z = unit(rng.normal(size=(3, 5)))
    assert loss_dist(x, z) == pytest.approx(x @ z[0] - x @ z[1] - x @ z[2], abs=1e-12)
    with pytest.raises(ValueError):
        loss_dist(2 * x, z)
    with pytest.raises(ValueError):
        loss_dist(x, z[:2])


def test_total_loss(rng):
    e1, e2 = rng.normal(size=(2, 6))
    x = unit(rng.normal(size=4))
    z = unit(rng.normal(size=(3, 4)))
    assert total_loss(e1, e2, x, z, 0.0) == loss_rec(e1, e2)
    assert total_loss(e1, e1, np.eye(3)[0], np.eye(3), 0.05) == pytest.approx(-0.05)
    assert total_loss(e1, e2, x, z) == pytest.approx(loss_rec(e1, e2) - 0.05 * loss_dist(x, z), abs=1e-12)
    vals = {lam: total_loss(e1, e2, x, z, lam) for lam in (0.0, 0.05, 1.0)}
    slope = vals[1.0] - vals[0.0]
    assert vals[0.05] == pytest.approx(vals[0.0] + 0.05 * slope, abs=1e-12)
    with pytest.raises(ValueError):
        total_loss(e1, e2, x, z, -1.0)


def test_ascent_on_dist_increases_alignment(rng):
    x = unit(rng.normal(size=6))
    z = unit(rng.normal(size=(3, 6)))
    tape = Tape()
    xv = tape.param(x)
    tape.backward(loss_dist(ad.l2_normalize(xv), z))
    x2 = unit(x + 0.05 * xv.grad)
    assert x2 @ z[0] - x2 @ z[1] - x2 @ z[2] > x @ z[0] - x @ z[1] - x @ z[2]


def test_loss_gradients(rng):
    eps = rng.normal(size=(2, 5))
    z = unit(rng.normal(size=(3, 4)))
    assert grad_check(lambda v: loss_rec(eps, v[0]), [rng.normal(size=(2, 5))]) < 1e-4
    assert grad_check(lambda v: loss_dist(ad.l2_normalize(v[0]), ad.l2_normalize(v[1])),
                      [rng.normal(size=(2, 4)), rng.normal(size=(3, 4))]) < 1e-4
    assert grad_check(lambda v: total_loss(eps, v[0], ad.l2_normalize(v[1]), z),
                      [rng.normal(size=(2, 5)), rng.normal(size=(2, 4))]) < 1e-4


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 999), st.integers(0, 2 ** 31))
def test_round_trip_property(t, seed):
    r = np.random.default_rng(seed)
    s = make_schedule()
    z0, eps = r.normal(size=(2, 16))
    assert np.max(np.abs(recover_z0(add_noise(z0, eps, t, s), eps, t, s) - z0)) < 1e-10
