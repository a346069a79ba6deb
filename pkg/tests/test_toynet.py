import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from panometric import contrastive as ctr
from panometric import decoupled_net as dn
from panometric import toynet as tn
from panometric.numerics import autodiff as ad
from panometric.numerics import grad_check


def test_latent_basis_orthonormal():
    np.testing.assert_allclose(tn.LATENT_BASIS @ tn.LATENT_BASIS.T, np.eye(2), atol=1e-15)


def test_codec_shapes_and_constant_colour():
    img = np.full((2, 32, 64, 3), 0.3)
    z = tn.encode_latent(img)
    assert z.shape == (2, 16, 32, 2)
    # a grey image has zero opponent component and a fixed luminance
    np.testing.assert_allclose(z[..., 1], 0, atol=1e-15)
    np.testing.assert_allclose(z[..., 0], (0.3 - 0.5) * np.sqrt(3) * tn.LATENT_SCALE, atol=1e-14)
    np.testing.assert_allclose(tn.roundtrip(img), img, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(arrays(float, (1, 4, 6, 2), elements=st.floats(-3, 3)))
def test_encode_inverts_decode(z):
    np.testing.assert_allclose(tn.encode_latent(tn.decode_latent(z)), z, atol=1e-12)


def test_roundtrip_is_projection():
    img = np.random.default_rng(0).random((1, 8, 8, 3))
    once = tn.roundtrip(img)
    np.testing.assert_allclose(tn.roundtrip(once), once, atol=1e-14)


def test_decode_differentiable():
    z = np.random.default_rng(1).normal(size=(1, 2, 3, 2))
    w = np.random.default_rng(2).normal(size=(1, 4, 6, 3))
    assert grad_check(lambda v: (tn.decode_latent(v[0]) * w).sum(), [z]) < 1e-8


def test_toy_data_consistency():
    data = tn.make_toy_data(3, seed=4)
    cfg = dn.ToyConfig()
    assert data.z0.shape == (3, cfg.latent_h, cfg.latent_w, cfg.latent_c)
    assert data.c_p.shape == (3, cfg.image_h, cfg.image_w, 3)
    assert data.c_n.shape == (3, cfg.persp_size, cfg.persp_size, 3)
    assert data.c_d.shape == (cfg.latent_h, cfg.latent_w, 4)
    # masked pixels of the partial panorama are exactly zero
    assert np.all(data.c_p[data.mask == 0] == 0)
    assert 0 < data.mask.mean() < 1
    again = tn.make_toy_data(3, seed=4)
    assert np.array_equal(again.z0, data.z0) and np.array_equal(again.c_n, data.c_n)


def test_config_validation():
    with pytest.raises(ValueError):
        tn.ToyTrainConfig(mode="sideways")
    with pytest.raises(ValueError):
        tn.ToyTrainConfig(steps=0)
    with pytest.raises(ValueError):
        tn.ToyTrainConfig(lam=-1)


@pytest.fixture(scope="module")
def short_run():
    enc = ctr.init_encoder(0)
    cfg = tn.ToyTrainConfig(steps=15, n_train=16, n_eval=4, batch=4)
    before = dn.init_decoupled(seed=cfg.seed, mode=cfg.mode)
    return enc, cfg, before, tn.train_toynet(cfg, enc)


def test_short_training_runs(short_run):
    _, cfg, _, res = short_run
    assert len(res.history) == cfg.steps + 1
    assert all(np.isfinite(h["eval_total"]) for h in res.history)
    assert res.final_loss < res.initial_loss
    assert 0.0 <= res.probe_score <= 1.0


def test_backbone_frozen_and_gates_moved(short_run):
    _, _, before, res = short_run
    for k, v in before.frozen.items():
        assert np.array_equal(res.model.frozen[k], v)
    assert any(res.model.trainable[k] != 0 for k in res.model.trainable if k.endswith("_gate"))


def test_training_deterministic(short_run):
    enc, cfg, _, res = short_run
    again = tn.train_toynet(cfg, enc)
    assert [h["eval_total"] for h in again.history] == [h["eval_total"] for h in res.history]
    assert again.probe_score == res.probe_score


def test_objective_is_rec_minus_lambda_dist(short_run):
    enc, _, before, _ = short_run
    data = tn.make_toy_data(2, seed=0)
    sched = tn.make_schedule()
    eps = np.random.default_rng(0).normal(size=data.z0.shape)
    t = np.array([10, 500])
    vals = [tn._objective(before, None, data, np.arange(2), t, eps, enc, sched, lam) for lam in (0.0, 0.05)]
    rec, dist = tn._scalar(vals[0][1]), tn._scalar(vals[0][2])
    assert abs(tn._scalar(vals[0][0]) - rec) < 1e-14
    assert abs(tn._scalar(vals[1][0]) - (rec - 0.05 * dist)) < 1e-12


def test_probe_score_perfect_for_oracle_denoiser():
    enc = ctr.init_encoder(0)
    data = tn.make_toy_data(2, seed=0)
    # a model whose prediction is the true noise recovers z0 exactly
    class Exact:
        pass
    z = data.z0
    labels = ctr.classify(enc, np.clip(tn.decode_latent(z), 0, 1))
    expected = np.mean(labels == tn.PANORAMA)

    def fake_forward(z_t, t, bundle, model, params=None):
        sched = tn.make_schedule()
        a = sched.alpha_bar[t]
        return (z_t - np.sqrt(a) * z) / np.sqrt(1 - a)

    orig = dn.forward_fused
    dn.forward_fused = fake_forward
    try:
        score = tn.probe_score(Exact(), enc, data, np.arange(2))
    finally:
        dn.forward_fused = orig
    assert abs(score - expected) < 1e-12
