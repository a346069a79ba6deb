"""Training loop, latent stand-ins and the distortion probe for the toy denoiser.

The latent codec is a fixed linear stand-in for a VAE: 2x2 area pooling and a
projection of RGB onto two orthonormal colour axes (luminance and a red/blue
opponent axis), scaled to roughly unit variance. Decoding is the transpose
map followed by nearest-neighbour upsampling, so decoded images are
differentiable in the latent.

The distortion probe scores a trained model by recovering clean latents from
noised held-out panoramas with a single step, decoding them, and counting the
fraction the contrastive encoder assigns to the panorama class.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import contrastive as ctr
from . import decoupled_net as dn
from .corpus import PANORAMA, PERSPECTIVE_SUPERSAMPLE, SceneSpec, generate_corpus, render_panorama, sample_seeds
from .diffusion import DEFAULT_LAMBDA, add_noise, loss_dist, loss_rec, make_schedule, recover_z0
from .geometry import build_distortion_map, downsample_distortion_map
from .numerics import autodiff as ad
from .numerics.optim import Adam
from .projection import ViewSpec, equirect_to_perspective, make_nfov_mask

logger = logging.getLogger(__name__)

LATENT_BASIS = np.array([[1.0, 1.0, 1.0], [1.0, 0.0, -1.0]])
LATENT_BASIS /= np.linalg.norm(LATENT_BASIS, axis=1, keepdims=True)
LATENT_SCALE = 4.0
LATENT_POOL = 2
PROBE_TIMESTEPS = (50, 100, 200, 300)


def encode_latent(images) -> np.ndarray:
    """``(n, H, W, 3)`` images in [0, 1] to ``(n, H/2, W/2, 2)`` latents."""
    x = np.asarray(images, dtype=float)
    n, H, W, _ = x.shape
    k = LATENT_POOL
    pooled = x.reshape(n, H // k, k, W // k, k, 3).mean(axis=(2, 4))
    return (pooled - 0.5) @ LATENT_BASIS.T * LATENT_SCALE


def decode_latent(z):
    """Inverse-direction stand-in decoder; returns a Var when ``z`` is one."""
    zv = ad.as_var(z)
    n, h, w, _ = zv.value.shape
    k = LATENT_POOL
    rgb = ad.matmul(zv * (1.0 / LATENT_SCALE), LATENT_BASIS) + 0.5
    up = ad.reshape(rgb, (n, h, 1, w, 1, 3)) + np.zeros((1, 1, k, 1, k, 1))
    out = ad.reshape(up, (n, h * k, w * k, 3))
    return out if isinstance(z, ad.Var) else out.value


def roundtrip(images) -> np.ndarray:
    return decode_latent(encode_latent(images))


@dataclass
class ToyData:
    z0: np.ndarray
    c_p: np.ndarray
    mask: np.ndarray
    c_n: np.ndarray
    c_d: np.ndarray

    def __len__(self):
        return len(self.z0)

    def bundle(self, idx, c_t) -> dn.ConditioningBundle:
        return dn.ConditioningBundle(self.c_p[idx], self.mask[idx], self.c_d, self.c_n[idx], c_t)


def make_toy_data(n: int, seed: int, config: dn.ToyConfig = dn.ToyConfig(),
                  fov: float = np.pi / 2) -> ToyData:
    """Panorama latents with their masked partial panoramas and perspective views."""
    H, W, P = config.image_h, config.image_w, config.persp_size
    z0, c_p, masks, c_n = [], [], [], []
    for e in sample_seeds(seed, n):
        spec = SceneSpec.random(e["scene_seed"])
        pano = render_panorama(spec, W, H)
        view = ViewSpec(yaw=e["yaw"], pitch=e["pitch"], fov=fov, out_size=P)
        source = render_panorama(spec, PERSPECTIVE_SUPERSAMPLE * W, PERSPECTIVE_SUPERSAMPLE * H)
        mask = make_nfov_mask(view, W, H)
        z0.append(encode_latent(pano[None])[0])
        c_p.append(pano * mask[..., None])
        masks.append(mask.astype(float))
        c_n.append(equirect_to_perspective(source, view))
    c_d = downsample_distortion_map(build_distortion_map(W, H), config.image_scale).data
    return ToyData(np.stack(z0), np.stack(c_p), np.stack(masks), np.stack(c_n), np.array(c_d))


def train_probe_encoder(seed: int = 0, n_per_class: int = 60, steps: int = 1500,
                        lr: float = 0.2) -> ctr.EncoderParams:
    """Contrastive encoder trained on corpus images passed through the latent codec.

    Training on round-tripped images keeps the encoder in-distribution for
    decoded samples.
    """
    images, labels, _ = generate_corpus(n_per_class, seed=seed)
    result = ctr.train_distort_encoder(roundtrip(images), labels, ctr.TrainConfig(seed=seed, steps=steps, lr=lr))
    return result.params


@dataclass
class ToyTrainConfig:
    mode: str = dn.ALL_BLOCK
    seed: int = 1
    steps: int = 200
    batch: int = 16
    lr: float = 3e-3
    lam: float = DEFAULT_LAMBDA
    n_train: int = 64
    n_eval: int = 16

    def __post_init__(self):
        if self.mode not in dn.MODES:
            raise ValueError(f"mode must be one of {dn.MODES}, got {self.mode!r}")
        if self.steps < 1 or self.batch < 1:
            raise ValueError("steps and batch must be positive")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")


@dataclass
class ToyTrainResult:
    model: dn.DecoupledModel
    history: list = field(default_factory=list)
    probe_score: float = float("nan")

    @property
    def initial_loss(self) -> float:
        return self.history[0]["eval_total"]

    @property
    def final_loss(self) -> float:
        return self.history[-1]["eval_total"]


def _encoder_vars(encoder: ctr.EncoderParams):
    return [ad.Var(getattr(encoder, name)) for name in ctr.PARAM_NAMES[:4]]


def _objective(model, params, data: ToyData, idx, t, eps, encoder, sched, lam):
    z_t = add_noise(data.z0[idx], eps, t, sched)
    c_t = encoder.text[PANORAMA]
    pred = dn.forward_fused(z_t, t, data.bundle(idx, c_t), model, params)
    rec = loss_rec(eps, pred)
    x = decode_latent(recover_z0(ad.as_var(z_t), pred, t, sched))
    feat = ctr.encode_images(x, *_encoder_vars(encoder))
    dist = loss_dist(feat, encoder.text)
    return rec - lam * dist, rec, dist


def _scalar(v) -> float:
    return float(getattr(v, "value", v))


def train_toynet(config: ToyTrainConfig, encoder: ctr.EncoderParams,
                 model_config: dn.ToyConfig = dn.ToyConfig(), log_every: int = 0) -> ToyTrainResult:
    """Adam on the side branches with reconstruction minus ``lam`` times the distortion term.

    The loss curve is recorded on a fixed evaluation batch (fixed timesteps
    and noise) so steps are comparable.
    """
    sched = make_schedule()
    rng = np.random.default_rng(config.seed)
    model = dn.init_decoupled(model_config, seed=config.seed, mode=config.mode)
    data = make_toy_data(config.n_train + config.n_eval, seed=config.seed, config=model_config)
    eval_idx = np.arange(config.n_train, config.n_train + config.n_eval)
    eval_t = rng.integers(0, sched.T, config.n_eval)
    eval_eps = rng.normal(size=data.z0[eval_idx].shape)
    opt = Adam(model.trainable, lr=config.lr)
    history = []

    def evaluate(step, train_total):
        total, rec, dist = _objective(model, None, data, eval_idx, eval_t, eval_eps, encoder, sched, config.lam)
        history.append({"step": step, "train_total": train_total, "eval_total": _scalar(total),
                        "eval_rec": _scalar(rec), "eval_dist": _scalar(dist)})

    evaluate(0, float("nan"))
    for step in range(1, config.steps + 1):
        idx = rng.choice(config.n_train, config.batch, replace=False)
        t = rng.integers(0, sched.T, config.batch)
        eps = rng.normal(size=data.z0[idx].shape)
        tape = ad.Tape()
        params = {k: tape.param(v) for k, v in model.trainable.items()}
        total, _, _ = _objective(model, params, data, idx, t, eps, encoder, sched, config.lam)
        loss = _scalar(total)
        if not np.isfinite(loss):
            raise ctr.DivergenceError(step)
        tape.backward(total)
        opt.step({k: v.grad for k, v in params.items()})
        evaluate(step, loss)
        if log_every and step % log_every == 0:
            logger.info("%s step %d loss %.6f", config.mode, step, history[-1]["eval_total"])
    result = ToyTrainResult(model, history)
    result.probe_score = probe_score(model, encoder, data, eval_idx, seed=config.seed)
    return result


def probe_score(model: dn.DecoupledModel, encoder: ctr.EncoderParams, data: ToyData, idx,
                seed: int = 0, timesteps=PROBE_TIMESTEPS) -> float:
    """Fraction of one-step reconstructions the encoder labels as panoramas."""
    sched = make_schedule()
    rng = np.random.default_rng(seed + 7919)
    hits = total = 0
    for t in timesteps:
        eps = rng.normal(size=data.z0[idx].shape)
        z_t = add_noise(data.z0[idx], eps, t, sched)
        pred = dn.forward_fused(z_t, t, data.bundle(idx, encoder.text[PANORAMA]), model)
        x = np.clip(decode_latent(recover_z0(z_t, pred, t, sched)), 0.0, 1.0)
        hits += int(np.sum(ctr.classify(encoder, x) == PANORAMA))
        total += len(idx)
    return hits / total
