"""Toy three-branch denoiser: frozen backbone, ContentNet and DistortNet.

Latents are ``(n, h, w, c)`` arrays. Each block is a stride-2 patch-affine
map plus a conditioning bias, followed by a leaky rectifier. The frozen
backbone's per-block features are fused with zero-gated residuals from both
side branches and decoded back to latent resolution.

ContentNet receives the masked panorama only in its first block. DistortNet
receives the encoded distortion map either in its first block or in every
block, depending on :attr:`DecoupledModel.mode`.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .geometry import DistortionMap
from .numerics import autodiff as ad

FIRST_BLOCK = "first-block"
ALL_BLOCK = "all-block"
MODES = (FIRST_BLOCK, ALL_BLOCK)


@dataclass(frozen=True)
class ToyConfig:
    latent_h: int = 16
    latent_w: int = 32
    latent_c: int = 2
    widths: tuple = (8, 16, 32)
    cond_dim: int = 16
    temb_dim: int = 8
    de_channels: int = 8
    image_scale: int = 2
    persp_size: int = 32
    persp_pool: int = 8

    @property
    def blocks(self) -> int:
        return len(self.widths)

    @property
    def image_h(self) -> int:
        return self.latent_h * self.image_scale

    @property
    def image_w(self) -> int:
        return self.latent_w * self.image_scale

    def block_shape(self, b: int):
        s = 2 ** (b + 1)
        return self.latent_h // s, self.latent_w // s, self.widths[b]

    def validate(self):
        if self.blocks < 2:
            raise ValueError("need at least two blocks")
        if self.latent_w != 2 * self.latent_h:
            raise ValueError("latent must be 2:1")
        s = 2 ** self.blocks
        if self.latent_h % s or self.latent_w % s:
            raise ValueError(f"latent {self.latent_w}x{self.latent_h} not divisible by {s}")
        if self.persp_size % self.persp_pool:
            raise ValueError("perspective size must be a multiple of the pooled size")


@dataclass
class ConditioningBundle:
    """Batched conditions; ``c_d`` and ``c_t`` may omit the batch axis."""

    c_p: np.ndarray   # (n, H, W, 3) partial panorama in image space
    mask: np.ndarray  # (n, H, W) or (H, W) known-region mask
    c_d: np.ndarray   # (h, w, 4) distortion map at latent resolution
    c_n: np.ndarray   # (n, P, P, 3) perspective image
    c_t: np.ndarray   # (cond_dim,) or (n, cond_dim) generic conditioning vector


@dataclass
class DecoupledModel:
    config: ToyConfig
    mode: str
    frozen: dict
    trainable: dict

    def injection_sites(self) -> list[str]:
        """Gates that add the distortion embedding into DistortNet blocks."""
        return [f"dn_inject{b}_gate" for b in range(self.config.blocks)]

    def active_injection_blocks(self) -> list[int]:
        return [0] if self.mode == FIRST_BLOCK else list(range(self.config.blocks))

    def copy(self) -> "DecoupledModel":
        return DecoupledModel(self.config, self.mode, copy.deepcopy(self.frozen),
                              copy.deepcopy(self.trainable))


def _block_params(rng, config: ToyConfig, prefix: str) -> dict:
    out = {}
    c_in = config.latent_c
    for b, c_out in enumerate(config.widths):
        fan = 4 * c_in
        out[f"{prefix}{b}_w"] = rng.normal(scale=np.sqrt(2.0 / fan), size=(fan, c_out))
        out[f"{prefix}{b}_b"] = np.zeros(c_out)
        out[f"{prefix}{b}_cw"] = rng.normal(scale=0.3 / np.sqrt(config.cond_dim + config.temb_dim),
                                            size=(config.cond_dim + config.temb_dim, c_out))
        c_in = c_out
    return out


def _zero_gate(params: dict, name: str, width_in: int, width_out: int):
    params[f"{name}_gate"] = np.zeros(())
    params[f"{name}_w"] = np.eye(width_in, width_out)
    params[f"{name}_b"] = np.zeros(width_out)


def init_decoupled(config: ToyConfig = ToyConfig(), seed: int = 0, mode: str = ALL_BLOCK) -> DecoupledModel:
    """Random frozen backbone, side branches copied from it, every gate zero."""
    config.validate()
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    rng = np.random.default_rng(seed)
    frozen = _block_params(rng, config, "blk")
    C = config.latent_c
    for b, c in enumerate(config.widths):
        s = 2 ** (b + 1)
        frozen[f"dec{b}_w"] = rng.normal(scale=0.5 / np.sqrt(c * config.blocks), size=(c, s * s * C))
    frozen["dec_skip"] = rng.normal(scale=0.3, size=(C, C))
    frozen["dec_b"] = np.zeros(C)

    trainable = {}
    for b in range(config.blocks):
        for part in ("w", "b", "cw"):
            trainable[f"cn{b}_{part}"] = frozen[f"blk{b}_{part}"].copy()
            trainable[f"dn{b}_{part}"] = frozen[f"blk{b}_{part}"].copy()
    w0 = config.widths[0]
    trainable["ce_w"] = rng.normal(scale=0.5, size=(4, w0))
    trainable["ce_b"] = np.zeros(w0)
    trainable["ce_gate"] = np.zeros(())
    pooled = config.persp_pool ** 2 * 3
    trainable["pe_w"] = rng.normal(scale=1.0 / np.sqrt(pooled), size=(pooled, config.cond_dim))
    trainable["pe_b"] = np.zeros(config.cond_dim)
    trainable["de_w"] = rng.normal(scale=0.5, size=(4, config.de_channels))
    trainable["de_b"] = np.zeros(config.de_channels)
    for b, c in enumerate(config.widths):
        trainable[f"proj{b}_w"] = rng.normal(scale=1.0 / np.sqrt(config.de_channels),
                                            size=(config.de_channels, c))
        trainable[f"proj{b}_b"] = np.zeros(c)
        _zero_gate(trainable, f"dn_inject{b}", c, c)
        _zero_gate(trainable, f"fuse_cn{b}", c, c)
        _zero_gate(trainable, f"fuse_dn{b}", c, c)
    return DecoupledModel(config, mode, frozen, trainable)


def timestep_embedding(t, dim: int) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    half = dim // 2
    freqs = 1.0 / 10000 ** (np.arange(half) / half)
    angles = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def patchify2(x):
    """Stride-2 space-to-depth: ``(n, h, w, c)`` to ``(n, h/2, w/2, 4c)``."""
    x = ad.as_var(x)
    n, h, w, c = x.value.shape
    x = ad.reshape(x, (n, h // 2, 2, w // 2, 2, c))
    x = ad.transpose(x, (0, 1, 3, 2, 4, 5))
    return ad.reshape(x, (n, h // 2, w // 2, 4 * c))


def area_pool(x, k: int):
    x = ad.as_var(x)
    if k == 1:
        return x
    n, h, w, c = x.value.shape
    return ad.reshape(x, (n, h // k, k, w // k, k, c)).mean(axis=(2, 4))


def unpatchify(x, s: int, c: int):
    """Depth-to-space inverse of an ``s x s`` patching."""
    n, h, w, _ = x.value.shape
    x = ad.reshape(x, (n, h, w, s, s, c))
    x = ad.transpose(x, (0, 1, 3, 2, 4, 5))
    return ad.reshape(x, (n, h * s, w * s, c))


def gated(x, params: dict, name: str):
    """Zero-initialised injection: ``gate * (x @ W + b)``."""
    return params[f"{name}_gate"] * ad.affine(x, params[f"{name}_w"], params[f"{name}_b"])


def block(h, cond, params: dict, prefix: str, b: int):
    w = params[f"{prefix}{b}_w"]
    y = ad.affine(patchify2(h), w, params[f"{prefix}{b}_b"])
    bias = ad.matmul(cond, params[f"{prefix}{b}_cw"])
    n, c = bias.value.shape
    return ad.leaky_relu(y + ad.reshape(bias, (n, 1, 1, c)))


def _cond(vec, t, n: int, config: ToyConfig):
    vec = ad.as_var(vec)
    if vec.value.ndim == 1:
        vec = ad.reshape(vec, (1, -1)) + np.zeros((n, 1))
    temb = timestep_embedding(np.broadcast_to(np.asarray(t), (n,)), config.temb_dim)
    return ad.concat([vec, ad.Var(temb)], axis=1)


def _merged(model: DecoupledModel, params: dict | None) -> dict:
    merged = dict(model.frozen)
    merged.update(model.trainable if params is None else params)
    return merged


def backbone_features(z_t, t, c_t, model: DecoupledModel) -> list:
    params = model.frozen
    n = np.shape(getattr(z_t, "value", z_t))[0]
    cond = _cond(c_t, t, n, model.config)
    feats, h = [], z_t
    for b in range(model.config.blocks):
        h = block(h, cond, params, "blk", b)
        feats.append(h)
    return feats


def perspective_embed(c_n, model: DecoupledModel, params: dict | None = None):
    """Fixed average pooling of the perspective image, then a learned projection."""
    p = _merged(model, params)
    x = ad.as_var(c_n)
    if x.value.ndim == 3:
        x = ad.reshape(x, (1,) + x.value.shape)
    n, P, Q, _ = x.value.shape
    if P != Q:
        raise ValueError(f"perspective image must be square, got {Q}x{P}")
    if P % model.config.persp_pool:
        raise ValueError(f"perspective size {P} not divisible into {model.config.persp_pool} cells")
    pooled = area_pool(x, P // model.config.persp_pool)
    return ad.affine(ad.reshape(pooled, (n, -1)), p["pe_w"], p["pe_b"])


def content_encoder(c_p, mask, model: DecoupledModel, params: dict | None = None):
    """Masked panorama and mask pooled to block-0 resolution, then a gated affine map."""
    p = _merged(model, params)
    c_p = np.asarray(c_p, dtype=float)
    m = np.asarray(mask, dtype=float)
    if m.ndim == 2:
        m = np.broadcast_to(m, c_p.shape[:3])
    x = np.concatenate([c_p, m[..., None]], axis=-1)
    h0, w0, _ = model.config.block_shape(0)
    k = c_p.shape[1] // h0
    if c_p.shape[1] != k * h0 or c_p.shape[2] != k * w0:
        raise ValueError(f"partial panorama {c_p.shape[1:3]} does not match block grid {(h0, w0)}")
    pooled = area_pool(x, k)
    return p["ce_gate"] * ad.affine(pooled, p["ce_w"], p["ce_b"])


def content_branch(z_t, t, bundle: ConditioningBundle, model: DecoupledModel,
                   params: dict | None = None) -> list:
    """Per-block ContentNet features; the content encoder enters block 0 only."""
    p = _merged(model, params)
    n = np.shape(getattr(z_t, "value", z_t))[0]
    cond = _cond(perspective_embed(bundle.c_n, model, params), t, n, model.config)
    out = []
    h = block(z_t, cond, p, "cn", 0) + content_encoder(bundle.c_p, bundle.mask, model, params)
    out.append(h)
    for b in range(1, model.config.blocks):
        h = block(h, cond, p, "cn", b)
        out.append(h)
    return out


def distort_embedding(c_d, p: dict):
    x = ad.as_var(c_d.data if isinstance(c_d, DistortionMap) else c_d)
    if x.value.ndim == 3:
        x = ad.reshape(x, (1,) + x.value.shape)
    return ad.leaky_relu(ad.affine(x, p["de_w"], p["de_b"]))


def distort_branch(z_t, t, bundle: ConditioningBundle, model: DecoupledModel,
                   params: dict | None = None) -> list:
    """Per-block DistortNet features with the distortion embedding injected per mode."""
    p = _merged(model, params)
    n = np.shape(getattr(z_t, "value", z_t))[0]
    cond = _cond(bundle.c_t, t, n, model.config)
    de = distort_embedding(bundle.c_d, p)
    if de.value.shape[1:3] != (model.config.latent_h, model.config.latent_w):
        raise ValueError(f"distortion map {de.value.shape[1:3]} does not match the latent grid")
    active = set(model.active_injection_blocks())
    out, h = [], z_t
    for b in range(model.config.blocks):
        h = block(h, cond, p, "dn", b)
        if b in active:
            proj = ad.affine(area_pool(de, 2 ** (b + 1)), p[f"proj{b}_w"], p[f"proj{b}_b"])
            h = h + gated(proj, p, f"dn_inject{b}")
        out.append(h)
    return out


def decode(features: list, z_t, model: DecoupledModel):
    f = model.frozen
    C = model.config.latent_c
    out = ad.affine(z_t, f["dec_skip"], f["dec_b"])
    for b, feat in enumerate(features):
        out = out + unpatchify(ad.matmul(feat, f[f"dec{b}_w"]), 2 ** (b + 1), C)
    return out


def backbone_forward(z_t, t, c_t, model: DecoupledModel):
    return decode(backbone_features(z_t, t, c_t, model), z_t, model)


def forward_fused(z_t, t, bundle: ConditioningBundle, model: DecoupledModel,
                  params: dict | None = None):
    """Noise prediction: backbone features plus gated ContentNet and DistortNet residuals.

    Returns a Var when ``params`` holds Vars, else a numpy array.
    """
    p = _merged(model, params)
    z_t = ad.as_var(z_t)
    cfg = model.config
    if z_t.value.shape[1:] != (cfg.latent_h, cfg.latent_w, cfg.latent_c):
        raise ValueError(f"latent shape {z_t.value.shape[1:]} does not match config")
    base = backbone_features(z_t, t, bundle.c_t, model)
    cn = content_branch(z_t, t, bundle, model, params)
    dn = distort_branch(z_t, t, bundle, model, params)
    fused = [base[b] + gated(cn[b], p, f"fuse_cn{b}") + gated(dn[b], p, f"fuse_dn{b}")
             for b in range(cfg.blocks)]
    out = decode(fused, z_t, model)
    return out if params is not None and any(isinstance(v, ad.Var) for v in params.values()) else out.value


def registration_sweep(model: DecoupledModel, z_t, t, bundle: ConditioningBundle,
                       delta: float = 0.5, tol: float = 0.0) -> list[bool]:
    """For each potential DistortNet injection site, does perturbing its gate change the output?

    Fusion gates are opened to 1 first so branch residuals reach the output.
    """
    probe = model.copy()
    for b in range(model.config.blocks):
        probe.trainable[f"fuse_dn{b}_gate"] = np.ones(())
    reference = forward_fused(z_t, t, bundle, probe)
    changed = []
    for name in probe.injection_sites():
        trial = probe.copy()
        trial.trainable[name] = trial.trainable[name] + delta
        diff = np.max(np.abs(forward_fused(z_t, t, bundle, trial) - reference))
        changed.append(bool(diff > tol))
    return changed
