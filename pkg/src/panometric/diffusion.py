"""DDPM noise-schedule algebra and the denoiser training losses.

The loss functions accept plain arrays or tape :class:`~panometric.numerics.Var`
values, so the same code scores a batch and trains a model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import autodiff as ad

DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02
DEFAULT_LAMBDA = 0.05


@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def T(self) -> int:
        return len(self.beta)

    def check_t(self, t):
        t = np.asarray(t)
        if t.dtype.kind not in "iu" and not np.all(t == np.floor(t)):
            raise ValueError(f"timestep must be an integer, got {t}")
        t = t.astype(np.int64)
        if np.any(t < 0) or np.any(t >= self.T):
            raise ValueError(f"timestep {t} outside [0, {self.T})")
        return t

    def coefficient(self, t, ndim: int) -> np.ndarray:
        """``alpha_bar[t]`` shaped to broadcast over a batch of ``ndim``-dim arrays.

        A scalar ``t`` applies to everything; a 1-D ``t`` gives one step per
        leading-axis entry.
        """
        t = self.check_t(t)
        ab = self.alpha_bar[t]
        if t.ndim == 0:
            return ab
        return ab.reshape((-1,) + (1,) * (ndim - 1))


def schedule_from_betas(beta) -> NoiseSchedule:
    beta = np.asarray(beta, dtype=float)
    if beta.ndim != 1 or beta.size == 0:
        raise ValueError("beta must be a non-empty 1-D sequence")
    if np.any(beta <= 0) or np.any(beta >= 1):
        raise ValueError("every beta must lie in (0, 1)")
    alpha = 1.0 - beta
    return NoiseSchedule(beta, alpha, np.cumprod(alpha))


def make_schedule(T: int = DEFAULT_T, beta_start: float = DEFAULT_BETA_START,
                  beta_end: float = DEFAULT_BETA_END) -> NoiseSchedule:
    """Linear beta ramp from ``beta_start`` to ``beta_end`` over ``T`` steps."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not 0 < beta_start <= beta_end < 1:
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    return schedule_from_betas(np.linspace(beta_start, beta_end, T))


def _shapes_match(a, b, what: str):
    if np.shape(getattr(a, "value", a)) != np.shape(getattr(b, "value", b)):
        raise ValueError(f"{what}: shape mismatch {np.shape(getattr(a, 'value', a))} "
                         f"vs {np.shape(getattr(b, 'value', b))}")


def _ndim(x) -> int:
    return np.ndim(getattr(x, "value", x))


def add_noise(z0, eps, t, sched: NoiseSchedule):
    """Forward process: ``sqrt(ab_t) z0 + sqrt(1 - ab_t) eps``."""
    _shapes_match(z0, eps, "add_noise")
    ab = sched.coefficient(t, _ndim(z0))
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def recover_z0(z_t, eps, t, sched: NoiseSchedule):
    """Clean latent implied by a noised latent and a noise estimate."""
    _shapes_match(z_t, eps, "recover_z0")
    ab = sched.coefficient(t, _ndim(z_t))
    if np.any(ab <= 0):
        raise ValueError(f"alpha_bar[{t}] is zero")
    return (z_t - np.sqrt(1.0 - ab) * eps) * (1.0 / np.sqrt(ab))


def loss_rec(eps_true, eps_pred):
    """Mean squared error between true and predicted noise."""
    _shapes_match(eps_true, eps_pred, "loss_rec")
    diff = eps_true - eps_pred
    if isinstance(diff, ad.Var):
        return ad.square(diff).mean()
    return float(np.mean(diff * diff))


def _unit(x, name: str):
    v = np.asarray(getattr(x, "value", x))
    if np.any(np.abs(np.linalg.norm(v, axis=-1) - 1.0) > 1e-6):
        raise ValueError(f"{name} must be unit-normalized")


def loss_dist(x_feature, text_embs):
    """``x.z_P - x.z_N - x.z_R`` for a unit image feature and the three class texts.

    ``text_embs`` rows are ordered (panorama, perspective, random). A batch of
    features ``(n, d)`` gives the batch mean.
    """
    _unit(x_feature, "x_feature")
    z = np.asarray(getattr(text_embs, "value", text_embs), dtype=float)
    if z.shape[0] != 3:
        raise ValueError(f"expected 3 text embeddings, got {z.shape[0]}")
    _unit(z, "text_embs")
    signs = np.array([1.0, -1.0, -1.0])
    direction = signs @ z
    if isinstance(x_feature, ad.Var) or isinstance(text_embs, ad.Var):
        zv = ad.as_var(text_embs)
        d = ad.matmul(ad.Var(signs[None, :]), zv).reshape(-1)
        per = ad.dot(x_feature, d)
        return per.mean() if per.value.ndim else per
    return float(np.mean(np.asarray(x_feature) @ direction))


def total_loss(eps_true, eps_pred, x_feature, text_embs, lam: float = DEFAULT_LAMBDA):
    """Reconstruction loss minus ``lam`` times the distortion correction term."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return loss_rec(eps_true, eps_pred) - lam * loss_dist(x_feature, text_embs)
