"""Fast invariant checks run by ``panometric selfcheck``.

Each check returns ``(passed, detail)``; none takes more than a second or so.
"""

from __future__ import annotations

import numpy as np

from . import contrastive as ctr
from . import decoupled_net as dn
from .corpus import SceneSpec, render_panorama
from .diffusion import add_noise, loss_dist, make_schedule, recover_z0, total_loss
from .geometry import build_distortion_map, pixel_to_sphere, sphere_to_pixel
from .metrics import GaussianStats, fid_from_features, frechet_distance
from .numerics import autodiff as ad
from .numerics import grad_check
from .projection import ViewSpec, equirect_to_perspective, make_nfov_mask, perspective_to_equirect


def distortion_map_unit_and_seam():
    d = build_distortion_map(512, 256).data
    unit = max(np.max(np.abs(d[..., 0] ** 2 + d[..., 1] ** 2 - 1)),
               np.max(np.abs(d[..., 2] ** 2 + d[..., 3] ** 2 - 1)))
    seam = np.max(np.abs(d[:, 0, :2] - np.array([np.sin(np.pi), np.cos(np.pi)])))
    return unit < 1e-12 and seam < 1e-12, f"unit {unit:.1e}, seam {seam:.1e}"


def pixel_sphere_round_trip():
    W, H = 64, 32
    j, i = np.mgrid[0:H, 0:W]
    x, y = sphere_to_pixel(pixel_to_sphere(i, j, W, H), W, H)
    ok = np.array_equal(x, i) and np.array_equal(y, j)
    return ok, "exact on lattice" if ok else "lattice mismatch"


def projection_round_trip():
    pano = render_panorama(SceneSpec(), 256, 128)
    view = ViewSpec(yaw=0.4, pitch=0.2, out_size=64)
    back, mask = perspective_to_equirect(equirect_to_perspective(pano, view), view, 256, 128)
    mse = np.mean((back[mask] - pano[mask]) ** 2)
    psnr = 10 * np.log10(1.0 / mse)
    same = np.array_equal(mask, make_nfov_mask(view, 256, 128))
    return psnr > 25 and same, f"PSNR {psnr:.1f} dB"


def frechet_identity_and_diagonal():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 4))
    self_d = fid_from_features(X, X)
    a = GaussianStats(np.zeros(2), np.diag([1.0, 4.0]), 2)
    b = GaussianStats(np.array([1.0, 0.0]), np.diag([4.0, 1.0]), 2)
    diag = frechet_distance(a, b)
    return abs(self_d) < 1e-10 and abs(diag - 3.0) < 1e-9, f"FID(X,X) {self_d:.1e}, diagonal {diag:.9f}"


def gradients_match_differences():
    rng = np.random.default_rng(1)
    types = np.array([0, 1, 2, 0])
    images = rng.random((4, 8, 16, 3))
    enc = ctr.init_encoder(0, 8, 16, hidden=3, dim=4)
    # the image-image term only: the text term's image path is cut on purpose
    err = grad_check(lambda v: ctr.loss_ie(ctr.encode_images(images, *v), types),
                     [getattr(enc, k) for k in ctr.PARAM_NAMES[:4]])
    return err < 1e-4, f"relative error {err:.1e}"


def stop_gradient_is_exact():
    rng = np.random.default_rng(2)
    enc = ctr.init_encoder(0, 8, 16, hidden=3, dim=4)
    tape = ad.Tape()
    vars_ = [tape.param(getattr(enc, k)) for k in ctr.PARAM_NAMES]
    _, _, l_te = ctr.contrastive_objective(vars_, rng.random((4, 8, 16, 3)), [0, 1, 2, 0])
    tape.backward(l_te)
    zero = all(not np.any(v.grad) for v in vars_[:4])
    return zero, "image-side gradients bitwise zero" if zero else "nonzero image-side gradient"


def diffusion_round_trip():
    sched = make_schedule()
    rng = np.random.default_rng(3)
    z0, eps = rng.normal(size=(2, 64))
    worst = max(np.max(np.abs(recover_z0(add_noise(z0, eps, t, sched), eps, t, sched) - z0))
                for t in range(sched.T))
    return worst < 1e-10, f"max error {worst:.1e}"


def total_loss_affine_in_lambda():
    rng = np.random.default_rng(4)
    e1, e2 = rng.normal(size=(2, 10))
    x = rng.normal(size=8)
    z = rng.normal(size=(3, 8))
    x /= np.linalg.norm(x)
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    f0, f1, fm = (total_loss(e1, e2, x, z, lam) for lam in (0.0, 1.0, 0.05))
    gap = abs(fm - (f0 + 0.05 * (f1 - f0))) + abs(f0 - f1 - loss_dist(x, z))
    return gap < 1e-12, f"affinity gap {gap:.1e}"


def _toy_inputs(model, n=2, seed=5):
    rng = np.random.default_rng(seed)
    cfg = model.config
    z = rng.normal(size=(n, cfg.latent_h, cfg.latent_w, cfg.latent_c))
    bundle = dn.ConditioningBundle(rng.random((n, cfg.image_h, cfg.image_w, 3)),
                                   rng.random((cfg.image_h, cfg.image_w)) > 0.5,
                                   rng.normal(size=(cfg.latent_h, cfg.latent_w, 4)),
                                   rng.random((n, cfg.persp_size, cfg.persp_size, 3)),
                                   rng.normal(size=cfg.cond_dim))
    return z, bundle


def zero_init_identity():
    model = dn.init_decoupled(seed=0)
    z, bundle = _toy_inputs(model)
    fused = dn.forward_fused(z, 300, bundle, model)
    base = dn.backbone_forward(z, 300, bundle.c_t, model).value
    same = np.array_equal(fused, base)
    return same, "bitwise equal" if same else "differs"


def registration_locality():
    counts = {}
    for mode in dn.MODES:
        model = dn.init_decoupled(seed=0, mode=mode)
        z, bundle = _toy_inputs(model)
        counts[mode] = sum(dn.registration_sweep(model, z, 300, bundle))
    ok = counts[dn.FIRST_BLOCK] == 1 and counts[dn.ALL_BLOCK] == dn.ToyConfig().blocks
    return ok, ", ".join(f"{m}: {c} active" for m, c in counts.items())


CHECKS = [
    ("distortion map unit pairs and seam", distortion_map_unit_and_seam),
    ("pixel/sphere lattice round trip", pixel_sphere_round_trip),
    ("perspective round trip and mask", projection_round_trip),
    ("Frechet identity and diagonal form", frechet_identity_and_diagonal),
    ("contrastive gradients vs differences", gradients_match_differences),
    ("stop-gradient on text loss", stop_gradient_is_exact),
    ("add_noise / recover_z0 round trip", diffusion_round_trip),
    ("total loss affine in lambda", total_loss_affine_in_lambda),
    ("zero-init fusion identity", zero_init_identity),
    ("registration locality", registration_locality),
]


def run_all():
    """``[(name, passed, detail)]`` for every check; exceptions count as failures."""
    out = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # noqa: BLE001 - a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
