"""
Toy decoupled denoiser: first-block vs all-block registration
=============================================================

Train the toy three-branch denoiser in both registration modes and compare
loss curves and distortion-probe scores. Takes about a minute.
"""

# %%
import numpy as np

from panometric import decoupled_net as dn
from panometric.toynet import ToyTrainConfig, train_probe_encoder, train_toynet

# %% The probe encoder sees images passed through the latent codec.
encoder = train_probe_encoder(seed=1)

# %%
for mode in dn.MODES:
    res = train_toynet(ToyTrainConfig(mode=mode, seed=1, steps=200), encoder)
    curve = np.array([h["eval_total"] for h in res.history])
    print(f"{mode}: loss {curve[0]:.3f} -> {curve[-1]:.3f} "
          f"({1 - curve[-1] / curve[0]:.0%} drop), probe {res.probe_score:.3f}")
