"""
Frechet distance and Inception Score
====================================

Closed-form checks of the Frechet distance and the Inception Score on
synthetic features.
"""

# %%
import numpy as np

from panometric.metrics import GaussianStats, fid_from_features, frechet_distance, inception_score

# %% Two diagonal Gaussians: (2 - 1)^2 + (3 - 1)^2 = 5.
a = GaussianStats(np.zeros(2), np.diag([4.0, 9.0]), 2)
b = GaussianStats(np.zeros(2), np.eye(2), 2)
print("diagonal example", frechet_distance(a, b))

# %% FID grows as one feature cloud drifts away from the other.
rng = np.random.default_rng(0)
X = rng.normal(size=(500, 8))
for shift in (0.0, 0.5, 1.0, 2.0):
    print(f"shift {shift:.1f}: FID {fid_from_features(X, rng.normal(size=(500, 8)) + shift):.3f}")

# %% Confident, evenly spread predictions score the number of classes.
probs = np.eye(3)[np.arange(300) % 3] * 0.98 + 0.02 / 3
print("IS of near one-hot predictions", inception_score(probs, splits=3))
print("IS of uniform predictions", inception_score(np.full((300, 3), 1 / 3)))
