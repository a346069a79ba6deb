"""Fréchet-distance metrics, Inception Score and cosine similarity matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics.linalg import matrix_sqrt_psd

UNIT_TOL = 1e-6


@dataclass(frozen=True)
class GaussianStats:
    mean: np.ndarray
    covariance: np.ndarray
    n: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def gaussian_stats(features) -> GaussianStats:
    """Sample mean and unbiased (n - 1) covariance of an ``(n, d)`` feature set."""
    X = np.asarray(features, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"features must be (n, d), got shape {X.shape}")
    n = X.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain non-finite values")
    mu = X.mean(axis=0)
    centered = X - mu
    cov = centered.T @ centered / (n - 1)
    return GaussianStats(mu, 0.5 * (cov + cov.T), n)


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """``|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2))``.

    The cross term uses the symmetric form ``Tr sqrt(R S_b R)`` with
    ``R = sqrt(S_a)``, which has the same trace as ``sqrt(S_a S_b)``.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    diff = a.mean - b.mean
    root_a = matrix_sqrt_psd(a.covariance)
    inner = root_a @ b.covariance @ root_a
    cross = matrix_sqrt_psd(0.5 * (inner + inner.T))
    value = float(diff @ diff + np.trace(a.covariance) + np.trace(b.covariance)
                  - 2.0 * np.trace(cross))
    # the distance is non-negative; a negative value is cancellation round-off
    return max(value, 0.0)


def fid_from_features(gen, ref) -> float:
    return frechet_distance(gaussian_stats(gen), gaussian_stats(ref))


def distort_fid(gen_features, ref_features, gen_extractor: bytes | None = None,
                ref_extractor: bytes | None = None) -> float:
    """Fréchet distance between two feature sets from one distortion-aware extractor.

    When both extractor hashes are given they must match.
    """
    if gen_extractor is not None and ref_extractor is not None and gen_extractor != ref_extractor:
        raise ExtractorMismatch(gen_extractor, ref_extractor)
    return fid_from_features(gen_features, ref_features)


class ExtractorMismatch(ValueError):
    def __init__(self, gen: bytes, ref: bytes):
        super().__init__(f"feature sets come from different extractors "
                         f"({gen.hex()[:16]}... vs {ref.hex()[:16]}...)")


def inception_score(probs, splits: int = 1):
    """Mean and standard deviation of ``exp(E[KL(p(y|x) || p(y))])`` over splits."""
    p = np.asarray(probs, dtype=float)
    if p.ndim != 2:
        raise ValueError(f"probs must be (n, k), got shape {p.shape}")
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-6):
        raise ValueError("every row must be a probability vector")
    n = p.shape[0]
    if splits < 1 or n % splits:
        raise ValueError(f"n={n} is not divisible by splits={splits}")
    scores = []
    for part in np.split(p, splits):
        marginal = part.mean(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(part > 0, part * (np.log(part) - np.log(marginal)), 0.0)
        scores.append(np.exp(terms.sum(axis=1).mean()))
    scores = np.array(scores)
    return float(scores.mean()), float(scores.std())


def _check_unit_rows(X: np.ndarray, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    norms = np.linalg.norm(X, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise ValueError(f"{name} rows are not L2-normalized")
    return X


def similarity_matrix(X, Y) -> np.ndarray:
    """Cosine similarities of unit rows, entry (i, j) = X[i] . Y[j]."""
    X = _check_unit_rows(X, "X")
    Y = _check_unit_rows(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    return X @ Y.T
