"""Distortion-aware contrastive encoder: label matrices, losses and training.

The image encoder is a patch-affine map (8x8 patches, shared weights) followed
by a leaky rectifier, an average over patch columns, a dense affine layer and
L2 normalization. Averaging over columns makes the features invariant to
azimuthal shifts of a panorama, while keeping per-row (elevation) structure,
which is where equirectangular distortion lives. The text side
is a three-row embedding table, one unit row per distortion class, in the order
of :data:`panometric.corpus.CLASSES`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .corpus import CLASSES
from .fileio import decode_params, encode_params
from .numerics import autodiff as ad

logger = logging.getLogger(__name__)

PATCH = 8
HIDDEN = 32
EMBED_DIM = 16
UNIT_TOL = 1e-6
PROMPTS = ("A panorama image", "A perspective image", "A random distortion image")
PARAM_NAMES = ("patch_w", "patch_b", "dense_w", "dense_b", "text")


@dataclass
class LabelMatrix:
    labels: np.ndarray
    mask: np.ndarray

    @property
    def count(self) -> int:
        return int(self.mask.sum())


def label_matrix(types_a, types_b, exclude_diagonal: bool = False) -> LabelMatrix:
    """``labels[i, j] = 1`` when ``types_a[i] == types_b[j]``; mask drops the diagonal if asked."""
    a = np.asarray(types_a)
    b = np.asarray(types_b)
    if a.size == 0 or b.size == 0:
        raise ValueError("type lists must be non-empty")
    labels = (a[:, None] == b[None, :]).astype(float)
    mask = np.ones_like(labels, dtype=bool)
    if exclude_diagonal:
        np.fill_diagonal(mask, False)
    return LabelMatrix(labels, mask)


def _check_unit(x, name: str):
    v = np.asarray(getattr(x, "value", x))
    if v.ndim != 2:
        raise ValueError(f"{name} must be (n, d)")
    if np.any(np.abs(np.linalg.norm(v, axis=1) - 1.0) > UNIT_TOL):
        raise ValueError(f"{name} rows are not unit-normalized")


def _squared_error(S, lm: LabelMatrix, denom: float):
    if isinstance(S, ad.Var):
        resid = (S - lm.labels) * lm.mask.astype(float)
        return ad.square(resid).sum() * (1.0 / denom)
    resid = (S - lm.labels) * lm.mask
    return float(np.sum(resid * resid) / denom)


def loss_ie(emb, types):
    """Mean squared gap between pairwise image similarities and same-type labels.

    Self-pairs are left out, so the sum runs over ``n (n - 1)`` pairs.
    """
    _check_unit(emb, "embeddings")
    n = np.shape(getattr(emb, "value", emb))[0]
    if n < 2:
        raise ValueError("need at least two embeddings")
    S = emb @ (emb.T if isinstance(emb, ad.Var) else np.transpose(emb))
    return _squared_error(S, label_matrix(types, types, exclude_diagonal=True), n * (n - 1))


def loss_te(img_emb, txt_emb, types, text_types=None):
    """Image/text similarity loss over all ``n x m`` pairs.

    By default ``txt_emb`` row ``j`` is the text embedding of sample ``j``'s
    class (``m = n``). Passing ``text_types`` scores against an arbitrary set
    of text rows instead, e.g. the three class prompts.
    """
    _check_unit(img_emb, "image embeddings")
    _check_unit(txt_emb, "text embeddings")
    n = np.shape(getattr(img_emb, "value", img_emb))[0]
    m = np.shape(getattr(txt_emb, "value", txt_emb))[0]
    if text_types is None:
        if m != n:
            raise ValueError(f"expected {n} text rows, got {m}")
        text_types = types
    T = txt_emb.T if isinstance(txt_emb, ad.Var) else np.transpose(txt_emb)
    S = img_emb @ T
    return _squared_error(S, label_matrix(types, text_types), n * m)


@dataclass
class EncoderParams:
    patch_w: np.ndarray
    patch_b: np.ndarray
    dense_w: np.ndarray
    dense_b: np.ndarray
    text: np.ndarray
    image_shape: tuple = (32, 64)

    @property
    def dim(self) -> int:
        return self.dense_w.shape[1]

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def to_bytes(self) -> bytes:
        tensors = self.tensors()
        tensors["image_shape"] = np.array(self.image_shape, dtype=float)
        return encode_params(tensors)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "EncoderParams":
        tensors, _ = decode_params(blob)
        shape = tuple(int(s) for s in tensors.pop("image_shape"))
        return cls(**tensors, image_shape=shape)

    @property
    def digest(self) -> bytes:
        """Content hash identifying this extractor in feature files."""
        return decode_params(self.to_bytes())[1]


def init_encoder(seed: int, H: int = 32, W: int = 64, hidden: int = HIDDEN,
                 dim: int = EMBED_DIM) -> EncoderParams:
    if H % PATCH or W % PATCH:
        raise ValueError(f"image size {W}x{H} must be a multiple of {PATCH}")
    rng = np.random.default_rng(seed)
    fan_in = PATCH * PATCH * 3
    rows = H // PATCH
    text = rng.normal(size=(len(CLASSES), dim))
    return EncoderParams(
        patch_w=rng.normal(scale=np.sqrt(2.0 / fan_in), size=(fan_in, hidden)),
        patch_b=np.zeros(hidden),
        dense_w=rng.normal(scale=np.sqrt(2.0 / (rows * hidden)), size=(rows * hidden, dim)),
        dense_b=np.zeros(dim),
        text=text / np.linalg.norm(text, axis=1, keepdims=True),
        image_shape=(H, W),
    )


def patchify(images, size: int = PATCH):
    """``(n, H, W, C)`` to ``(n, patches, size*size*C)``; differentiable for Vars."""
    x = ad.as_var(images)
    n, H, W, C = x.value.shape
    x = ad.reshape(x, (n, H // size, size, W // size, size, C))
    x = ad.transpose(x, (0, 1, 3, 2, 4, 5))
    return ad.reshape(x, (n, (H // size) * (W // size), size * size * C))


def encode_images(images, patch_w, patch_b, dense_w, dense_b):
    """Unit embeddings for a batch of images; every argument may be a Var."""
    x = ad.as_var(images)
    n, H, W = x.value.shape[:3]
    p = patchify(x - 0.5)
    h = ad.leaky_relu(ad.affine(p, patch_w, patch_b))
    h = ad.reshape(h, (n, H // PATCH, W // PATCH, -1)).mean(axis=2)
    return ad.l2_normalize(ad.affine(ad.reshape(h, (n, -1)), dense_w, dense_b))


def embed(params: EncoderParams, images) -> np.ndarray:
    images = np.asarray(images, dtype=float)
    if images.shape[1:3] != tuple(params.image_shape):
        raise ValueError(f"encoder expects {params.image_shape} images, got {images.shape[1:3]}")
    return encode_images(images, params.patch_w, params.patch_b, params.dense_w, params.dense_b).value


def class_probabilities(params: EncoderParams, images, temperature: float = 0.1) -> np.ndarray:
    """Softmax over cosine similarity to the three class text rows."""
    logits = embed(params, images) @ params.text.T / temperature
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    return p / p.sum(axis=1, keepdims=True)


def classify(params: EncoderParams, images) -> np.ndarray:
    return np.argmax(embed(params, images) @ params.text.T, axis=1)


@dataclass
class SimilarityReport:
    intra: float
    inter: float
    class_means: np.ndarray
    text_means: np.ndarray

    def rows(self):
        yield ("intra_class_mean", self.intra)
        yield ("inter_class_mean", self.inter)
        for a, ca in enumerate(CLASSES):
            for b, cb in enumerate(CLASSES):
                yield (f"image_{ca}-image_{cb}", float(self.class_means[a, b]))
        for a, ca in enumerate(CLASSES):
            for b, cb in enumerate(CLASSES):
                yield (f"image_{ca}-text_{cb}", float(self.text_means[a, b]))


def similarity_report(params: EncoderParams, images, types) -> SimilarityReport:
    """Mean pairwise cosine similarity within and across classes, self-pairs excluded."""
    emb = embed(params, images)
    types = np.asarray(types)
    S = emb @ emb.T
    lm = label_matrix(types, types, exclude_diagonal=True)
    same = lm.mask & (lm.labels == 1)
    diff = lm.mask & (lm.labels == 0)
    k = len(CLASSES)
    class_means = np.full((k, k), np.nan)
    text_means = np.full((k, k), np.nan)
    T = emb @ params.text.T
    for a in range(k):
        ia = types == a
        if not ia.any():
            continue
        text_means[a] = T[ia].mean(axis=0)
        for b in range(k):
            block = lm.mask[np.ix_(ia, types == b)]
            if block.any():
                class_means[a, b] = S[np.ix_(ia, types == b)][block].mean()
    return SimilarityReport(float(S[same].mean()) if same.any() else float("nan"),
                            float(S[diff].mean()) if diff.any() else float("nan"),
                            class_means, text_means)


@dataclass
class TrainConfig:
    seed: int = 0
    steps: int = 2000
    lr: float = 0.2
    three_column_text: bool = False
    log_every: int = 0


@dataclass
class TrainResult:
    params: EncoderParams
    report: SimilarityReport
    losses: list = field(default_factory=list)


class DivergenceError(FloatingPointError):
    def __init__(self, step: int):
        super().__init__(f"training diverged (non-finite loss) at step {step}")
        self.step = step


def contrastive_objective(vars_, images, types, three_column: bool = False):
    """Image-image plus image-text loss with the image side detached for the text term.

    Returns ``(total, loss_ie, loss_te)`` as Vars.
    """
    patch_w, patch_b, dense_w, dense_b, text = vars_
    emb = encode_images(images, patch_w, patch_b, dense_w, dense_b)
    l_ie = loss_ie(emb, types)
    frozen = ad.stop_gradient(emb)
    if three_column:
        l_te = loss_te(frozen, text, types, text_types=np.arange(len(CLASSES)))
    else:
        l_te = loss_te(frozen, text[np.asarray(types)], types)
    return l_te + l_ie, l_ie, l_te


def train_distort_encoder(images, types, config: TrainConfig | None = None,
                          init: EncoderParams | None = None) -> TrainResult:
    """Plain gradient descent on the combined contrastive loss.

    Text rows are renormalized to unit length after every step.
    """
    config = config or TrainConfig()
    images = np.asarray(images, dtype=float)
    types = np.asarray(types)
    params = init or init_encoder(config.seed, *images.shape[1:3])
    values = [getattr(params, name).copy() for name in PARAM_NAMES]
    losses = []
    for step in range(config.steps):
        tape = ad.Tape()
        vars_ = [tape.param(v) for v in values]
        total, _, _ = contrastive_objective(vars_, images, types, config.three_column_text)
        loss = float(total.value)
        if not np.isfinite(loss):
            raise DivergenceError(step)
        losses.append(loss)
        tape.backward(total)
        for v, var in zip(values, vars_):
            v -= config.lr * var.grad
        values[4] /= np.linalg.norm(values[4], axis=1, keepdims=True)
        if config.log_every and step % config.log_every == 0:
            logger.info("step %d loss %.6f", step, loss)
    trained = EncoderParams(*values, image_shape=params.image_shape)
    return TrainResult(trained, similarity_report(trained, images, types), losses)
