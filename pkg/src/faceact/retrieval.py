"""Contrastive retrieval evaluator: two trainable encoders in a joint space.

Each encoder is a two-layer tanh MLP whose output is L2-normalized; both are
trained jointly with a symmetric InfoNCE loss, decoupled-weight-decay
adaptive-moment updates, a cosine-annealed learning rate, and early stopping
on validation R-Precision@1. Gradients are closed-form (no autodiff) and are
verified against finite differences in the test suite. Everything is plain
numpy and bitwise deterministic under a fixed seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ConfigError, StructuralError, TrainingError, ValidationError
from .metrics import r_precision_batched
from .util import read_jsonl, write_jsonl

__all__ = [
    "ZScoreStats",
    "zscore_fit",
    "zscore_apply",
    "ZScoreScaler",
    "TrainConfig",
    "EncoderParams",
    "init_encoder",
    "encode",
    "infonce_loss",
    "infonce_loss_and_grad",
    "cosine_lr",
    "AdamW",
    "train_encoders",
    "TrainResult",
    "EpochStats",
    "ContrastiveRetrievalEvaluator",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_FORMAT",
]

CHECKPOINT_FORMAT = "faceact-evaluator/1"


# --- feature standardization ---------------------------------------------------


@dataclass(frozen=True)
class ZScoreStats:
    """Per-dimension mean and standard deviation from the training split."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "std", np.asarray(self.std, dtype=np.float64))


def zscore_fit(train_motion, *, floor: float = 1e-8) -> ZScoreStats:
    """Population mean/std per dimension; degenerate dimensions floored."""
    X = np.asarray(train_motion, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("training features must be a non-empty 2-d array")
    return ZScoreStats(mean=X.mean(axis=0), std=np.maximum(X.std(axis=0), floor))


def zscore_apply(stats: ZScoreStats, v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    return (arr - stats.mean) / stats.std


class ZScoreScaler(BaseEstimator):
    """fit/transform wrapper around the z-score statistics."""

    def __init__(self, floor: float = 1e-8):
        self.floor = floor

    def fit(self, X, y=None):
        stats = zscore_fit(X, floor=self.floor)
        self.mean_ = stats.mean
        self.scale_ = stats.std
        return self

    def transform(self, X):
        if not hasattr(self, "mean_"):
            raise ValidationError("ZScoreScaler is not fitted")
        return zscore_apply(ZScoreStats(self.mean_, self.scale_), X)

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)


# --- encoders -------------------------------------------------------------------


@dataclass
class EncoderParams:
    """Two affine maps with a tanh between; output is unit-normalized."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    def arrays(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def copy(self) -> "EncoderParams":
        return EncoderParams(*(a.copy() for a in self.arrays()))


def init_encoder(rng: np.random.Generator, input_dim: int, hidden_dim: int, output_dim: int) -> EncoderParams:
    s1 = math.sqrt(2.0 / (input_dim + hidden_dim))
    s2 = math.sqrt(2.0 / (hidden_dim + output_dim))
    return EncoderParams(
        w1=rng.normal(0.0, s1, size=(input_dim, hidden_dim)),
        b1=np.zeros(hidden_dim),
        w2=rng.normal(0.0, s2, size=(hidden_dim, output_dim)),
        b2=np.zeros(output_dim),
    )


def _forward(params: EncoderParams, X: np.ndarray):
    H1 = X @ params.w1 + params.b1
    Z = np.tanh(H1)
    H2 = Z @ params.w2 + params.b2
    norms = np.maximum(np.linalg.norm(H2, axis=1, keepdims=True), 1e-30)
    Y = H2 / norms
    return Y, (X, Z, norms, Y)


def _backward(params: EncoderParams, cache, dY: np.ndarray) -> list[np.ndarray]:
    X, Z, norms, Y = cache
    dH2 = (dY - Y * np.sum(dY * Y, axis=1, keepdims=True)) / norms
    dw2 = Z.T @ dH2
    db2 = dH2.sum(axis=0)
    dZ = dH2 @ params.w2.T
    dH1 = dZ * (1.0 - Z * Z)
    dw1 = X.T @ dH1
    db1 = dH1.sum(axis=0)
    return [dw1, db1, dw2, db2]


def encode(params: EncoderParams, X) -> np.ndarray:
    """Apply an encoder; rows come back unit-normalized."""
    arr = np.asarray(X, dtype=np.float64)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr.reshape(1, -1)
    if arr.shape[1] != params.input_dim:
        raise StructuralError(
            f"encoder expects {params.input_dim} features, got {arr.shape[1]}"
        )
    Y, _ = _forward(params, arr)
    return Y[0] if squeeze else Y


# --- symmetric InfoNCE ----------------------------------------------------------


def _check_batch(img, mot) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(img, dtype=np.float64)
    b = np.asarray(mot, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape != b.shape:
        raise StructuralError("embedding batches must be 2-d and equal shape")
    if a.shape[0] < 2:
        raise ValidationError("InfoNCE needs a batch of at least 2")
    return a, b


def _log_softmax(logits: np.ndarray, axis: int) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def infonce_loss(img, mot, tau: float = 0.07) -> float:
    """Symmetric InfoNCE over one batch of matched embedding rows.

    Rows are treated as given (callers normalize); similarities are plain
    dot products and the log-sum-exp is max-shifted.
    """
    a, b = _check_batch(img, mot)
    if tau <= 0:
        raise ValidationError("temperature must be positive")
    logits = (a @ b.T) / tau
    diag = np.arange(a.shape[0])
    row = -_log_softmax(logits, axis=1)[diag, diag]
    col = -_log_softmax(logits, axis=0)[diag, diag]
    return float(0.5 * (row.mean() + col.mean()))


def _softmax(logits: np.ndarray, axis: int) -> np.ndarray:
    shifted = np.exp(logits - logits.max(axis=axis, keepdims=True))
    return shifted / shifted.sum(axis=axis, keepdims=True)


def infonce_loss_and_grad(img, mot, tau: float = 0.07):
    """Loss plus analytic gradients with respect to both embedding batches."""
    a, b = _check_batch(img, mot)
    if tau <= 0:
        raise ValidationError("temperature must be positive")
    n = a.shape[0]
    logits = (a @ b.T) / tau
    diag = np.arange(n)
    p_row = _softmax(logits, axis=1)
    p_col = _softmax(logits, axis=0)
    row = -_log_softmax(logits, axis=1)[diag, diag]
    col = -_log_softmax(logits, axis=0)[diag, diag]
    loss = float(0.5 * (row.mean() + col.mean()))
    dS = (p_row + p_col) / (2.0 * n * tau)
    dS[diag, diag] -= 1.0 / (n * tau)
    return loss, dS @ b, dS.T @ a


# --- optimization ---------------------------------------------------------------


def cosine_lr(base: float, epoch: int, max_epochs: int) -> float:
    """Cosine annealing from ``base`` at epoch 0 to zero at ``max_epochs``."""
    if max_epochs <= 0:
        raise ValidationError("max_epochs must be positive")
    return base * 0.5 * (1.0 + math.cos(math.pi * min(epoch, max_epochs) / max_epochs))


class AdamW:
    """Decoupled-weight-decay adaptive moments over a flat parameter list."""

    def __init__(self, params: list[np.ndarray], weight_decay: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray], lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            mhat = m / bc1
            vhat = v / bc2
            p -= lr * (mhat / (np.sqrt(vhat) + self.eps) + self.weight_decay * p)


# --- training -------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    temperature: float = 0.07
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    max_epochs: int = 1000
    patience: int = 10
    batch_size: int = 32
    seed: int = 42
    hidden_dim: int = 256
    output_dim: int = 256
    eval_batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValidationError("temperature must be positive")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.max_epochs <= 0 or self.patience <= 0:
            raise ValidationError("max_epochs and patience must be positive")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    lr: float
    train_loss: float
    val_rp1: float


@dataclass(frozen=True)
class TrainResult:
    image_encoder: EncoderParams
    motion_encoder: EncoderParams
    history: tuple[EpochStats, ...]
    best_epoch: int
    best_val_rp1: float


def train_encoders(train_img, train_mot, val_img, val_mot, cfg: TrainConfig | None = None) -> TrainResult:
    """Train both encoders; returns the best-validation checkpoint.

    Motion features are expected already standardized with train-split
    statistics. Deterministic under the configured seed: initialization,
    batch order, and evaluation batching all derive from it.
    """
    cfg = cfg or TrainConfig()
    Xi = np.asarray(train_img, dtype=np.float64)
    Xm = np.asarray(train_mot, dtype=np.float64)
    Vi = np.asarray(val_img, dtype=np.float64)
    Vm = np.asarray(val_mot, dtype=np.float64)
    for name, arr in (("train_img", Xi), ("train_mot", Xm), ("val_img", Vi), ("val_mot", Vm)):
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ValidationError(f"{name} must be a non-empty 2-d array")
    if Xi.shape[0] != Xm.shape[0] or Vi.shape[0] != Vm.shape[0]:
        raise StructuralError("image and motion sides are misaligned")

    rng = np.random.default_rng(cfg.seed)
    img_enc = init_encoder(rng, Xi.shape[1], cfg.hidden_dim, cfg.output_dim)
    mot_enc = init_encoder(rng, Xm.shape[1], cfg.hidden_dim, cfg.output_dim)
    params = img_enc.arrays() + mot_enc.arrays()
    opt = AdamW(params, weight_decay=cfg.weight_decay, beta1=cfg.beta1,
                beta2=cfg.beta2, eps=cfg.eps)

    history: list[EpochStats] = []
    best_rp1 = -math.inf
    best_epoch = -1
    best_img = img_enc.copy()
    best_mot = mot_enc.copy()
    stale = 0
    n = Xi.shape[0]
    for epoch in range(cfg.max_epochs):
        lr = cosine_lr(cfg.learning_rate, epoch, cfg.max_epochs)
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if idx.size < 2:
                continue
            yi, cache_i = _forward(img_enc, Xi[idx])
            ym, cache_m = _forward(mot_enc, Xm[idx])
            loss, d_yi, d_ym = infonce_loss_and_grad(yi, ym, cfg.temperature)
            if not math.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch start {start}"
                )
            grads = _backward(img_enc, cache_i, d_yi) + _backward(mot_enc, cache_m, d_ym)
            opt.step(grads, lr)
            losses.append(loss)
        val_rp1 = r_precision_batched(
            encode(img_enc, Vi),
            encode(mot_enc, Vm),
            ks=(1,),
            batch_size=cfg.eval_batch_size,
            seed=cfg.seed,
        )[1]
        history.append(
            EpochStats(epoch=epoch, lr=lr, train_loss=float(np.mean(losses)), val_rp1=val_rp1)
        )
        if val_rp1 > best_rp1:
            best_rp1 = val_rp1
            best_epoch = epoch
            best_img = img_enc.copy()
            best_mot = mot_enc.copy()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return TrainResult(
        image_encoder=best_img,
        motion_encoder=best_mot,
        history=tuple(history),
        best_epoch=best_epoch,
        best_val_rp1=best_rp1,
    )


# --- estimator + checkpointing --------------------------------------------------


class ContrastiveRetrievalEvaluator(BaseEstimator):
    """Estimator wrapper: fit on matched (description embedding, motion) pairs.

    ``X`` carries the image-side description embeddings, ``y`` the raw
    motion features; z-score standardization of the motion side is fitted
    here and stored with the checkpoint.
    """

    def __init__(
        self,
        hidden_dim: int = 256,
        output_dim: int = 256,
        temperature: float = 0.07,
        learning_rate: float = 1e-4,
        weight_decay: float = 1e-4,
        max_epochs: int = 1000,
        patience: int = 10,
        batch_size: int = 32,
        seed: int = 42,
        eval_batch_size: int = 32,
        std_floor: float = 1e-8,
    ):
        self.hidden_dim = hidden_dim
        self.output_dim = output_dim
        self.temperature = temperature
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.max_epochs = max_epochs
        self.patience = patience
        self.batch_size = batch_size
        self.seed = seed
        self.eval_batch_size = eval_batch_size
        self.std_floor = std_floor

    def _config(self) -> TrainConfig:
        return TrainConfig(
            temperature=self.temperature,
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            max_epochs=self.max_epochs,
            patience=self.patience,
            batch_size=self.batch_size,
            seed=self.seed,
            hidden_dim=self.hidden_dim,
            output_dim=self.output_dim,
            eval_batch_size=self.eval_batch_size,
        )

    def fit(self, X, y, X_val=None, y_val=None):
        if X_val is None or y_val is None:
            raise ConfigError("fit requires a validation split (X_val, y_val)")
        self.zscore_ = zscore_fit(np.asarray(y, dtype=np.float64), floor=self.std_floor)
        result = train_encoders(
            X,
            zscore_apply(self.zscore_, y),
            X_val,
            zscore_apply(self.zscore_, y_val),
            self._config(),
        )
        self.image_encoder_ = result.image_encoder
        self.motion_encoder_ = result.motion_encoder
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.best_val_rp1_ = result.best_val_rp1
        return self

    def _check_fitted(self):
        if not hasattr(self, "image_encoder_"):
            raise ValidationError("evaluator is not fitted")

    def embed_image(self, X) -> np.ndarray:
        self._check_fitted()
        return encode(self.image_encoder_, X)

    def embed_motion(self, X) -> np.ndarray:
        self._check_fitted()
        return encode(self.motion_encoder_, zscore_apply(self.zscore_, X))

    def save(self, path) -> None:
        self._check_fitted()
        save_checkpoint(path, self)

    @classmethod
    def load(cls, path) -> "ContrastiveRetrievalEvaluator":
        return load_checkpoint(path)


def _encoder_to_json(enc: EncoderParams) -> dict:
    return {
        "w1": enc.w1.tolist(),
        "b1": enc.b1.tolist(),
        "w2": enc.w2.tolist(),
        "b2": enc.b2.tolist(),
    }


def _encoder_from_json(doc: dict) -> EncoderParams:
    return EncoderParams(
        w1=np.asarray(doc["w1"], dtype=np.float64),
        b1=np.asarray(doc["b1"], dtype=np.float64),
        w2=np.asarray(doc["w2"], dtype=np.float64),
        b2=np.asarray(doc["b2"], dtype=np.float64),
    )


def save_checkpoint(path, evaluator: ContrastiveRetrievalEvaluator) -> None:
    """Versioned text dump; reloading reproduces embeddings bitwise.

    Floats are serialized with shortest round-trip repr, so the parsed
    values are bit-identical to the trained weights.
    """
    doc = {
        "format": CHECKPOINT_FORMAT,
        "params": evaluator.get_params(),
        "zscore": {
            "mean": evaluator.zscore_.mean.tolist(),
            "std": evaluator.zscore_.std.tolist(),
        },
        "image_encoder": _encoder_to_json(evaluator.image_encoder_),
        "motion_encoder": _encoder_to_json(evaluator.motion_encoder_),
        "best_epoch": evaluator.best_epoch_,
        "best_val_rp1": evaluator.best_val_rp1_,
    }
    from .util import atomic_write_text

    atomic_write_text(path, json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def read_embeddings(path) -> dict[str, np.ndarray]:
    """Line-delimited (id, vector) records keyed by id."""
    _, docs = read_jsonl(path)
    out = {}
    for doc in docs:
        out[doc["id"]] = np.asarray(doc["vector"], dtype=np.float64)
    return out


def write_embeddings(path, embeddings: dict, meta: dict | None = None) -> None:
    write_jsonl(
        path,
        (
            {"id": key, "vector": np.asarray(vec, dtype=np.float64).tolist()}
            for key, vec in embeddings.items()
        ),
        meta,
    )


def load_checkpoint(path) -> ContrastiveRetrievalEvaluator:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValidationError(f"unsupported checkpoint format: {doc.get('format')!r}")
    evaluator = ContrastiveRetrievalEvaluator(**doc["params"])
    evaluator.zscore_ = ZScoreStats(
        mean=np.asarray(doc["zscore"]["mean"], dtype=np.float64),
        std=np.asarray(doc["zscore"]["std"], dtype=np.float64),
    )
    evaluator.image_encoder_ = _encoder_from_json(doc["image_encoder"])
    evaluator.motion_encoder_ = _encoder_from_json(doc["motion_encoder"])
    evaluator.history_ = ()
    evaluator.best_epoch_ = doc.get("best_epoch", -1)
    evaluator.best_val_rp1_ = doc.get("best_val_rp1", float("nan"))
    return evaluator
