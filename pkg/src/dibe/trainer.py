"""Two-layer convolutional segmenter with hand-written backprop and SGD training.

Architecture: 3x3 conv (1 -> hidden) + leaky ReLU, 3x3 conv (hidden -> 1) +
sigmoid, zero "same" padding throughout, so the probability map has the
input's shape. Arrays use the ``(n, h, w)`` layout for images and masks.
"""

from dataclasses import dataclass, field
import csv
import io
import logging
import math
import time

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from . import metrics
from .losses import PROB_CLIP, LossConfig, compute_loss
from .validation import check_image_mask_batch, check_images

logger = logging.getLogger(__name__)

LEAK = 0.01
PARAM_NAMES = ("w1", "b1", "w2", "b2")
LOG_HEADER = ("epoch", "loss", "iou", "pa", "oii", "fp_fn_ratio", "seconds")


class TrainingDiverged(FloatingPointError):
    """Loss or weights became non-finite; ``log`` holds the rows recorded before."""

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


@dataclass
class ToyModel:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    velocity: dict = field(default_factory=dict)

    @classmethod
    def initialize(cls, seed=0, hidden=8, prior=None):
        """He-normal kernels and zero biases.

        With ``prior`` the output bias starts at logit(prior) instead, so the
        untrained model predicts foreground with probability ``prior``.
        """
        rng = np.random.default_rng(seed)
        w1 = rng.normal(0.0, math.sqrt(2.0 / 9), size=(hidden, 3, 3))
        w2 = rng.normal(0.0, math.sqrt(2.0 / (9 * hidden)), size=(hidden, 3, 3))
        b2 = 0.0 if prior is None else math.log(prior / (1.0 - prior))
        return cls(w1, np.zeros(hidden), w2, np.full(1, b2))

    @classmethod
    def zeros(cls, hidden=8, bias=0.0):
        return cls(np.zeros((hidden, 3, 3)), np.zeros(hidden), np.zeros((hidden, 3, 3)), np.full(1, bias))

    @property
    def hidden(self):
        return self.w1.shape[0]

    def params(self):
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self):
        return ToyModel(
            *(getattr(self, n).copy() for n in PARAM_NAMES),
            velocity={k: v.copy() for k, v in self.velocity.items()},
        )

    def check_finite(self):
        for name in PARAM_NAMES:
            if not np.all(np.isfinite(getattr(self, name))):
                raise TrainingDiverged(f"non-finite values in {name}")


def _patches(x):
    """3x3 neighbourhoods of a zero-padded array; adds two trailing axes."""
    pad = [(0, 0)] * (x.ndim - 2) + [(1, 1), (1, 1)]
    return sliding_window_view(np.pad(x, pad), (3, 3), axis=(-2, -1))


def standardize(X):
    """Zero-mean, unit-variance per image (flat images are only centered)."""
    X = X - X.mean(axis=(-2, -1), keepdims=True)
    std = X.std(axis=(-2, -1), keepdims=True)
    return X / np.where(std > 1e-12, std, 1.0)


def _forward_cache(model, X):
    X = standardize(X)
    p1 = _patches(X)  # (n, h, w, 3, 3)
    z1 = np.einsum("nhwij,cij->nchw", p1, model.w1, optimize=True) + model.b1[None, :, None, None]
    a1 = np.where(z1 > 0, z1, LEAK * z1)
    p2 = _patches(a1)  # (n, c, h, w, 3, 3)
    z2 = np.einsum("nchwij,cij->nhw", p2, model.w2, optimize=True) + model.b2[0]
    # clipped here so the sigmoid derivative below never vanishes on saturated pixels
    probs = np.clip(expit(z2), PROB_CLIP, 1.0 - PROB_CLIP)
    return {"p1": p1, "z1": z1, "p2": p2, "probs": probs}


def forward(model, X):
    """Foreground probabilities with the same shape as ``X`` (2-D or batched)."""
    single = np.ndim(X) == 2
    X = check_images(X)
    probs = _forward_cache(model, X)["probs"]
    return probs[0] if single else probs


def _backward_from_cache(model, cache, d_probs):
    probs = cache["probs"]
    d_z2 = d_probs * probs * (1.0 - probs)
    grads = {
        "w2": np.einsum("nhw,nchwij->cij", d_z2, cache["p2"], optimize=True),
        "b2": np.array([d_z2.sum()]),
    }
    n, c, h, w = cache["z1"].shape
    d_a1 = np.zeros((n, c, h + 2, w + 2))
    for i in range(3):
        for j in range(3):
            d_a1[:, :, i : i + h, j : j + w] += model.w2[None, :, i, j, None, None] * d_z2[:, None]
    d_a1 = d_a1[:, :, 1:-1, 1:-1]
    d_z1 = d_a1 * np.where(cache["z1"] > 0, 1.0, LEAK)
    grads["w1"] = np.einsum("nchw,nhwij->cij", d_z1, cache["p1"], optimize=True)
    grads["b1"] = d_z1.sum(axis=(0, 2, 3))
    return grads


def loss_and_grads(model, X, y, loss_config):
    """Batch loss and its gradient w.r.t. every weight and bias."""
    X, y = check_image_mask_batch(X, y)
    cache = _forward_cache(model, X)
    if not np.all(np.isfinite(cache["probs"])):
        raise TrainingDiverged("non-finite model output")
    result = compute_loss(cache["probs"], y, loss_config)
    if not math.isfinite(result.value) or not np.all(np.isfinite(result.grad)):
        raise TrainingDiverged("non-finite loss or loss gradient")
    return result.value, _backward_from_cache(model, cache, result.grad)


def backward(model, X, y, loss_config):
    return loss_and_grads(model, X, y, loss_config)[1]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 8
    epochs: int = 50
    eval_every: int = 5
    seed: int = 0
    hidden: int = 8
    augment: bool = True
    record_time: bool = False
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")


@dataclass(frozen=True)
class LogRow:
    epoch: int
    loss: float
    iou: float
    pa: float
    oii: float
    fp_fn_ratio: float
    seconds: float


class TrainingLog(list):
    """Evaluation rows, one per logged epoch."""

    def append(self, row):
        if self and row.epoch <= self[-1].epoch:
            raise ValueError("epochs must be strictly increasing")
        super().append(row)

    @property
    def final(self):
        return self[-1]

    def first_epoch_where(self, key, threshold):
        """First logged epoch whose ``key`` exceeds ``threshold`` (None if never)."""
        for row in self:
            if getattr(row, key) > threshold:
                return row.epoch
        return None

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(LOG_HEADER)
        for row in self:
            writer.writerow([row.epoch] + [repr(float(getattr(row, k))) for k in LOG_HEADER[1:]])
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(self.to_csv())

    @classmethod
    def read_csv(cls, path):
        log = cls()
        with open(path, encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = tuple(next(reader))
            if header != LOG_HEADER:
                raise ValueError(f"{path}: unexpected header {header}")
            for rec in reader:
                log.append(LogRow(int(rec[0]), *(float(v) for v in rec[1:])))
        return log


def evaluate(model, X, y, threshold=0.5):
    """Hard confusion counts pooled over every pixel of ``X``; returns metric dict."""
    X, y = check_image_mask_batch(X, y)
    counts = predict_counts(model, X, y, threshold)
    out = metrics.summarize(counts)
    out["counts"] = counts
    return out


def predict_counts(model, X, y, threshold=0.5, chunk=32):
    total = metrics.ConfusionCounts(0, 0, 0, 0)
    for start in range(0, len(X), chunk):
        pred = (forward(model, X[start : start + chunk]) >= threshold).astype(np.int8)
        total = total + metrics.confusion_from_masks(pred, y[start : start + chunk])
    return total


def _augment(rng, X, y):
    flips = rng.integers(0, 2, size=(len(X), 2)).astype(bool)
    X, y = X.copy(), y.copy()
    for i, (fh, fv) in enumerate(flips):
        if fh:
            X[i], y[i] = X[i, :, ::-1], y[i, :, ::-1]
        if fv:
            X[i], y[i] = X[i, ::-1], y[i, ::-1]
    return X, y


def sgd_step(model, grads, lr, momentum):
    """v <- momentum*v + g; w <- w - lr*v."""
    for name in PARAM_NAMES:
        v = model.velocity.get(name)
        v = grads[name] if v is None else momentum * v + grads[name]
        model.velocity[name] = v
        setattr(model, name, getattr(model, name) - lr * v)
    model.check_finite()


def train(model, train_set, val_set, cfg):
    """Fit ``model`` in place; returns the TrainingLog.

    ``train_set`` and ``val_set`` are ``(X, y)`` pairs of ``(n, h, w)`` arrays.
    """
    X, y = check_image_mask_batch(*train_set)
    Xv, yv = check_image_mask_batch(*val_set)
    rng = np.random.default_rng([cfg.seed, 1])
    log = TrainingLog()
    start = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(X))
        losses = []
        for b in range(0, len(X), cfg.batch_size):
            idx = order[b : b + cfg.batch_size]
            xb, yb = X[idx], y[idx]
            if cfg.augment:
                xb, yb = _augment(rng, xb, yb)
            try:
                value, grads = loss_and_grads(model, xb, yb, cfg.loss)
                sgd_step(model, grads, cfg.lr, cfg.momentum)
            except TrainingDiverged as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}", log) from exc
            losses.append(value)
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            m = evaluate(model, Xv, yv)
            seconds = time.perf_counter() - start if cfg.record_time else 0.0
            log.append(
                LogRow(epoch, float(np.mean(losses)), m["iou"], m["pa"], m["oii"], m["fp_fn_ratio"], seconds)
            )
            logger.debug("epoch %d loss %.5f iou %.4f oii %.4f", epoch, log[-1].loss, m["iou"], m["oii"])
    return log
