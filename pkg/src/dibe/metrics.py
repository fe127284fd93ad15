"""Binary confusion counts and the scalar metrics built on them.

All functions are pure. ``oii`` is the output imbalance index: a signed score
in (-1, 1) whose sign says whether false positives (negative) or false
negatives (positive) dominate, scaled by ``k = 1 - IoU/2`` so that the same
FP/FN ratio counts for more when the overlap is poor.
"""

from dataclasses import dataclass
import math

import numpy as np

from .validation import check_mask, check_probs, check_same_shape


class UndefinedRatioError(ZeroDivisionError):
    """FP/FN requested with no false negatives."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: float
    fp: float
    fn: float
    tn: float = 0.0

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn

    def swap(self):
        """Counts with FP and FN exchanged."""
        return ConfusionCounts(self.tp, self.fn, self.fp, self.tn)

    def __add__(self, other):
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )


def confusion_from_masks(pred, truth):
    pred = check_mask(pred, "pred")
    truth = check_mask(truth, "truth")
    check_same_shape(pred, truth)
    p = pred.astype(bool)
    t = truth.astype(bool)
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    return ConfusionCounts(tp, fp, fn, p.size - tp - fp - fn)


def soft_confusion(probs, truth):
    """Probabilistic relaxation of the confusion counts (tp = sum p*y, ...)."""
    probs = check_probs(probs)
    truth = check_mask(truth, "truth")
    check_same_shape(probs, truth, ("probs", "truth"))
    y = truth.astype(np.float64)
    tp = float(np.sum(probs * y))
    fp = float(np.sum(probs * (1.0 - y)))
    fn = float(np.sum((1.0 - probs) * y))
    tn = float(np.sum((1.0 - probs) * (1.0 - y)))
    return ConfusionCounts(tp, fp, fn, tn)


def iou(c):
    """tp / (tp + fp + fn); 1.0 when all three are zero (empty prediction of an empty target)."""
    denom = c.tp + c.fp + c.fn
    if denom == 0:
        return 1.0
    return c.tp / denom


def pixel_accuracy(c):
    """tp / (tp + fp).

    This is the PA used throughout the DIBE experiments; under the usual naming
    it is precision. With no positive predictions it is 1.0 if nothing was
    missed and 0.0 otherwise.
    """
    denom = c.tp + c.fp
    if denom == 0:
        return 1.0 if c.fn == 0 else 0.0
    return c.tp / denom


def fp_fn_ratio(c):
    if c.fn == 0:
        raise UndefinedRatioError("FP/FN is undefined when FN = 0")
    return c.fp / c.fn


def oii_scale(c):
    """The regulating factor k = 1 - IoU/2, always in [0.5, 1]."""
    return 1.0 - iou(c) / 2.0


def oii_from_ratio(x, k):
    """Output imbalance index for an FP/FN ratio ``x`` > 0 and scale ``k``."""
    if x <= 0 or not math.isfinite(x):
        raise ValueError(f"ratio must be finite and > 0, got {x}")
    inv = 1.0 / (x + 1.0 / x - 1.0)
    if x <= 1.0:
        return k * (1.0 - inv)
    return k * (inv - 1.0)


def oii(c):
    """Output imbalance index of a confusion count.

    Edge cases are the limits of the ratio formula: no FP and no FN gives 0,
    only FN gives +k (x -> 0), only FP gives -k (x -> inf).
    """
    k = oii_scale(c)
    if c.fp == 0 and c.fn == 0:
        return 0.0
    if c.fn == 0:
        return -k
    if c.fp == 0:
        return k
    return oii_from_ratio(c.fp / c.fn, k)


def summarize(c):
    """Dict of the evaluation metrics for one confusion count."""
    try:
        ratio = fp_fn_ratio(c)
    except UndefinedRatioError:
        ratio = math.inf
    return {"iou": iou(c), "pa": pixel_accuracy(c), "oii": oii(c), "fp_fn_ratio": ratio}
