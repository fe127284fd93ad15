"""Segmentation losses with analytic gradients w.r.t. per-pixel probabilities.

Three groups:

* distribution-based, evaluated per pixel and mean-reduced: ``bce``, ``wbce``,
  ``focal``, ``dibe_dis``;
* region-based, scalar functions of (soft) confusion counts: ``dice_loss``,
  ``tversky_loss``, ``ft_loss``, ``dibe_reg_loss``, plus their pixel-level
  wrappers ``dice``, ``tversky``, ``focal_tversky``, ``dibe_reg``;
* compound, convex mixtures of the two: ``combo``, ``el``, ``hf``, ``dibe``.

Every pixel-level function accepts any array shape (a single map or an
``(n, h, w)`` batch); region parts pool counts over the whole input.

Regulator convention: ``alpha`` always weights missed foreground (pixels with
y=1 predicted 0) and ``beta`` always weights spurious foreground (y=0
predicted 1). For ``dibe_dis`` these are the (y=1, y_hat=0) and (y=0, y_hat=1)
branches; for the Tversky index ``alpha`` multiplies the soft FN count and
``beta`` the soft FP count, so one ``alpha`` has the same effect on output
imbalance in every family that uses it: raising it lowers FN, raises FP/FN and
drives the OII down.
"""

from dataclasses import dataclass, replace
from enum import Enum
import math

import numpy as np

from .metrics import ConfusionCounts, soft_confusion
from .validation import check_mask, check_probs, check_same_shape

PROB_CLIP = 1e-7
TV_CLIP = 1e-9
THRESHOLD = 0.5


class Family(str, Enum):
    BCE = "BCE"
    WBCE = "WBCE"
    FOCAL = "FOCAL"
    DIBE_DIS = "DIBE_DIS"
    DICE = "DICE"
    TVERSKY = "TVERSKY"
    FT = "FT"
    DIBE_REG = "DIBE_REG"
    COMBO = "COMBO"
    EL = "EL"
    HF = "HF"
    DIBE = "DIBE"


# gamma values used for each family in the reference experiments
DEFAULT_GAMMA = {
    Family.FOCAL: 2.0,
    Family.DIBE_DIS: 2.0,
    Family.DIBE: 2.0,
    Family.HF: 2.0,
    Family.FT: 0.75,
    Family.DIBE_REG: 1.5,
    Family.EL: 1.0,
}

# families that read gamma as a 1/gamma exponent (or as EL's log exponent) and need gamma > 0
_POSITIVE_GAMMA = {Family.FT, Family.DIBE_REG, Family.EL, Family.HF, Family.DIBE}


@dataclass(frozen=True)
class LossConfig:
    """Hyperparameters for one loss family.

    ``lam`` is the weight of the y=1 class (y=0 gets ``1 - lam``). ``gamma``
    is read per family: as the focusing exponent in FOCAL/DIBE_DIS, as the
    ``1/gamma`` exponent in FT/DIBE_REG, as both EL exponents. Compound
    families share one gamma between their two parts.
    """

    family: Family = Family.DIBE
    lam: float = 0.25
    gamma: float = 2.0
    alpha: float = 0.3
    beta: float = 0.7
    theta: float = 0.5
    eps: float = 1.0

    def __post_init__(self):
        if not isinstance(self.family, Family):
            object.__setattr__(self, "family", Family(str(self.family).upper()))
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lam must be in (0, 1), got {self.lam}")
        if self.gamma < 0 or not math.isfinite(self.gamma):
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.family in _POSITIVE_GAMMA and self.gamma <= 0:
            raise ValueError(f"{self.family.value} needs gamma > 0")
        for name in ("alpha", "beta", "theta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if not self.eps > 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")

    @classmethod
    def for_family(cls, family, **overrides):
        """Config with the reference gamma for ``family``."""
        family = Family(family)
        params = {"family": family, "gamma": DEFAULT_GAMMA.get(family, 2.0)}
        params.update(overrides)
        return cls(**params)

    def with_alpha(self, alpha, tie_beta=True):
        return replace(self, alpha=alpha, beta=1.0 - alpha if tie_beta else self.beta)


@dataclass
class LossResult:
    value: float
    grad: np.ndarray

    def __add__(self, other):
        return LossResult(self.value + other.value, self.grad + other.grad)

    def scale(self, w):
        return LossResult(w * self.value, w * self.grad)


def _prepare(probs, truth):
    probs = check_probs(probs)
    truth = check_mask(truth, "truth")
    check_same_shape(probs, truth, ("probs", "truth"))
    return probs, truth.astype(bool)


def _clip(p):
    return np.clip(p, PROB_CLIP, 1.0 - PROB_CLIP)


def _check_unit(name, v, lo_open=False, hi_open=False):
    lo_ok = v > 0 if lo_open else v >= 0
    hi_ok = v < 1 if hi_open else v <= 1
    if not (lo_ok and hi_ok):
        raise ValueError(f"{name}={v} out of range")


# --------------------------------------------------------------------------
# distribution-based


def _pixelwise(probs, truth, fn):
    """Mean-reduce the per-pixel (loss, dloss/dp) produced by ``fn``."""
    probs, y = _prepare(probs, truth)
    p = _clip(probs)
    loss, grad = fn(p, y)
    n = p.size
    return LossResult(float(np.sum(loss)) / n, grad / n)


def bce(probs, truth):
    def f(p, y):
        loss = np.where(y, -np.log(p), -np.log1p(-p))
        grad = np.where(y, -1.0 / p, 1.0 / (1.0 - p))
        return loss, grad

    return _pixelwise(probs, truth, f)


def wbce(probs, truth, lam=0.25):
    _check_unit("lam", lam, lo_open=True, hi_open=True)

    def f(p, y):
        loss = np.where(y, -lam * np.log(p), -(1 - lam) * np.log1p(-p))
        grad = np.where(y, -lam / p, (1 - lam) / (1.0 - p))
        return loss, grad

    return _pixelwise(probs, truth, f)


def _focal_terms(p, y, lam, gamma):
    q = 1.0 - p
    log_p, log_q = np.log(p), np.log1p(-p)
    pos = -lam * q**gamma * log_p
    neg = -(1 - lam) * p**gamma * log_q
    # d/dp [-(1-p)^g log p] = g(1-p)^(g-1) log p - (1-p)^g / p
    if gamma == 0:
        dpos = -lam / p
        dneg = (1 - lam) / q
    else:
        dpos = lam * (gamma * q ** (gamma - 1) * log_p - q**gamma / p)
        dneg = (1 - lam) * (-gamma * p ** (gamma - 1) * log_q + p**gamma / q)
    return np.where(y, pos, neg), np.where(y, dpos, dneg)


def focal(probs, truth, lam=0.25, gamma=2.0):
    _check_unit("lam", lam, lo_open=True, hi_open=True)
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    return _pixelwise(probs, truth, lambda p, y: _focal_terms(p, y, lam, gamma))


def _regulated_term(p, lam, gamma, a):
    """-lam (1 - p^(1+a))^gamma (1+a) log p and its derivative in p."""
    s = 1.0 + a
    u = 1.0 - p**s
    log_p = np.log(p)
    loss = -lam * u**gamma * s * log_p
    if gamma == 0:
        grad = -lam * s / p
    else:
        grad = lam * s * u**gamma * (gamma * s * p**a * log_p / u - 1.0 / p)
    return loss, grad


def dibe_dis_missed_grad(p, lam, gamma, alpha):
    """Closed-form dL/dp on the (y=1, y_hat=0) branch of ``dibe_dis``."""
    s = 1.0 + alpha
    u = 1.0 - p**s
    return lam * s * u**gamma * (gamma * u ** (-1) * s * p**alpha * np.log(p) - 1.0 / p)


def dibe_dis(probs, truth, lam=0.25, gamma=2.0, alpha=0.3, beta=0.7, threshold=THRESHOLD):
    """Focal loss with separate regulators on misclassified pixels.

    Pixels whose hard prediction (``p >= threshold``) disagrees with the label
    use the regulated branch; the branch choice is held fixed when
    differentiating.
    """
    _check_unit("lam", lam, lo_open=True, hi_open=True)
    _check_unit("alpha", alpha)
    _check_unit("beta", beta)
    if gamma < 0:
        raise ValueError("gamma must be >= 0")

    def f(p, y):
        loss, grad = _focal_terms(p, y, lam, gamma)
        y_hat = p >= threshold
        missed = y & ~y_hat
        spurious = ~y & y_hat
        if missed.any():
            l_m, g_m = _regulated_term(p[missed], lam, gamma, alpha)
            loss[missed], grad[missed] = l_m, g_m
        if spurious.any():
            # mirror image of the missed branch under p -> 1 - p
            l_s, g_s = _regulated_term(1.0 - p[spurious], 1 - lam, gamma, beta)
            loss[spurious], grad[spurious] = l_s, -g_s
        return loss, grad

    return _pixelwise(probs, truth, f)


# --------------------------------------------------------------------------
# region-based, on confusion counts


def _check_eps(eps):
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")


def dice_coefficient(c, eps=1.0):
    _check_eps(eps)
    return (2 * c.tp + eps) / (2 * c.tp + c.fp + c.fn + eps)


def dice_loss(c, eps=1.0):
    return 1.0 - dice_coefficient(c, eps)


def tversky_index(c, alpha=0.5, beta=0.5, eps=1.0):
    """(tp + eps) / (tp + alpha*fn + beta*fp + eps); see the module note on alpha."""
    _check_eps(eps)
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be >= 0")
    return (c.tp + eps) / (c.tp + alpha * c.fn + beta * c.fp + eps)


def tversky_loss(c, alpha=0.5, beta=0.5, eps=1.0):
    return 1.0 - tversky_index(c, alpha, beta, eps)


def ft_value(tv, gamma):
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    return max(1.0 - tv, 0.0) ** (1.0 / gamma)


def ft_grad_tv(tv, gamma):
    """dL/dTv for the focal Tversky loss (1 - Tv)^(1/gamma)."""
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    tv = min(tv, 1.0 - TV_CLIP)
    return -(1.0 / gamma) * (1.0 - tv) ** (1.0 / gamma - 1.0)


def dibe_reg_value(tv, gamma):
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    if not tv > 0:
        raise ValueError("Tversky index must be > 0")
    if tv >= 1.0:
        return 0.0
    return (-math.log(tv)) ** (1.0 / gamma)


def dibe_reg_grad_tv(tv, gamma):
    """dL/dTv for (-log Tv)^(1/gamma); Tv is clamped below 1 - 1e-9."""
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    if not tv > 0:
        raise ValueError("Tversky index must be > 0")
    tv = min(tv, 1.0 - TV_CLIP)
    return -(1.0 / (gamma * tv)) * (-math.log(tv)) ** (1.0 / gamma - 1.0)


def ft_loss(c, alpha=0.3, beta=0.7, gamma=0.75, eps=1.0):
    return ft_value(tversky_index(c, alpha, beta, eps), gamma)


def dibe_reg_loss(c, alpha=0.3, beta=0.7, gamma=1.5, eps=1.0):
    return dibe_reg_value(tversky_index(c, alpha, beta, eps), gamma)


# --------------------------------------------------------------------------
# region-based, pixel level


def _chain_counts(y, d_tp, d_fp, d_fn):
    """Per-pixel gradient from partials w.r.t. soft (tp, fp, fn)."""
    return np.where(y, d_tp - d_fn, d_fp)


def _region(probs, truth, index_fn, outer):
    """Evaluate ``outer(index)`` where ``index_fn(counts)`` returns (index, d/dtp, d/dfp, d/dfn)."""
    probs, y = _prepare(probs, truth)
    c = soft_confusion(probs, y)
    idx, d_tp, d_fp, d_fn = index_fn(c)
    value, d_outer = outer(idx)
    return LossResult(value, d_outer * _chain_counts(y, d_tp, d_fp, d_fn))


def _dice_partials(eps):
    def f(c):
        num = 2 * c.tp + eps
        den = 2 * c.tp + c.fp + c.fn + eps
        dc = num / den
        return dc, (2 * den - 2 * num) / den**2, -num / den**2, -num / den**2

    return f


def _tversky_partials(alpha, beta, eps):
    def f(c):
        num = c.tp + eps
        den = c.tp + alpha * c.fn + beta * c.fp + eps
        tv = num / den
        return tv, (den - num) / den**2, -beta * num / den**2, -alpha * num / den**2

    return f


def dice(probs, truth, eps=1.0):
    _check_eps(eps)
    return _region(probs, truth, _dice_partials(eps), lambda d: (1.0 - d, -1.0))


def tversky(probs, truth, alpha=0.5, beta=0.5, eps=1.0):
    _check_eps(eps)
    return _region(probs, truth, _tversky_partials(alpha, beta, eps), lambda t: (1.0 - t, -1.0))


def focal_tversky(probs, truth, alpha=0.3, beta=0.7, gamma=0.75, eps=1.0):
    _check_eps(eps)
    return _region(
        probs,
        truth,
        _tversky_partials(alpha, beta, eps),
        lambda t: (ft_value(t, gamma), ft_grad_tv(t, gamma)),
    )


def dibe_reg(probs, truth, alpha=0.3, beta=0.7, gamma=1.5, eps=1.0):
    _check_eps(eps)
    return _region(
        probs,
        truth,
        _tversky_partials(alpha, beta, eps),
        lambda t: (dibe_reg_value(t, gamma), dibe_reg_grad_tv(t, gamma)),
    )


# --------------------------------------------------------------------------
# compound


def _mix(theta, pixel_part, region_part):
    _check_unit("theta", theta)
    return pixel_part.scale(theta) + region_part.scale(1.0 - theta)


def combo(probs, truth, cfg):
    return _mix(cfg.theta, wbce(probs, truth, cfg.lam), dice(probs, truth, cfg.eps))


def el_ce(probs, truth, lam=0.25, gamma=1.0):
    """Mean of lam(-log p)^gamma (y=1) and (1-lam)(-log(1-p))^gamma (y=0)."""
    if gamma <= 0:
        raise ValueError("gamma must be > 0")

    def f(p, y):
        a = -np.log(p)
        b = -np.log1p(-p)
        loss = np.where(y, lam * a**gamma, (1 - lam) * b**gamma)
        grad = np.where(
            y,
            -lam * gamma * a ** (gamma - 1) / p,
            (1 - lam) * gamma * b ** (gamma - 1) / (1.0 - p),
        )
        return loss, grad

    return _pixelwise(probs, truth, f)


def el_dice(probs, truth, gamma=1.0, eps=1.0):
    """(-log D_c)^gamma on soft counts."""
    _check_eps(eps)

    def outer(d):
        value = 0.0 if d >= 1.0 else (-math.log(d)) ** gamma
        d = min(d, 1.0 - TV_CLIP)
        return value, -gamma * (-math.log(d)) ** (gamma - 1) / d

    return _region(probs, truth, _dice_partials(eps), outer)


def el(probs, truth, cfg):
    return _mix(
        cfg.theta,
        el_ce(probs, truth, cfg.lam, cfg.gamma),
        el_dice(probs, truth, cfg.gamma, cfg.eps),
    )


def hf(probs, truth, cfg):
    return _mix(
        cfg.theta,
        focal(probs, truth, cfg.lam, cfg.gamma),
        focal_tversky(probs, truth, cfg.alpha, cfg.beta, cfg.gamma, cfg.eps),
    )


def dibe(probs, truth, cfg):
    return _mix(
        cfg.theta,
        dibe_dis(probs, truth, cfg.lam, cfg.gamma, cfg.alpha, cfg.beta),
        dibe_reg(probs, truth, cfg.alpha, cfg.beta, cfg.gamma, cfg.eps),
    )


_DISPATCH = {
    Family.BCE: lambda p, t, c: bce(p, t),
    Family.WBCE: lambda p, t, c: wbce(p, t, c.lam),
    Family.FOCAL: lambda p, t, c: focal(p, t, c.lam, c.gamma),
    Family.DIBE_DIS: lambda p, t, c: dibe_dis(p, t, c.lam, c.gamma, c.alpha, c.beta),
    Family.DICE: lambda p, t, c: dice(p, t, c.eps),
    Family.TVERSKY: lambda p, t, c: tversky(p, t, c.alpha, c.beta, c.eps),
    Family.FT: lambda p, t, c: focal_tversky(p, t, c.alpha, c.beta, c.gamma, c.eps),
    Family.DIBE_REG: lambda p, t, c: dibe_reg(p, t, c.alpha, c.beta, c.gamma, c.eps),
    Family.COMBO: combo,
    Family.EL: el,
    Family.HF: hf,
    Family.DIBE: dibe,
}


def compute_loss(probs, truth, cfg):
    """Loss value and dL/dp for the family selected by ``cfg``."""
    return _DISPATCH[cfg.family](probs, truth, cfg)
