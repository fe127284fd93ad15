"""Finite-difference gradient checks and the property/oracle suites.

Each suite returns a list of ``Check`` records; ``run_all`` runs every suite
and is what ``dibe check`` prints.
"""

from dataclasses import dataclass, replace
import math

import numpy as np

from . import losses, metrics
from .guide import GuidanceConfig, complexity_report, grid_search, oii_guided_search, uniform_grid, BAND_HIT
from .losses import Family, LossConfig
from .trainer import PARAM_NAMES, ToyModel, loss_and_grads

# (tp, fp, fn) triples and the printed (FP/FN, IoU, PA, OII) columns
TABLE1 = (
    ((2, 0.5, 0.5), (1.0, 0.667, 0.800, 0.0)),
    ((2, 1, 1), (1.0, 0.5, 0.667, 0.0)),
    ((2, 3, 3), (1.0, 0.25, 0.4, 0.0)),
    ((2, 5, 1), (5.0, 0.25, 0.286, -0.667)),
    ((2, 4, 2), (2.0, 0.25, 0.333, -0.292)),
    ((2, 2, 4), (0.5, 0.25, 0.5, 0.292)),
    ((2, 1, 5), (0.2, 0.25, 0.667, 0.667)),
    ((2, 1, 2), (0.5, 0.4, 0.667, 0.267)),
    ((2, 1, 0.5), (2.0, 0.571, 0.667, -0.238)),
    ((2, 1, 0.2), (5.0, 0.625, 0.667, -0.524)),
)

BOUNDARY_BAND = 0.02  # excluded around the 0.5 threshold for branch-switching losses


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}  {self.detail}".rstrip()


def rel_err(a, b, floor=1e-12):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def numeric_grad(f, x, h=1e-6):
    """Central differences of scalar ``f`` at every element of ``x``."""
    x = np.array(x, dtype=float)
    g = np.empty_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return g


# --------------------------------------------------------------------------
# instance generators


def random_instance(rng, shape=(3, 4), band=BOUNDARY_BAND):
    """Probabilities in [0.02, 0.98] kept ``band/2`` away from 0.5, and a mask with both classes."""
    p = rng.uniform(0.02, 0.98, size=shape)
    near = np.abs(p - 0.5) < band / 2
    p[near] = np.where(p[near] < 0.5, 0.5 - band, 0.5 + band)
    y = (rng.random(shape) < 0.4).astype(np.int8)
    y.flat[0], y.flat[1] = 1, 0
    return p, y


def random_config(rng, family):
    family = Family(family)
    gamma = {
        Family.FOCAL: rng.uniform(0.0, 3.0),
        Family.DIBE_DIS: rng.uniform(0.0, 3.0),
        Family.FT: rng.uniform(0.5, 2.0),
        Family.DIBE_REG: rng.uniform(0.5, 2.0),
        Family.EL: rng.uniform(0.5, 2.0),
        Family.HF: rng.uniform(0.5, 2.0),
        Family.DIBE: rng.uniform(0.5, 2.0),
    }.get(family, 1.0)
    return LossConfig(
        family,
        lam=rng.uniform(0.1, 0.9),
        gamma=gamma,
        alpha=rng.uniform(0.0, 1.0),
        beta=rng.uniform(0.0, 1.0),
        theta=rng.uniform(0.0, 1.0),
        eps=rng.uniform(0.5, 2.0),
    )


def random_counts(rng, n):
    """``n`` ConfusionCounts spanning many orders of magnitude, including zeros."""
    out = []
    for _ in range(n):
        tp, fp, fn = 10.0 ** rng.uniform(-3, 5, size=3)
        zero = rng.integers(0, 8)
        if zero == 0:
            fp = 0.0
        elif zero == 1:
            fn = 0.0
        elif zero == 2:
            tp = 0.0
        out.append(metrics.ConfusionCounts(tp, fp, fn))
    return out


# --------------------------------------------------------------------------
# suites


def table1_checks(tol=1e-3):
    checks = []
    for i, ((tp, fp, fn), expected) in enumerate(TABLE1, 1):
        c = metrics.ConfusionCounts(tp, fp, fn)
        got = (metrics.fp_fn_ratio(c), metrics.iou(c), metrics.pixel_accuracy(c), metrics.oii(c))
        err = max(abs(g - e) for g, e in zip(got, expected))
        checks.append(Check(f"table1 row {i} {tp}:{fp}:{fn}", err <= tol, f"max|err|={err:.2e}"))
    return checks


def oii_property_checks(n=10_000, seed=0):
    """Antisymmetry and the k-bound; k < 1 needs tp > 0 (tp = 0 gives IoU = 0, k = 1)."""
    rng = np.random.default_rng(seed)
    worst_sum, worst_bound = 0.0, -math.inf
    bound_ok, strict_ok = True, True
    for c in random_counts(rng, n):
        if c.tp + c.fp + c.fn == 0:
            continue
        o, k = metrics.oii(c), metrics.oii_scale(c)
        worst_sum = max(worst_sum, abs(o + metrics.oii(c.swap())))
        worst_bound = max(worst_bound, abs(o) - k)
        bound_ok &= abs(o) <= k <= 1.0
        if c.tp > 0:
            strict_ok &= k < 1.0
        if c.fp > 0 and c.fn > 0:
            strict_ok &= abs(o) < k
    return [
        Check("oii antisymmetry under fp<->fn", worst_sum < 1e-12, f"max|sum|={worst_sum:.1e} n={n}"),
        Check("oii bounded by k", bound_ok, f"max(|oii|-k)={worst_bound:.1e}"),
        Check("k < 1 for tp > 0, |oii| < k for fp, fn > 0", strict_ok),
    ]


def degeneration_pairs():
    """(name, left, right) where both sides map (probs, truth, cfg) to a LossResult."""
    return [
        ("focal(gamma=0) == wbce",
         lambda p, y, c: losses.focal(p, y, c.lam, 0.0),
         lambda p, y, c: losses.wbce(p, y, c.lam)),
        ("dibe_dis(alpha=beta=0) == focal",
         lambda p, y, c: losses.dibe_dis(p, y, c.lam, c.gamma, 0.0, 0.0),
         lambda p, y, c: losses.focal(p, y, c.lam, c.gamma)),
        # the Dice smoothing term counts twice against Tversky's, so eps is halved
        ("tversky(1/2, 1/2, eps/2) == dice(eps)",
         lambda p, y, c: losses.tversky(p, y, 0.5, 0.5, c.eps / 2),
         lambda p, y, c: losses.dice(p, y, c.eps)),
        ("focal_tversky(gamma=1) == tversky",
         lambda p, y, c: losses.focal_tversky(p, y, c.alpha, c.beta, 1.0, c.eps),
         lambda p, y, c: losses.tversky(p, y, c.alpha, c.beta, c.eps)),
        ("combo(theta=1) == wbce",
         lambda p, y, c: losses.combo(p, y, replace(c, theta=1.0)),
         lambda p, y, c: losses.wbce(p, y, c.lam)),
        ("combo(theta=0) == dice",
         lambda p, y, c: losses.combo(p, y, replace(c, theta=0.0)),
         lambda p, y, c: losses.dice(p, y, c.eps)),
        ("hf(theta=0, gamma=1) == tversky",
         lambda p, y, c: losses.hf(p, y, replace(c, family=Family.HF, theta=0.0, gamma=1.0)),
         lambda p, y, c: losses.tversky(p, y, c.alpha, c.beta, c.eps)),
    ]


def degeneration_checks(n=100, seed=0, tol=1e-12):
    rng = np.random.default_rng(seed)
    checks = []
    for name, left, right in degeneration_pairs():
        worst = 0.0
        for _ in range(n):
            p, y = random_instance(rng, tuple(rng.integers(2, 6, size=2)))
            cfg = random_config(rng, Family.DIBE_DIS)
            a, b = left(p, y, cfg), right(p, y, cfg)
            worst = max(worst, abs(a.value - b.value), float(np.max(np.abs(a.grad - b.grad))))
        checks.append(Check(f"degeneration {name}", worst <= tol, f"max|diff|={worst:.1e}"))
    return checks


def loss_gradient_error(cfg, probs, truth, h=1e-6):
    """Max relative error between the analytic dL/dp and central differences."""
    analytic = losses.compute_loss(probs, truth, cfg).grad
    numeric = numeric_grad(lambda q: losses.compute_loss(q, truth, cfg).value, probs, h)
    # absolute floor: entries that are ~0 in both are compared on the loss's scale
    return float(np.max(rel_err(analytic, numeric, floor=1e-6)))


def loss_gradient_checks(n=200, seed=0, tol=1e-5):
    rng = np.random.default_rng(seed)
    checks = []
    for family in Family:
        worst = 0.0
        for _ in range(n):
            p, y = random_instance(rng, (3, 3))
            worst = max(worst, loss_gradient_error(random_config(rng, family), p, y))
        checks.append(Check(f"dL/dp {family.value}", worst < tol, f"max rel err={worst:.1e} n={n}"))
    return checks


def weight_gradient_error(n_weights=20, seed=0, h=1e-4, cfg=None, size=8):
    """Max relative error over ``n_weights`` sampled model weights."""
    rng = np.random.default_rng(seed)
    cfg = cfg or LossConfig.for_family(Family.DIBE, alpha=0.5, beta=0.5)
    model = ToyModel.initialize(seed, hidden=4)
    X = rng.normal(size=(2, size, size))
    y = (rng.random((2, size, size)) < 0.2).astype(np.int8)
    _, grads = loss_and_grads(model, X, y, cfg)
    slots = [(name, idx) for name in PARAM_NAMES for idx in np.ndindex(getattr(model, name).shape)]
    picks = rng.choice(len(slots), size=min(n_weights, len(slots)), replace=False)
    worst = 0.0
    for i in picks:
        name, idx = slots[i]
        w = getattr(model, name)
        orig = w[idx]
        w[idx] = orig + h
        up = loss_and_grads(model, X, y, cfg)[0]
        w[idx] = orig - h
        down = loss_and_grads(model, X, y, cfg)[0]
        w[idx] = orig
        numeric = (up - down) / (2 * h)
        worst = max(worst, float(rel_err(grads[name][idx], numeric, floor=1e-7)))
    return worst


def weight_gradient_checks(tol=1e-3):
    checks = []
    for family in (Family.BCE, Family.DIBE, Family.TVERSKY):
        err = weight_gradient_error(cfg=LossConfig.for_family(family))
        checks.append(Check(f"weight grads {family.value}", err < tol, f"max rel err={err:.1e} (20 weights)"))
    return checks


def closed_form_checks(n=100, seed=0, tol=1e-10):
    """Closed-form missed-branch gradient vs the implemented branch."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        p = rng.uniform(0.01, 0.49)
        lam, gamma, alpha = rng.uniform(0.05, 0.95), rng.uniform(0.0, 4.0), rng.uniform(0.0, 1.0)
        got = losses.dibe_dis(np.array([p]), np.array([1]), lam, gamma, alpha, 0.5).grad[0]
        # the implementation mean-reduces; a single pixel keeps the raw gradient
        expected = losses.dibe_dis_missed_grad(p, lam, gamma, alpha)
        worst = max(worst, float(rel_err(got, expected)))
    return [Check("missed-branch closed form", worst < tol, f"max rel err={worst:.1e} n={n}")]


def over_suppression_checks():
    ft_lo, ft_hi = abs(losses.ft_grad_tv(0.9, 0.75)), abs(losses.ft_grad_tv(0.999, 0.75))
    dr_lo, dr_hi = abs(losses.dibe_reg_grad_tv(0.9, 1.5)), abs(losses.dibe_reg_grad_tv(0.999, 1.5))
    return [
        Check("FT gradient shrinks near Tv=1", ft_hi < ft_lo, f"|g(.9)|={ft_lo:.4g} |g(.999)|={ft_hi:.4g}"),
        Check("DIBE_Reg gradient grows near Tv=1", dr_hi > dr_lo, f"|g(.9)|={dr_lo:.4g} |g(.999)|={dr_hi:.4g}"),
    ]


def linear_oracle(oii_at_0=0.5, slope=0.5):
    """Deterministic training stand-in whose OII falls linearly in alpha."""

    def train_fn(alpha):
        oii = oii_at_0 - slope * alpha
        iou = 0.6 - abs(alpha - 0.6) * 0.2
        return oii, iou, 0.7 - 0.1 * alpha

    return train_fn


def guidance_checks():
    oracle = linear_oracle(0.55, 0.5)  # band (0.15, 0.25) preimage is alpha in (0.6, 0.8)
    trace = oii_guided_search(oracle, GuidanceConfig())
    grid = grid_search(oracle, uniform_grid((0.1, 0.9), 4))
    rep = complexity_report(10)
    return [
        Check("guided search hits band in <= 3 trainings", trace.status == BAND_HIT and trace.n_trainings <= 3,
              f"trainings={trace.n_trainings} status={trace.status}"),
        Check("5-point grid uses 5 trainings", grid.n_trainings == 5, f"trainings={grid.n_trainings}"),
        Check("complexity ratio at m=10 > 100", rep.ratio > 100, f"({rep.grid_trainings}, {rep.guided_trainings}) ratio={rep.ratio:.1f}"),
    ]


SUITES = {
    "table1": table1_checks,
    "oii-properties": oii_property_checks,
    "degeneration": degeneration_checks,
    "loss-gradients": loss_gradient_checks,
    "weight-gradients": weight_gradient_checks,
    "closed-form": closed_form_checks,
    "over-suppression": over_suppression_checks,
    "guidance": guidance_checks,
}


def run_all(suites=None):
    """``{suite: [Check, ...]}`` for the named suites (all by default)."""
    names = list(SUITES) if suites is None else list(suites)
    return {name: SUITES[name]() for name in names}
