import math

import numpy as np
import pytest

from dibe import gradcheck, losses
from dibe.losses import Family, LossConfig
from dibe.metrics import ConfusionCounts


def one(p, y=1):
    return np.array([float(p)]), np.array([y])


def test_bce_values():
    assert losses.bce(*one(0.5)).value == pytest.approx(math.log(2))
    assert losses.bce(*one(1.0)).value == pytest.approx(0.0, abs=1e-6)
    assert losses.bce(*one(0.9, 0)).value == pytest.approx(-math.log(0.1))


def test_wbce_values():
    assert losses.wbce(*one(0.5), lam=0.25).value == pytest.approx(0.25 * math.log(2))
    assert losses.wbce(*one(0.5, 0), lam=0.25).value == pytest.approx(0.75 * math.log(2))
    rng = np.random.default_rng(1)
    p, y = gradcheck.random_instance(rng, (4, 4))
    half, full = losses.wbce(p, y, 0.5), losses.bce(p, y)
    assert half.value == pytest.approx(0.5 * full.value, abs=1e-15)
    np.testing.assert_allclose(half.grad, 0.5 * full.grad, atol=1e-15)


def test_focal_value():
    assert losses.focal(*one(0.9), lam=0.25, gamma=2).value == pytest.approx(0.25 * 0.01 * -math.log(0.9))


def test_dibe_dis_missed_branch_value_and_gradient():
    p, y = one(0.3)
    res = losses.dibe_dis(p, y, lam=0.25, gamma=2, alpha=0.3, beta=0.7)
    expected = 0.25 * (1 - 0.3**1.3) ** 2 * 1.3 * -math.log(0.3)
    assert res.value == pytest.approx(expected, rel=1e-12)
    closed = losses.dibe_dis_missed_grad(0.3, 0.25, 2, 0.3)
    assert res.grad[0] == pytest.approx(closed, rel=1e-12)
    numeric = gradcheck.numeric_grad(lambda q: losses.dibe_dis(q, y, 0.25, 2, 0.3, 0.7).value, p)
    assert res.grad[0] == pytest.approx(numeric[0], rel=1e-6)


def test_dibe_dis_gradient_grows_with_alpha():
    mags = [abs(losses.dibe_dis_missed_grad(0.3, 0.25, 2.0, a)) for a in (0.0, 0.3, 0.7)]
    assert mags[0] < mags[1] < mags[2]


def test_dibe_dis_spurious_branch_mirrors_missed():
    # (y=0, p) under beta behaves like (y=1, 1-p) under alpha with lam -> 1-lam
    a = losses.dibe_dis(*one(0.8, 0), lam=0.3, gamma=2, alpha=0.1, beta=0.6)
    b = losses.dibe_dis(*one(0.2, 1), lam=0.7, gamma=2, alpha=0.6, beta=0.1)
    assert a.value == pytest.approx(b.value, rel=1e-12)
    assert a.grad[0] == pytest.approx(-b.grad[0], rel=1e-12)


def test_dice_values():
    assert losses.dice_loss(ConfusionCounts(3, 0, 0)) == 0.0
    assert losses.dice_coefficient(ConfusionCounts(0, 0, 0), eps=1) == 1.0
    assert losses.dice_loss(ConfusionCounts(1, 1, 1), eps=1) == pytest.approx(0.4)


def test_tversky_value():
    c = ConfusionCounts(2, 1, 5)
    assert losses.tversky_index(c, 0.5, 0.5, 1.0) == pytest.approx(0.5)
    assert losses.tversky_loss(c, 0.5, 0.5, 1.0) == pytest.approx(0.5)


def test_tversky_regulators_weight_fn_then_fp():
    c = ConfusionCounts(2, 1, 5)
    # alpha multiplies FN, beta multiplies FP
    assert losses.tversky_index(c, 1.0, 0.0, 1e-12) == pytest.approx(2 / 7)
    assert losses.tversky_index(c, 0.0, 1.0, 1e-12) == pytest.approx(2 / 3)


def test_tversky_pixel_gradient_closed_form():
    p = np.array([0.7, 0.2, 0.4])
    y = np.array([1, 0, 1])
    alpha, beta, eps = 0.3, 0.7, 1.0
    tp = 0.7 + 0.4
    fp = 0.2
    fn = 0.3 + 0.6
    d = tp + alpha * fn + beta * fp + eps
    n = tp + eps
    # dTv/dp for a foreground pixel (tp up, fn down) and a background pixel (fp up)
    d_fg = (d - n * (1 - alpha)) / d**2
    d_bg = -beta * n / d**2
    res = losses.tversky(p, y, alpha, beta, eps)
    np.testing.assert_allclose(res.grad, [-d_fg, -d_bg, -d_fg], rtol=1e-12)
    numeric = gradcheck.numeric_grad(lambda q: losses.tversky(q, y, alpha, beta, eps).value, p)
    np.testing.assert_allclose(res.grad, numeric, rtol=1e-5)


def test_ft_values_and_limits():
    assert losses.ft_value(0.5, 0.75) == pytest.approx(0.5 ** (4 / 3))
    assert losses.ft_value(1.0, 0.75) == 0.0
    assert abs(losses.ft_grad_tv(1 - 1e-12, 0.75)) < 1e-2
    c = ConfusionCounts(2, 1, 5)
    assert losses.ft_loss(c, 0.3, 0.7, 1.0) == pytest.approx(losses.tversky_loss(c, 0.3, 0.7))


def test_dibe_reg_values_and_limits():
    assert losses.dibe_reg_value(0.5, 1.5) == pytest.approx(math.log(2) ** (2 / 3))
    assert losses.dibe_reg_value(1.0, 1.5) == 0.0
    assert abs(losses.dibe_reg_grad_tv(0.99, 1.5)) > abs(losses.dibe_reg_grad_tv(0.9, 1.5))
    assert math.isfinite(losses.dibe_reg_grad_tv(1.0, 1.5))


def test_ft_and_dibe_reg_gradients_match_finite_differences():
    for tv in (0.2, 0.5, 0.9, 0.99):
        h = 1e-7
        num_ft = (losses.ft_value(tv + h, 0.75) - losses.ft_value(tv - h, 0.75)) / (2 * h)
        num_dr = (losses.dibe_reg_value(tv + h, 1.5) - losses.dibe_reg_value(tv - h, 1.5)) / (2 * h)
        assert losses.ft_grad_tv(tv, 0.75) == pytest.approx(num_ft, rel=1e-5)
        assert losses.dibe_reg_grad_tv(tv, 1.5) == pytest.approx(num_dr, rel=1e-5)


def _two_pixel():
    return np.array([0.7, 0.2]), np.array([1, 0])


def test_combo_midpoint_is_mean_of_endpoints():
    p, y = _two_pixel()
    cfg = LossConfig(Family.COMBO, lam=0.3, theta=0.5)
    mid = losses.combo(p, y, cfg).value
    ends = losses.wbce(p, y, 0.3).value, losses.dice(p, y, cfg.eps).value
    assert mid == pytest.approx(sum(ends) / 2, rel=1e-14)


def test_el_endpoints():
    rng = np.random.default_rng(2)
    p, y = gradcheck.random_instance(rng, (2, 2))
    cfg = LossConfig(Family.EL, lam=0.4, gamma=1.0, theta=1.0)
    assert losses.el(p, y, cfg).value == pytest.approx(losses.wbce(p, y, 0.4).value, rel=1e-14)
    # soft counts tp=0.5, fp=1.0, fn=0.5 with eps=0.5 give a Dice coefficient of exactly 0.5
    p = np.array([0.5, 0.5, 0.5, 0.0])
    y = np.array([1, 0, 0, 0])
    assert losses.dice_coefficient(losses.soft_confusion(p, y), 0.5) == pytest.approx(0.5)
    res = losses.el(p, y, LossConfig(Family.EL, gamma=1.0, theta=0.0, eps=0.5))
    assert res.value == pytest.approx(math.log(2), rel=1e-12)


def test_hf_endpoints_and_midpoint():
    p, y = _two_pixel()
    cfg = LossConfig(Family.HF, lam=0.25, gamma=2.0, alpha=0.3, beta=0.7, theta=1.0)
    assert losses.hf(p, y, cfg).value == pytest.approx(losses.focal(p, y, 0.25, 2.0).value)
    mid = losses.hf(p, y, LossConfig(Family.HF, gamma=2.0, theta=0.5)).value
    parts = losses.focal(p, y, 0.25, 2.0).value, losses.focal_tversky(p, y, 0.3, 0.7, 2.0, 1.0).value
    assert mid == pytest.approx(sum(parts) / 2, rel=1e-14)


def test_dibe_endpoints():
    rng = np.random.default_rng(3)
    p, y = gradcheck.random_instance(rng, (2, 2))
    c = LossConfig(Family.DIBE, gamma=1.5, theta=1.0)
    assert losses.dibe(p, y, c).value == pytest.approx(losses.dibe_dis(p, y, 0.25, 1.5, 0.3, 0.7).value)
    c = LossConfig(Family.DIBE, gamma=1.5, theta=0.0)
    assert losses.dibe(p, y, c).value == pytest.approx(losses.dibe_reg(p, y, 0.3, 0.7, 1.5, 1.0).value)


def test_dibe_zero_regulators_is_sum_of_parts():
    p = np.array([[0.7, 0.2], [0.4, 0.9]])
    y = np.array([[1, 0], [1, 0]])
    cfg = LossConfig(Family.DIBE, gamma=1.5, alpha=0.0, beta=0.0, theta=0.5)
    parts = losses.focal(p, y, 0.25, 1.5).value, losses.dibe_reg(p, y, 0.0, 0.0, 1.5, 1.0).value
    assert losses.dibe(p, y, cfg).value == pytest.approx(0.5 * parts[0] + 0.5 * parts[1], rel=1e-14)


@pytest.mark.parametrize("name,left,right", gradcheck.degeneration_pairs(), ids=lambda v: v if isinstance(v, str) else "")
def test_degeneration_identity(name, left, right):
    rng = np.random.default_rng(7)
    for _ in range(20):
        p, y = gradcheck.random_instance(rng, (3, 3))
        cfg = gradcheck.random_config(rng, Family.DIBE_DIS)
        a, b = left(p, y, cfg), right(p, y, cfg)
        assert abs(a.value - b.value) <= 1e-12
        np.testing.assert_allclose(a.grad, b.grad, rtol=0, atol=1e-12)


@pytest.mark.parametrize("family", list(Family), ids=lambda f: f.value)
def test_pixel_gradient_matches_finite_differences(family):
    rng = np.random.default_rng(11)
    for _ in range(20):
        p, y = gradcheck.random_instance(rng, (3, 3))
        assert gradcheck.loss_gradient_error(gradcheck.random_config(rng, family), p, y) < 1e-5


@pytest.mark.parametrize("family", list(Family), ids=lambda f: f.value)
def test_every_family_finite_at_clip_extremes(family):
    p = np.array([[0.0, 1.0], [1.0, 0.0]])
    y = np.array([[1, 0], [1, 0]])
    res = losses.compute_loss(p, y, LossConfig.for_family(family))
    assert math.isfinite(res.value) and np.all(np.isfinite(res.grad))


def test_config_validation():
    with pytest.raises(ValueError):
        LossConfig(lam=0.0)
    with pytest.raises(ValueError):
        LossConfig(alpha=1.5)
    with pytest.raises(ValueError):
        LossConfig(eps=0.0)
    with pytest.raises(ValueError):
        LossConfig(Family.FT, gamma=0.0)
    assert LossConfig("dibe_reg").family is Family.DIBE_REG
    assert LossConfig.for_family("FT").gamma == 0.75
    assert LossConfig().with_alpha(0.2).beta == pytest.approx(0.8)


def test_probability_and_mask_validation():
    with pytest.raises(ValueError):
        losses.bce(np.array([1.2]), np.array([1]))
    with pytest.raises(ValueError):
        losses.bce(np.array([0.5]), np.array([2]))
    with pytest.raises(ValueError):
        losses.bce(np.array([0.5, 0.5]), np.array([1]))
