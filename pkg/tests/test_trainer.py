import numpy as np
import pytest
from scipy.special import expit

from dibe import gradcheck, losses, metrics, trainer
from dibe.losses import Family, LossConfig
from dibe.trainer import ToyModel, TrainConfig, TrainingLog, LogRow


def separable_pair():
    X = np.zeros((2, 8, 8))
    y = np.zeros((2, 8, 8), np.int8)
    y[0, 2:5, 3] = 1
    y[1, 5, 1:7] = 1
    X[y == 1] = 1.0
    return X, y


def test_zero_model_outputs_sigmoid_of_bias():
    model = ToyModel.zeros(hidden=4, bias=0.3)
    out = trainer.forward(model, np.random.default_rng(0).normal(size=(5, 6)))
    np.testing.assert_allclose(out, expit(0.3), rtol=0, atol=1e-15)


def test_output_shape_matches_input():
    model = ToyModel.initialize(0)
    assert trainer.forward(model, np.zeros((17, 23))).shape == (17, 23)
    assert trainer.forward(model, np.zeros((3, 17, 23))).shape == (3, 17, 23)


def test_forward_is_deterministic_and_in_unit_interval():
    X = np.random.default_rng(1).normal(size=(2, 9, 9))
    a = trainer.forward(ToyModel.initialize(4), X)
    b = trainer.forward(ToyModel.initialize(4), X)
    assert np.array_equal(a, b)
    assert a.min() > 0 and a.max() < 1


def test_forward_rejects_tiny_images():
    with pytest.raises(ValueError):
        trainer.forward(ToyModel.initialize(0), np.zeros((2, 2)))


def test_perfect_prediction_under_dice_has_vanishing_weight_gradients():
    # a saturated zero-kernel model predicting all foreground for an all-foreground truth;
    # the clipped sigmoid derivative (about 1e-7) leaves a residual of that order
    model = ToyModel.zeros(hidden=3, bias=40.0)
    X = np.random.default_rng(0).normal(size=(1, 6, 6))
    y = np.ones((1, 6, 6), np.int8)
    grads = trainer.backward(model, X, y, LossConfig(Family.DICE))
    for g in grads.values():
        assert np.max(np.abs(g)) < 1e-6


@pytest.mark.parametrize("family", [Family.BCE, Family.FOCAL, Family.DICE, Family.FT, Family.DIBE], ids=lambda f: f.value)
def test_weight_gradients_match_finite_differences(family):
    err = gradcheck.weight_gradient_error(n_weights=20, h=1e-4, cfg=LossConfig.for_family(family), size=8)
    assert err < 1e-3


def test_theta_mixing_identical_parts_doubles_gradients():
    # summing two identical loss parts must double every weight gradient
    model = ToyModel.initialize(2, hidden=4)
    X = np.random.default_rng(3).normal(size=(2, 8, 8))
    y = (np.random.default_rng(4).random((2, 8, 8)) < 0.2).astype(np.int8)
    cache = trainer._forward_cache(model, X)


    part = losses.wbce(cache["probs"], y, 0.25)
    doubled = part + part
    g1 = trainer._backward_from_cache(model, cache, part.grad)
    g2 = trainer._backward_from_cache(model, cache, doubled.grad)
    for name in g1:
        np.testing.assert_allclose(g2[name], 2 * g1[name], rtol=1e-14)


def test_bce_learns_separable_toy_set():
    X, y = separable_pair()
    log = trainer.train(
        ToyModel.initialize(0), (X, y), (X, y),
        TrainConfig(lr=0.01, epochs=50, batch_size=2, loss=LossConfig.for_family(Family.BCE)),
    )
    assert log.final.iou > 0.9


def test_training_is_deterministic():
    X, y = separable_pair()
    cfg = TrainConfig(lr=0.05, epochs=6, batch_size=1, eval_every=2, loss=LossConfig.for_family(Family.DIBE))
    a = trainer.train(ToyModel.initialize(1), (X, y), (X, y), cfg)
    b = trainer.train(ToyModel.initialize(1), (X, y), (X, y), cfg)
    assert a.to_csv() == b.to_csv()


def test_log_epochs_follow_eval_schedule():
    X, y = separable_pair()
    cfg = TrainConfig(lr=0.01, epochs=7, eval_every=3, batch_size=2)
    log = trainer.train(ToyModel.initialize(0), (X, y), (X, y), cfg)
    assert [r.epoch for r in log] == [3, 6, 7]


def test_train_config_rejects_bad_values():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(momentum=1.0)


def test_divergence_reports_last_good_log():
    X, y = separable_pair()
    cfg = TrainConfig(lr=1e6, epochs=20, eval_every=1, batch_size=1, loss=LossConfig.for_family(Family.BCE))
    with pytest.raises(trainer.TrainingDiverged) as info:
        trainer.train(ToyModel.initialize(0), (X, y), (X, y), cfg)
    assert isinstance(info.value.log, TrainingLog)


def test_evaluate_perfect_and_empty_models():
    X, y = separable_pair()
    perfect = ToyModel.zeros(hidden=1)
    perfect.w1[0, 1, 1] = 1.0  # pass the standardized pixel through
    perfect.w2[0, 1, 1] = 50.0
    perfect.b2[0] = -25.0
    m = trainer.evaluate(perfect, X, y)
    assert (m["iou"], m["pa"], m["oii"]) == (1.0, 1.0, 0.0)
    empty = ToyModel.zeros(hidden=1, bias=-10.0)
    m = trainer.evaluate(empty, X, y)
    assert m["iou"] == 0.0
    assert m["oii"] == pytest.approx(1.0)  # +k with k = 1 - 0/2


def test_pooled_iou_differs_from_per_image_mean():
    truth = np.zeros((2, 4, 4), np.int8)
    pred = np.zeros((2, 4, 4), np.int8)
    truth[0, :2, :] = 1  # 8 pixels, all found
    pred[0, :2, :] = 1
    truth[1, 0, 0] = 1  # 1 pixel, missed with one false positive
    pred[1, 3, 3] = 1
    pooled = metrics.iou(metrics.confusion_from_masks(pred, truth))
    per_image = np.mean([metrics.iou(metrics.confusion_from_masks(p, t)) for p, t in zip(pred, truth)])
    assert pooled == pytest.approx(0.8)
    assert per_image == pytest.approx(0.5)


def test_log_csv_round_trip(tmp_path):
    log = TrainingLog()
    log.append(LogRow(5, 0.5, 0.2, 0.3, 0.1, float("inf"), 0.0))
    log.append(LogRow(10, 0.25, 0.4, 0.5, -0.2, 2.0, 0.0))
    log.write_csv(tmp_path / "log.csv")
    back = TrainingLog.read_csv(tmp_path / "log.csv")
    assert back == log
    with pytest.raises(ValueError):
        log.append(LogRow(10, 0, 0, 0, 0, 0, 0))
    assert log.first_epoch_where("iou", 0.3) == 10
    assert log.first_epoch_where("iou", 0.9) is None
