"""scikit-learn compatible wrappers around the toy trainer and OII guidance."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.utils.validation import check_is_fitted

from . import metrics
from .guide import GuidanceConfig, grid_search, oii_guided_search, uniform_grid, TrialResult
from .losses import DEFAULT_GAMMA, Family, LossConfig
from .trainer import ToyModel, TrainConfig, evaluate, forward, train
from .validation import check_image_mask_batch, check_images


class ToySegmenter(ClassifierMixin, BaseEstimator):
    """Pixel-wise binary segmenter trained with any of the twelve losses.

    ``X`` is an ``(n, h, w)`` stack of gray images, ``y`` the matching 0/1
    masks. ``gamma=None`` picks the reference gamma for ``family``.
    ``prior`` sets the initial foreground probability via the output bias.
    """

    def __init__(
        self,
        family="DIBE",
        lam=0.25,
        gamma=None,
        alpha=0.3,
        beta=0.7,
        theta=0.5,
        eps=1.0,
        lr=0.01,
        momentum=0.9,
        batch_size=8,
        epochs=50,
        eval_every=5,
        hidden=8,
        augment=True,
        prior=None,
        seed=0,
        record_time=False,
    ):
        self.family = family
        self.lam = lam
        self.gamma = gamma
        self.alpha = alpha
        self.beta = beta
        self.theta = theta
        self.eps = eps
        self.lr = lr
        self.momentum = momentum
        self.batch_size = batch_size
        self.epochs = epochs
        self.eval_every = eval_every
        self.hidden = hidden
        self.augment = augment
        self.prior = prior
        self.seed = seed
        self.record_time = record_time

    def loss_config(self):
        family = Family(str(self.family).upper())
        gamma = DEFAULT_GAMMA.get(family, 2.0) if self.gamma is None else self.gamma
        return LossConfig(family, self.lam, gamma, self.alpha, self.beta, self.theta, self.eps)

    def train_config(self):
        return TrainConfig(
            lr=self.lr,
            momentum=self.momentum,
            batch_size=self.batch_size,
            epochs=self.epochs,
            eval_every=self.eval_every,
            seed=self.seed,
            hidden=self.hidden,
            augment=self.augment,
            record_time=self.record_time,
            loss=self.loss_config(),
        )

    def fit(self, X, y, X_val=None, y_val=None):
        """Train from a fresh initialization; validation defaults to the training data."""
        X, y = check_image_mask_batch(X, y)
        if X_val is None:
            X_val, y_val = X, y
        cfg = self.train_config()
        self.model_ = ToyModel.initialize(self.seed, cfg.hidden, self.prior)
        self.log_ = train(self.model_, (X, y), (X_val, y_val), cfg)
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X):
        """Foreground probability map for each image, shape ``(n, h, w)``."""
        check_is_fitted(self, "model_")
        return forward(self.model_, check_images(X))

    def predict(self, X, threshold=0.5):
        return (self.predict_proba(X) >= threshold).astype(np.int8)

    def evaluate(self, X, y):
        check_is_fitted(self, "model_")
        return evaluate(self.model_, X, y)

    def score(self, X, y, sample_weight=None):
        """Pooled IoU over the whole batch."""
        return self.evaluate(X, y)["iou"]


class OIIGuidedSearch(BaseEstimator):
    """Select alpha for ``estimator`` by OII-guided bisection (or a grid).

    After ``fit``: ``trace_`` (the bisection trace, or None for a grid),
    ``grid_`` (grid result, when ``strategy='grid'``), ``best_alpha_`` and
    ``best_estimator_`` refit-free (the estimator trained at the chosen alpha).
    """

    def __init__(
        self,
        estimator=None,
        alpha_range=(0.1, 0.9),
        target_band=(0.15, 0.25),
        max_trainings=6,
        tie_beta=True,
        objective="iou",
        strategy="bisect",
        grid_parts=4,
    ):
        self.estimator = estimator
        self.alpha_range = alpha_range
        self.target_band = target_band
        self.max_trainings = max_trainings
        self.tie_beta = tie_beta
        self.objective = objective
        self.strategy = strategy
        self.grid_parts = grid_parts

    def guidance_config(self):
        return GuidanceConfig(
            tuple(self.alpha_range), tuple(self.target_band), self.max_trainings, self.tie_beta, self.objective
        )

    def fit(self, X, y, X_val=None, y_val=None):
        cfg = self.guidance_config()
        base = ToySegmenter() if self.estimator is None else self.estimator
        X, y = check_image_mask_batch(X, y)
        if X_val is None:
            X_val, y_val = X, y
        fitted = {}

        def train_fn(alpha):
            params = {"alpha": alpha}
            if cfg.tie_beta:
                params["beta"] = 1.0 - alpha
            est = clone(base).set_params(**params).fit(X, y, X_val, y_val)
            fitted[alpha] = est
            m = est.evaluate(X_val, y_val)
            return TrialResult(m["oii"], m["iou"], m["pa"], est.log_)

        if self.strategy == "bisect":
            self.trace_ = oii_guided_search(train_fn, cfg)
            self.grid_ = None
            self.best_alpha_ = self.trace_.best(cfg.objective).alpha
        elif self.strategy == "grid":
            self.trace_ = None
            self.grid_ = grid_search(train_fn, uniform_grid(cfg.alpha_range, self.grid_parts), cfg.objective)
            self.best_alpha_ = self.grid_.alpha
        else:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        self.best_estimator_ = fitted[self.best_alpha_]
        self.n_trainings_ = len(fitted)
        return self

    def predict(self, X):
        check_is_fitted(self, "best_estimator_")
        return self.best_estimator_.predict(X)

    def score(self, X, y):
        check_is_fitted(self, "best_estimator_")
        return self.best_estimator_.score(X, y)


def dataset_metrics(pred, truth):
    """IoU/PA/OII/FP-FN of hard predictions pooled over a batch."""
    return metrics.summarize(metrics.confusion_from_masks(pred, truth))
