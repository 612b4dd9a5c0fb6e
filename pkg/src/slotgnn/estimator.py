"""Scikit-learn style estimator wrapping the full detection pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .errors import DataError
from .evaluation import DEFAULT_THRESHOLD_PX, evaluate_records
from .params import GnnConfig, LossWeights, ModelConfig, init_params
from .pipeline import infer
from .scenes import SceneRecord
from .training import TrainConfig, fit_records


def _as_records(X) -> list[SceneRecord]:
    if not isinstance(X, (list, tuple)) or not X:
        raise DataError("expected a non-empty list of SceneRecord")
    for item in X:
        if not isinstance(item, SceneRecord):
            raise DataError(f"expected SceneRecord items, got {type(item).__name__}")
    return list(X)


def _as_images(X, size: int) -> list[np.ndarray]:
    if isinstance(X, np.ndarray) and X.ndim == 3:
        X = [X]
    images = []
    for item in X:
        if isinstance(item, SceneRecord):
            item = item.image
        arr = np.asarray(item)
        if arr.shape != (size, size, 3):
            raise DataError(
                f"expected ({size}, {size}, 3) images or SceneRecord, got {arr.shape}")
        images.append(arr)
    return images


class SlotDetector(BaseEstimator):
    """Parking-slot detector with a fit/predict interface.

    fit() trains on a list of SceneRecord (labels travel inside the
    records, so y is unused); predict() maps images or records to lists of
    SlotPrediction; score() returns slot-level F1 on labeled records.
    """

    def __init__(self, epochs: int = 30, batch_size: int = 24, lr: float = 0.001,
                 seed: int = 0, variant: str = "attentional", layers: int = 3,
                 heads: int = 4, lambda_point: float = 100.0,
                 lambda_line: float = 1.0, use_positional_encoder: bool = True):
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed
        self.variant = variant
        self.layers = layers
        self.heads = heads
        self.lambda_point = lambda_point
        self.lambda_line = lambda_line
        self.use_positional_encoder = use_positional_encoder

    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            gnn=GnnConfig(layers=self.layers, heads=self.heads, variant=self.variant),
            loss_weights=LossWeights(point=self.lambda_point, line=self.lambda_line),
            use_positional_encoder=self.use_positional_encoder)

    def fit(self, X, y=None) -> "SlotDetector":
        records = _as_records(X)
        config = self._model_config()
        tconfig = TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                              lr=self.lr, seed=self.seed)
        self.params_ = init_params(config, tconfig.seed)
        self.history_ = fit_records(records, self.params_, tconfig)
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise DataError("this SlotDetector is not fitted yet; call fit first")

    def predict(self, X) -> list:
        self._check_fitted()
        images = _as_images(X, self.params_.config.image_size)
        return [infer(image, self.params_) for image in images]

    def score(self, X, y=None) -> float:
        self._check_fitted()
        report = evaluate_records(self.params_, _as_records(X), DEFAULT_THRESHOLD_PX)
        return report.f1
