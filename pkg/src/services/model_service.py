import numpy as np
from scipy.special import expit

from ..models.data_models import FeatureMatrix
from ..models.exceptions import ModelShapeError
from ..models.learning_models import ModelParams, TrainConfig

LOSS_EPSILON = 1e-12
# Keeps sigma(z) strictly inside (0, 1) and sigma(z) + sigma(-z) == 1 at saturation.
_SIGMOID_FLOOR = float(np.finfo(float).epsneg)


def sigmoid(z: np.ndarray | float) -> np.ndarray:
    return np.clip(expit(z), _SIGMOID_FLOOR, 1.0 - _SIGMOID_FLOOR)


def _check_features(params: ModelParams, X: np.ndarray):
    if X.ndim != 2 or X.shape[1] != params.dim:
        raise ModelShapeError(
            f"model has {params.dim} weights, data has shape {X.shape}"
        )


def predict_proba(params: ModelParams, X: np.ndarray) -> np.ndarray:
    _check_features(params, X)
    return sigmoid(X @ params.w + params.b)


def predict_labels(
    params: ModelParams, X: np.ndarray, threshold: float = 0.5
) -> np.ndarray:
    return (predict_proba(params, X) >= threshold).astype(np.int8)


def bce_loss(probs: np.ndarray, y: np.ndarray) -> float:
    """Mean binary cross-entropy with probabilities clipped to [eps, 1 - eps]."""
    if probs.shape != y.shape:
        raise ModelShapeError(f"probs {probs.shape} and labels {y.shape} differ")
    if probs.size == 0:
        raise ModelShapeError("cannot take the loss of an empty batch")
    p = np.clip(probs, LOSS_EPSILON, 1.0 - LOSS_EPSILON)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def gradients(
    params: ModelParams, X: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, float]:
    n = X.shape[0]
    if n == 0:
        raise ModelShapeError("cannot compute gradients on an empty dataset")
    if y.shape != (n,):
        raise ModelShapeError(f"labels {y.shape} do not match {n} rows")
    error = predict_proba(params, X) - y
    return X.T @ error / n, float(error.mean())


def train_local(
    params: ModelParams, data: FeatureMatrix, config: TrainConfig, lr: float
) -> ModelParams:
    """`config.epochs` full-batch gradient steps from `params`; the input is not modified."""
    if lr < 0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    w, b = params.w.copy(), params.b
    for _ in range(config.epochs):
        grad_w, grad_b = gradients(ModelParams(w=w, b=b), data.X, data.y)
        w = w - lr * grad_w
        b = b - lr * grad_b
    return ModelParams(w=w, b=float(b))


def lr_schedule(eta0: float, gamma: float, round_index: int) -> float:
    if round_index < 0:
        raise ValueError(f"round index must be >= 0, got {round_index}")
    return eta0 * gamma**round_index
