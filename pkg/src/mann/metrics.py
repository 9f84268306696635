"""Error metrics: MAE/MSE/RMSE for regression, accuracy/log-loss for classification."""

import dataclasses
import math
from typing import Optional

import numpy as np

from mann.errors import InputShapeError


@dataclasses.dataclass
class EvalReport:
    n: int
    mae: Optional[float] = None
    mse: Optional[float] = None
    rmse: Optional[float] = None
    accuracy: Optional[float] = None
    mean_log_loss: Optional[float] = None

    def to_dict(self):
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}


def _pair(y, yhat):
    y = np.asarray(y, dtype=float).reshape(-1)
    yhat = np.asarray(yhat, dtype=float).reshape(-1)
    if y.shape != yhat.shape:
        raise InputShapeError(f"length mismatch: {y.shape[0]} vs {yhat.shape[0]}")
    if y.size == 0:
        raise InputShapeError("metrics need at least one value")
    return y, yhat


def mae(y, yhat):
    y, yhat = _pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def mse(y, yhat):
    y, yhat = _pair(y, yhat)
    return float(np.mean((y - yhat) ** 2))


def rmse(y, yhat):
    return math.sqrt(mse(y, yhat))


def regression_metrics(y, yhat) -> EvalReport:
    y, yhat = _pair(y, yhat)
    err = y - yhat
    m = float(np.mean(err ** 2))
    return EvalReport(
        n=int(y.size),
        mae=float(np.mean(np.abs(err))),
        mse=m,
        rmse=math.sqrt(m),
    )


def _check_proba(y, p):
    y, p = _pair(y, p)
    if np.any((p <= 0.0) | (p >= 1.0)) or not np.all(np.isfinite(p)):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    if np.any((y != 0.0) & (y != 1.0)):
        raise ValueError("classification targets must be 0 or 1")
    return y, p


def log_loss(y, p):
    y, p = _check_proba(y, p)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def accuracy(y, p):
    """Share of rows where ``p >= 0.5`` agrees with the label (ties count as class 1)."""
    y, p = _check_proba(y, p)
    return float(np.mean((p >= 0.5).astype(float) == y))


def classification_metrics(y, p) -> EvalReport:
    y, p = _check_proba(y, p)
    return EvalReport(
        n=int(y.size),
        accuracy=accuracy(y, p),
        mean_log_loss=log_loss(y, p),
    )
