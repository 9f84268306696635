"""Loss functions in raw-score space and the logistic link."""

import enum

import numpy as np
from scipy.special import expit


class LossKind(str, enum.Enum):
    SQUARED = "squared"
    LOGLOSS = "logloss"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(
                f"unknown loss {value!r}; expected one of "
                f"{[k.value for k in cls]}"
            ) from None


def sigmoid(z):
    return expit(z)


def loss_values(y, raw, loss):
    """Per-example loss at raw score ``raw``.

    Squared error is ½(y − F). Log-loss is the negative log-likelihood of
    p = sigmoid(F), evaluated through logaddexp so large |F| stays finite.
    """
    y = np.asarray(y, dtype=float)
    raw = np.asarray(raw, dtype=float)
    if LossKind.parse(loss) is LossKind.SQUARED:
        return 0.5 * (y - raw) ** 2
    # -[y log p + (1-y) log(1-p)] with log p = -log(1+e^-F)
    return y * np.logaddexp(0.0, -raw) + (1.0 - y) * np.logaddexp(0.0, raw)


def loss_gradient(y, raw, loss):
    """dL/dF per example."""
    y = np.asarray(y, dtype=float)
    raw = np.asarray(raw, dtype=float)
    if LossKind.parse(loss) is LossKind.SQUARED:
        return raw - y
    return sigmoid(raw) - y
