"""Gradient boosting with small neural networks as base learners.

The model is ``F(x) = f0 + nu * sum_j h_j(x)`` in raw-score space, where each
``h_j`` is a :class:`~mann.net.Network` fit to the pseudo-residuals of the
partial model before it. A holdout carved once from the training data drives
both the per-network early stopping and the per-iteration gate that decides
when to stop adding networks.
"""

import dataclasses
import hashlib
import json
import logging
import math
from typing import Optional, Sequence

import numpy as np

from mann import metrics
from mann.data import Dataset, SplitSpec, split_indices
from mann.errors import DataError, DegenerateTargetError, InputShapeError, ModelKindError
from mann.losses import LossKind, sigmoid
from mann.net import EpochStopRule, Network, OptimizerConfig, fit_network, init_weights

log = logging.getLogger(__name__)

CONTINUED = "continued"
STOPPED_THRESHOLD = "stopped_threshold"
STOPPED_PATIENCE = "stopped_patience"
STOPPED_MAX_ITERS = "stopped_max_iters"

# raw-score clamp keeping probabilities strictly inside (0, 1)
_P_LOW = np.finfo(float).tiny
_P_HIGH = np.nextafter(1.0, 0.0)


@dataclasses.dataclass
class BoostedModel:
    f0: float
    learners: list
    nu: float
    loss: LossKind
    feature_dim: int
    meta: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        self.loss = LossKind.parse(self.loss)
        self.f0 = float(self.f0)
        self.nu = float(self.nu)
        if not 0.0 < self.nu <= 1.0:
            raise ValueError(f"nu must lie in (0, 1], got {self.nu}")
        for j, net in enumerate(self.learners):
            if net.input_dim != self.feature_dim:
                raise InputShapeError(
                    f"learner {j} expects {net.input_dim} features, "
                    f"model has {self.feature_dim}"
                )

    @property
    def n_learners(self):
        return len(self.learners)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.feature_dim:
            raise InputShapeError(
                f"expected {self.feature_dim} features, got shape {x.shape}"
            )
        return x

    def learner_outputs(self, x):
        """Matrix of individual learner outputs, shape ``(n, n_learners)``."""
        x = self._check(x)
        if not self.learners:
            return np.zeros((x.shape[0], 0))
        return np.column_stack([net.predict(x) for net in self.learners])

    def predict_raw(self, x):
        x = self._check(x)
        total = np.zeros(x.shape[0])
        for net in self.learners:
            total += net.predict(x)
        return self.f0 + self.nu * total

    def staged_predict_raw(self, x):
        """Yield raw predictions after 0, 1, ..., n_learners learners."""
        x = self._check(x)
        total = np.zeros(x.shape[0])
        yield self.f0 + self.nu * total
        for net in self.learners:
            total = total + net.predict(x)
            yield self.f0 + self.nu * total

    def predict_proba(self, x):
        if self.loss is not LossKind.LOGLOSS:
            raise ModelKindError("predict_proba needs a log-loss model")
        return np.clip(sigmoid(self.predict_raw(x)), _P_LOW, _P_HIGH)

    def predict(self, x):
        """Regression value, or class label in {0, 1} for log-loss models."""
        if self.loss is LossKind.LOGLOSS:
            return (self.predict_proba(x) >= 0.5).astype(float)
        return self.predict_raw(x)

    def truncated(self, k):
        """Model made of ``f0`` and the first ``k`` learners."""
        return dataclasses.replace(self, learners=list(self.learners[:k]),
                                   meta=dict(self.meta))

    def error(self, data: Dataset, metric=None):
        return evaluation_error(self, data.features, data.targets, metric)


def predict_raw(model: BoostedModel, x):
    return model.predict_raw(x)


def predict_proba(model: BoostedModel, x):
    return model.predict_proba(x)


def evaluation_error(model, x, y, metric=None):
    """Scalar error of ``model`` on ``(x, y)``.

    Default metric is RMSE for squared-error models and mean log-loss for
    log-loss models; ``metric`` may name any of mae/mse/rmse/logloss/error
    (error = 1 - accuracy).
    """
    metric = metric or default_metric(model.loss)
    if metric in ("mae", "mse", "rmse"):
        yhat = model.predict_raw(x) if model.loss is LossKind.SQUARED \
            else model.predict_proba(x)
        return getattr(metrics, metric)(y, yhat)
    if metric == "logloss":
        return metrics.log_loss(y, model.predict_proba(x))
    if metric == "error":
        return 1.0 - metrics.accuracy(y, model.predict_proba(x))
    raise ValueError(f"unknown metric {metric!r}")


METRICS = ("mae", "mse", "rmse", "logloss", "error")


def default_metric(loss):
    return "rmse" if LossKind.parse(loss) is LossKind.SQUARED else "logloss"


# -- configuration ------------------------------------------------------------

@dataclasses.dataclass
class TrainConfig:
    loss: LossKind = LossKind.SQUARED
    nu: float = 0.1
    max_iterations: int = 20
    epoch_cap: int = 100
    net_patience_epochs: int = 20
    gate_patience_iters: int = 3
    validation_fraction: float = 0.05
    error_threshold: float = 0.0
    hidden_layers: tuple = (8, 8, 8)
    optimizer: OptimizerConfig = dataclasses.field(
        default_factory=lambda: OptimizerConfig("adam", 0.05))
    batch_size: Optional[int] = 128
    seed: int = 0
    val_metric: Optional[str] = None
    gate_tolerance: Optional[float] = None

    def __post_init__(self):
        self.loss = LossKind.parse(self.loss)
        if self.val_metric is None:
            self.val_metric = default_metric(self.loss)
        if self.val_metric not in METRICS:
            raise ValueError(f"unknown validation metric {self.val_metric!r}")
        if self.gate_tolerance is None:
            self.gate_tolerance = 0.0 if self.loss is LossKind.SQUARED else 0.01
        if not 0.0 <= self.gate_tolerance < 1.0:
            raise ValueError("gate_tolerance must lie in [0, 1)")
        self.hidden_layers = tuple(int(h) for h in self.hidden_layers)
        if isinstance(self.optimizer, dict):
            self.optimizer = OptimizerConfig(**self.optimizer)
        if not 0.0 < self.nu <= 1.0:
            raise ValueError(f"nu must lie in (0, 1], got {self.nu}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.epoch_cap < 1:
            raise ValueError("epoch_cap must be >= 1")
        if self.net_patience_epochs < 1 or self.gate_patience_iters < 1:
            raise ValueError("patience values must be >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.error_threshold < 0:
            raise ValueError("error_threshold must be non-negative")
        if any(h < 1 for h in self.hidden_layers):
            raise ValueError("hidden layer sizes must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")

    def layer_sizes(self, feature_dim):
        return [int(feature_dim), *self.hidden_layers, 1]

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["loss"] = self.loss.value
        d["hidden_layers"] = list(self.hidden_layers)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def digest(self):
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


@dataclasses.dataclass
class IterationRecord:
    iteration: int
    val_error: float
    train_error: float
    epochs_used: int
    decision: str


@dataclasses.dataclass
class IterationTrace:
    records: list = dataclasses.field(default_factory=list)
    validation_indices: Optional[np.ndarray] = None
    initial_val_error: Optional[float] = None

    def __len__(self):
        return len(self.records)

    @property
    def val_errors(self):
        return [r.val_error for r in self.records]

    @property
    def final_decision(self):
        return self.records[-1].decision if self.records else STOPPED_THRESHOLD

    def to_list(self):
        return [dataclasses.asdict(r) for r in self.records]


# -- building blocks ------------------------------------------------------------

def _check_binary(targets):
    if not np.all((targets == 0.0) | (targets == 1.0)):
        raise DegenerateTargetError("log-loss targets must be 0 or 1")
    if targets.min() == targets.max():
        raise DegenerateTargetError(
            "log-loss targets contain a single class; the log-odds start is infinite"
        )


def init_f0(targets, loss) -> float:
    """Constant minimizing the summed loss over ``targets``.

    Mean for squared error, log-odds of the positive rate for log-loss.
    """
    targets = np.asarray(targets, dtype=float).reshape(-1)
    if targets.size == 0:
        raise DataError("cannot initialise from an empty target vector")
    if LossKind.parse(loss) is LossKind.SQUARED:
        if targets.min() == targets.max():
            return float(targets[0])
        return math.fsum(targets) / targets.size
    _check_binary(targets)
    p = float(np.mean(targets))
    return math.log(p / (1.0 - p))


def pseudo_residuals(targets, raw_scores, loss):
    """Negative loss gradient at the current raw scores."""
    targets = np.asarray(targets, dtype=float).reshape(-1)
    raw_scores = np.asarray(raw_scores, dtype=float).reshape(-1)
    if targets.shape != raw_scores.shape:
        raise InputShapeError(
            f"{targets.shape[0]} targets but {raw_scores.shape[0]} scores"
        )
    if LossKind.parse(loss) is LossKind.SQUARED:
        return targets - raw_scores
    return targets - sigmoid(raw_scores)


def gate_check(val_errors: Sequence[float], threshold: float, patience: int,
               tolerance: float = 0.0) -> str:
    """Decide after an iteration whether to keep adding networks.

    Stops when the latest validation error is at or below ``threshold``,
    otherwise when ``patience`` iterations have passed without beating the
    best error so far. With ``tolerance`` > 0 an error only counts as better
    when it undercuts the best by that relative margin.
    """
    if not val_errors:
        raise ValueError("gate_check needs at least one validation error")
    if val_errors[-1] <= threshold:
        return STOPPED_THRESHOLD
    best, best_idx = val_errors[0], 0
    for i, e in enumerate(val_errors[1:], start=1):
        if e < best * (1.0 - tolerance):
            best, best_idx = e, i
    if len(val_errors) - 1 - best_idx >= patience:
        return STOPPED_PATIENCE
    return CONTINUED


def _metric_error(y, raw, loss, metric):
    if loss is LossKind.SQUARED:
        pred = raw
    else:
        pred = np.clip(sigmoid(raw), _P_LOW, _P_HIGH)
    if metric == "logloss":
        return metrics.log_loss(y, pred)
    if metric == "error":
        return 1.0 - metrics.accuracy(y, pred)
    return getattr(metrics, metric)(y, pred)


def _zero_learner(layer_sizes, seed):
    net = init_weights(layer_sizes, seed=seed)
    net.weights[-1][:] = 0.0
    net.biases[-1][:] = 0.0
    return net


def _seeds(seed, count):
    ss = np.random.SeedSequence(seed)
    return [int(s.generate_state(1)[0]) for s in ss.spawn(count)]


def train(data: Dataset, config: TrainConfig, base: Optional[BoostedModel] = None,
          on_iteration=None):
    """Fit a boosted model; returns ``(model, trace)``.

    With ``base`` the run continues from an existing model instead of a
    constant start: residuals are taken against ``base``'s predictions and
    the returned model is ``base``'s learners followed by the new ones. If
    ``base`` already meets ``config.error_threshold`` on the holdout, no
    network is added.

    ``on_iteration(record, model)`` is called after every iteration.
    """
    n = len(data)
    if n == 0:
        raise DataError("cannot train on an empty dataset")
    loss = config.loss
    x_all = data.features
    y_all = data.targets
    if loss is LossKind.LOGLOSS:
        _check_binary(y_all)

    seeds = _seeds(config.seed, 1 + 2 * config.max_iterations)
    train_idx, val_idx = split_indices(
        n, SplitSpec(config.validation_fraction, seed=seeds[0]))
    x_tr, y_tr = x_all[train_idx], y_all[train_idx]
    x_va, y_va = x_all[val_idx], y_all[val_idx]

    if base is None:
        f0 = init_f0(y_tr, loss)
        learners = []
        feature_dim = data.n_features
        raw_tr = np.full(len(train_idx), f0)
        raw_va = np.full(len(val_idx), f0)
    else:
        if base.loss is not loss:
            raise ModelKindError(
                f"base model uses {base.loss.value}, config asks for {loss.value}"
            )
        if base.feature_dim != data.n_features:
            raise InputShapeError(
                f"base model expects {base.feature_dim} features, "
                f"data has {data.n_features}"
            )
        if not math.isclose(base.nu, config.nu):
            raise ValueError("extension must keep the base model's nu")
        f0 = base.f0
        learners = list(base.learners)
        feature_dim = base.feature_dim
        raw_tr = base.predict_raw(x_tr)
        raw_va = base.predict_raw(x_va)

    layer_sizes = config.layer_sizes(feature_dim)
    stop_rule = EpochStopRule(config.net_patience_epochs)
    trace = IterationTrace(validation_indices=val_idx)
    trace.initial_val_error = _metric_error(y_va, raw_va, loss, config.val_metric)

    def current_model():
        return BoostedModel(f0, list(learners), config.nu, loss, feature_dim)

    if base is not None and trace.initial_val_error <= config.error_threshold:
        log.info("base model already meets the error threshold; nothing added")
        return current_model(), trace

    for j in range(1, config.max_iterations + 1):
        r_tr = pseudo_residuals(y_tr, raw_tr, loss)
        r_va = pseudo_residuals(y_va, raw_va, loss)
        init_seed, shuffle_seed = seeds[2 * j - 1], seeds[2 * j]
        scale = max(1.0, float(np.max(np.abs(y_tr))))
        if np.max(np.abs(r_tr)) <= 1e-12 * scale:
            # exact minimiser of the fitting loss for all-zero residuals
            net, epochs = _zero_learner(layer_sizes, init_seed), 0
        else:
            fit = fit_network(
                init_weights(layer_sizes, seed=init_seed),
                x_tr, r_tr, (x_va, r_va),
                optimizer=config.optimizer, epoch_cap=config.epoch_cap,
                stop=stop_rule, seed=shuffle_seed, batch_size=config.batch_size,
            )
            net, epochs = fit.network, fit.epochs_used
        learners.append(net)
        raw_tr = raw_tr + config.nu * net.predict(x_tr)
        raw_va = raw_va + config.nu * net.predict(x_va)

        val_err = _metric_error(y_va, raw_va, loss, config.val_metric)
        train_err = _metric_error(y_tr, raw_tr, loss, config.val_metric)
        decision = gate_check(
            trace.val_errors + [val_err], config.error_threshold,
            config.gate_patience_iters, config.gate_tolerance,
        )
        if decision == CONTINUED and j == config.max_iterations:
            decision = STOPPED_MAX_ITERS
        record = IterationRecord(j, val_err, train_err, epochs, decision)
        trace.records.append(record)
        log.info("iteration %d: E_va=%.6g train=%.6g epochs=%d %s",
                 j, val_err, train_err, epochs, decision)
        if on_iteration is not None:
            on_iteration(record, current_model())
        if decision != CONTINUED:
            break

    model = current_model()
    model.meta = {"seed": config.seed, "config_sha256": config.digest()}
    return model, trace
