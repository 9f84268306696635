"""Continual learning for boosted network models.

When a model meets data whose error differs from the original data's by at
least ``epsilon``, its existing learners are first warm-started on the new
data (level 1). If the gap survives, new learners fit to the residuals of
the retrained model are appended (level 2).
"""

import dataclasses
import logging
from typing import Optional

import numpy as np

from mann.boost import (
    BoostedModel, TrainConfig, default_metric, evaluation_error, pseudo_residuals, train,
)
from mann.data import Dataset, SplitSpec, split_indices
from mann.errors import IncompatibleDatasetError
from mann.net import EpochStopRule, OptimizerConfig, fit_network

log = logging.getLogger(__name__)

DEFAULT_RELATIVE_EPSILON = 0.1


@dataclasses.dataclass
class DriftReport:
    error_old: float
    error_new: float
    epsilon: float
    drifted: bool
    metric: str = "rmse"

    @property
    def gap(self):
        return abs(self.error_old - self.error_new)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclasses.dataclass
class RetrainConfig:
    """Settings for warm-start retraining of existing learners."""

    epoch_cap: int = 100
    net_patience_epochs: int = 20
    validation_fraction: float = 0.05
    optimizer: OptimizerConfig = dataclasses.field(
        default_factory=lambda: OptimizerConfig("adam", 0.05))
    batch_size: Optional[int] = 128

    @classmethod
    def from_train_config(cls, cfg: TrainConfig):
        return cls(cfg.epoch_cap, cfg.net_patience_epochs, cfg.validation_fraction,
                   cfg.optimizer, cfg.batch_size)


@dataclasses.dataclass
class ContinualConfig:
    epsilon: Optional[float] = None  # None: 10% of the error on the old data
    level1: Optional[RetrainConfig] = None
    level2: TrainConfig = dataclasses.field(default_factory=TrainConfig)
    metric: Optional[str] = None

    def __post_init__(self):
        if self.epsilon is not None and self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.level1 is None:
            self.level1 = RetrainConfig.from_train_config(self.level2)


def _check_compatible(model: BoostedModel, *datasets):
    for ds in datasets:
        if ds.n_features != model.feature_dim:
            raise IncompatibleDatasetError(
                f"dataset {ds.name!r} has {ds.n_features} features, "
                f"model expects {model.feature_dim}"
            )


def drift_check(model: BoostedModel, old_data: Dataset, new_data: Dataset,
                epsilon=None, metric=None) -> DriftReport:
    """Compare the model's error on old and new data.

    Drift is reported when ``|E_old - E_new| >= epsilon``; ``epsilon=None``
    uses 10% of ``E_old``.
    """
    _check_compatible(model, old_data, new_data)
    metric = metric or default_metric(model.loss)
    e_old = evaluation_error(model, old_data.features, old_data.targets, metric)
    e_new = evaluation_error(model, new_data.features, new_data.targets, metric)
    if epsilon is None:
        epsilon = DEFAULT_RELATIVE_EPSILON * e_old
    return DriftReport(e_old, e_new, float(epsilon),
                       abs(e_old - e_new) >= epsilon, metric)


def retrain_in_place(model: BoostedModel, new_data: Dataset, cfg: ContinualConfig,
                     seed=0) -> BoostedModel:
    """Warm-start every existing learner on residuals computed on ``new_data``.

    Learners are revisited in their original order. Each one continues from
    its current weights against the residuals of the partial model built
    from ``f0`` and the learners already retrained, under early stopping on
    a holdout of the new data. Its starting weights stay eligible as the
    best snapshot, so a learner is only replaced when the holdout improves.
    ``f0``, ``nu`` and the learner count are unchanged; ``model`` itself is
    not modified.
    """
    _check_compatible(model, new_data)
    level1 = cfg.level1
    ss = np.random.SeedSequence(seed).spawn(1 + model.n_learners)
    split_seed = int(ss[0].generate_state(1)[0])
    tr, va = split_indices(len(new_data),
                           SplitSpec(level1.validation_fraction, seed=split_seed))
    x_tr, y_tr = new_data.features[tr], new_data.targets[tr]
    x_va, y_va = new_data.features[va], new_data.targets[va]

    raw_tr = np.full(len(tr), model.f0)
    raw_va = np.full(len(va), model.f0)
    retrained = []
    for j, net in enumerate(model.learners):
        r_tr = pseudo_residuals(y_tr, raw_tr, model.loss)
        r_va = pseudo_residuals(y_va, raw_va, model.loss)
        fit = fit_network(
            net, x_tr, r_tr, (x_va, r_va),
            optimizer=level1.optimizer, epoch_cap=level1.epoch_cap,
            stop=EpochStopRule(level1.net_patience_epochs),
            seed=int(ss[j + 1].generate_state(1)[0]),
            batch_size=level1.batch_size, include_initial=True,
        )
        log.debug("retrain learner %d: best epoch %d of %d",
                  j, fit.best_epoch, fit.epochs_used)
        retrained.append(fit.network)
        raw_tr = raw_tr + model.nu * fit.network.predict(x_tr)
        raw_va = raw_va + model.nu * fit.network.predict(x_va)
    return BoostedModel(model.f0, retrained, model.nu, model.loss,
                        model.feature_dim, dict(model.meta))


def extend(model: BoostedModel, new_data: Dataset, cfg: ContinualConfig,
           seed=0) -> BoostedModel:
    """Append learners fit to the residuals of ``model`` on ``new_data``."""
    _check_compatible(model, new_data)
    level2 = dataclasses.replace(cfg.level2, loss=model.loss, nu=model.nu, seed=seed)
    combined, trace = train(new_data, level2, base=model)
    log.info("extension added %d learners (%s)",
             combined.n_learners - model.n_learners, trace.final_decision)
    return combined


@dataclasses.dataclass
class ContinualResult:
    model: BoostedModel
    initial: DriftReport
    after_retrain: Optional[DriftReport] = None
    level: int = 0  # 0 no drift, 1 retrained, 2 retrained and extended

    def __iter__(self):
        yield self.model
        yield self.initial
        yield self.after_retrain


def continual_update(model: BoostedModel, old_data: Dataset, new_data: Dataset,
                     cfg: Optional[ContinualConfig] = None, seed=0) -> ContinualResult:
    """Full drift-check / retrain / extend cycle.

    The result unpacks as ``(model, initial_report, second_report)``; the
    second report is ``None`` when no drift was found. The threshold fixed by
    the first check is reused for the second one.
    """
    cfg = cfg or ContinualConfig()
    first = drift_check(model, old_data, new_data, cfg.epsilon, cfg.metric)
    if not first.drifted:
        log.info("no drift (gap %.4g < %.4g)", first.gap, first.epsilon)
        return ContinualResult(model, first)
    retrained = retrain_in_place(model, new_data, cfg, seed)
    second = drift_check(retrained, old_data, new_data, first.epsilon, first.metric)
    if not second.drifted:
        log.info("drift resolved by retraining")
        return ContinualResult(retrained, first, second, level=1)
    log.info("drift persists after retraining (gap %.4g); extending", second.gap)
    return ContinualResult(extend(retrained, new_data, cfg, seed), first, second, level=2)
