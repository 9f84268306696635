"""Multiple Additive Neural Networks: gradient boosting with small MLP learners."""

__version__ = "0.1.0"

from mann.boost import (  # noqa: E402
    BoostedModel,
    IterationTrace,
    TrainConfig,
    gate_check,
    init_f0,
    predict_proba,
    predict_raw,
    pseudo_residuals,
    train,
)
from mann.continual import (  # noqa: E402
    ContinualConfig,
    DriftReport,
    RetrainConfig,
    continual_update,
    drift_check,
    extend,
    retrain_in_place,
)
from mann.data import Dataset, SplitSpec, gen_analytical, gen_drift_pair, load_csv, split  # noqa: E402
from mann.losses import LossKind  # noqa: E402
from mann.net import Activation, Network, OptimizerConfig, fit_network, init_weights  # noqa: E402
from mann.persist import load, save  # noqa: E402

__all__ = [
    "Activation", "BoostedModel", "ContinualConfig", "Dataset", "DriftReport",
    "IterationTrace", "LossKind", "Network", "OptimizerConfig", "RetrainConfig",
    "SplitSpec", "TrainConfig", "continual_update", "drift_check", "extend",
    "fit_network", "gate_check", "gen_analytical", "gen_drift_pair", "init_f0",
    "init_weights", "load", "load_csv", "predict_proba", "predict_raw",
    "pseudo_residuals", "retrain_in_place", "save", "split", "train",
]
