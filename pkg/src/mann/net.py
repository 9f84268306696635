"""Shallow dense networks used as boosting base learners.

Everything here is plain numpy: forward pass, backpropagation, SGD/Adam
updates and a full-batch training loop with per-epoch early stopping.
Weight matrices are stored ``(out, in)``, so a layer computes
``a @ W.T + b`` on row-major activations.
"""

import copy
import dataclasses
import enum
import math
from typing import NamedTuple, Optional, Sequence

import numpy as np

from mann.errors import InputShapeError, NumericError, TrainingDivergedError
from mann.losses import LossKind, loss_gradient, loss_values, sigmoid

DIVERGENCE_FACTOR = 1e6


class Activation(str, enum.Enum):
    SIGMOID = "sigmoid"
    IDENTITY = "identity"

    def __call__(self, z):
        if self is Activation.SIGMOID:
            return sigmoid(z)
        return z

    def derivative_from_output(self, a):
        """Derivative expressed through the activation's own output."""
        if self is Activation.SIGMOID:
            return a * (1.0 - a)
        return np.ones_like(a)


@dataclasses.dataclass
class Gradients:
    weights: list
    biases: list

    def flat(self):
        return np.concatenate(
            [w.ravel() for w in self.weights] + [b.ravel() for b in self.biases]
        )


@dataclasses.dataclass
class Network:
    layer_sizes: list
    weights: list
    biases: list
    hidden_activation: Activation = Activation.SIGMOID
    output_activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        self.hidden_activation = Activation(self.hidden_activation)
        self.output_activation = Activation(self.output_activation)
        self.validate()

    def validate(self):
        sizes = self.layer_sizes
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise InputShapeError(f"invalid layer sizes {sizes}")
        if sizes[-1] != 1:
            raise InputShapeError(f"last layer must have size 1, got {sizes[-1]}")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise InputShapeError(
                f"expected {len(sizes) - 1} weight/bias pairs, "
                f"got {len(self.weights)}/{len(self.biases)}"
            )
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[k + 1], sizes[k]):
                raise InputShapeError(
                    f"layer {k}: weight shape {w.shape}, "
                    f"expected {(sizes[k + 1], sizes[k])}"
                )
            if b.shape != (sizes[k + 1],):
                raise InputShapeError(
                    f"layer {k}: bias shape {b.shape}, expected {(sizes[k + 1],)}"
                )

    @property
    def input_dim(self):
        return self.layer_sizes[0]

    @property
    def n_layers(self):
        return len(self.weights)

    def parameters(self):
        return self.weights + self.biases

    def copy(self):
        return copy.deepcopy(self)

    def is_finite(self):
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    def _check_input(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise InputShapeError(
                f"expected input with {self.input_dim} features, got shape {x.shape}"
            )
        return x

    def _activations(self, x):
        acts = [x]
        a = x
        last = self.n_layers - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            act = self.output_activation if k == last else self.hidden_activation
            a = act(z)
            if not np.all(np.isfinite(a)):
                raise NumericError(f"non-finite activation in layer {k}", layer=k)
            acts.append(a)
        return acts

    def predict(self, x):
        """Outputs for a feature matrix, shape ``(n,)``."""
        x = self._check_input(x)
        return self._activations(x)[-1][:, 0]

    def forward(self, x):
        """Scalar output for one feature vector."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise InputShapeError(f"expected a 1-D feature vector, got shape {x.shape}")
        return float(self.predict(x[None, :])[0])

    def gradients(self, x, targets, loss=LossKind.SQUARED):
        """Mean gradient of the loss over the rows of ``x``.

        Returns ``(Gradients, mean_loss)``.
        """
        x = self._check_input(x)
        targets = np.asarray(targets, dtype=float).reshape(-1)
        if targets.shape[0] != x.shape[0]:
            raise InputShapeError(
                f"{x.shape[0]} rows but {targets.shape[0]} targets"
            )
        n = x.shape[0]
        acts = self._activations(x)
        out = acts[-1][:, 0]
        mean_loss = float(np.mean(loss_values(targets, out, loss)))

        delta = loss_gradient(targets, out, loss)[:, None] / n
        delta = delta * self.output_activation.derivative_from_output(acts[-1])
        grad_w = [None] * self.n_layers
        grad_b = [None] * self.n_layers
        for k in range(self.n_layers - 1, -1, -1):
            grad_w[k] = delta.T @ acts[k]
            grad_b[k] = delta.sum(axis=0)
            if not (np.all(np.isfinite(grad_w[k])) and np.all(np.isfinite(grad_b[k]))):
                raise NumericError(f"non-finite gradient in layer {k}", layer=k)
            if k > 0:
                delta = (delta @ self.weights[k]) * \
                    self.hidden_activation.derivative_from_output(acts[k])
        return Gradients(grad_w, grad_b), mean_loss

    def backward(self, x, target, loss=LossKind.SQUARED):
        """Gradient of the single-example loss at feature vector ``x``."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise InputShapeError(f"expected a 1-D feature vector, got shape {x.shape}")
        grads, _ = self.gradients(x[None, :], [target], loss)
        return grads


def init_weights(layer_sizes, activation=Activation.SIGMOID, seed=None,
                 output_activation=Activation.IDENTITY):
    """Glorot-uniform weights, zero biases, reproducible for a fixed seed."""
    rng = np.random.default_rng(seed)
    sizes = [int(s) for s in layer_sizes]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Network(sizes, weights, biases, activation, output_activation)


# -- optimizers -------------------------------------------------------------

class SGD:
    """Plain (optionally momentum) gradient descent."""

    def __init__(self, step_size=0.01, momentum=0.0):
        if step_size <= 0:
            raise ValueError("step_size must be positive")
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        self.step_size = step_size
        self.momentum = momentum
        self.velocity = None

    def step(self, params, grads):
        if self.momentum == 0.0:
            for p, g in zip(params, grads):
                p -= self.step_size * g
            return
        if self.velocity is None:
            self.velocity = [np.zeros_like(p) for p in params]
        for p, g, v in zip(params, grads, self.velocity):
            v *= self.momentum
            v -= self.step_size * g
            p += v


class Adam:
    def __init__(self, step_size=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        if step_size <= 0:
            raise ValueError("step_size must be positive")
        if not (0.0 < beta1 < 1.0 and 0.0 < beta2 < 1.0):
            raise ValueError("Adam betas must lie strictly between 0 and 1")
        if eps <= 0:
            raise ValueError("Adam eps must be positive")
        self.step_size = step_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.step_size * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclasses.dataclass(frozen=True)
class OptimizerConfig:
    """Settings from which a fresh stateful optimizer is built per network."""

    kind: str = "adam"
    step_size: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.0

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        # build once so invalid settings fail at construction time
        self.build()

    def build(self):
        if self.kind == "adam":
            return Adam(self.step_size, self.beta1, self.beta2, self.eps)
        return SGD(self.step_size, self.momentum)


# -- training ---------------------------------------------------------------

@dataclasses.dataclass
class EpochStopRule:
    patience_epochs: int = 10
    best_error: float = math.inf
    epochs_since_improvement: int = 0

    def __post_init__(self):
        if self.patience_epochs < 1:
            raise ValueError("patience_epochs must be >= 1")

    def update(self, error):
        """Record one epoch's validation error; True if it is a new best."""
        if error < self.best_error:
            self.best_error = error
            self.epochs_since_improvement = 0
            return True
        self.epochs_since_improvement += 1
        return False

    @property
    def should_stop(self):
        return self.epochs_since_improvement >= self.patience_epochs


class FitResult(NamedTuple):
    network: Network
    epochs_used: int
    best_epoch: int
    val_history: list
    train_history: list


def _validation_error(net, validation, loss):
    xv, tv = validation
    return float(np.mean(loss_values(tv, net.predict(xv), loss)))


def fit_network(net: Network, x, targets, validation, optimizer=None,
                epoch_cap: int = 100, stop: Optional[EpochStopRule] = None,
                seed=None, batch_size: Optional[int] = None,
                include_initial: bool = False,
                loss=LossKind.SQUARED) -> FitResult:
    """Train ``net`` on ``(x, targets)`` and return its best snapshot.

    Each epoch is one pass over the training rows, full batch unless
    ``batch_size`` is given (rows are then shuffled with ``seed``). After
    every epoch the loss on ``validation = (x_val, t_val)`` is measured and
    the parameters with the lowest value so far are kept. Training ends
    after ``epoch_cap`` epochs or when ``stop`` reports no improvement for
    its patience. With ``include_initial`` the untouched input parameters
    compete as an "epoch 0" snapshot, which warm-started retraining uses so
    it can never make the learner worse on the validation data.

    The input network is not modified.
    """
    if epoch_cap < 1:
        raise ValueError("epoch_cap must be >= 1")
    x = net._check_input(x)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    xv, tv = validation
    xv = net._check_input(xv)
    tv = np.asarray(tv, dtype=float).reshape(-1)
    if xv.shape[0] == 0:
        raise ValueError("validation set must be non-empty")
    if batch_size is not None and batch_size < 1:
        raise ValueError("batch_size must be positive")
    if stop is None:
        stop = EpochStopRule()
    else:
        stop = dataclasses.replace(stop)
    if optimizer is None:
        optimizer = OptimizerConfig()
    opt = optimizer.build() if isinstance(optimizer, OptimizerConfig) else optimizer
    rng = np.random.default_rng(seed)

    work = net.copy()
    params = work.parameters()
    n = x.shape[0]
    best = net.copy()
    best_epoch = 0
    val_history, train_history = [], []
    if include_initial:
        stop.update(_validation_error(net, (xv, tv), loss))
        stop.epochs_since_improvement = 0

    initial_loss = None
    epochs_used = 0
    for epoch in range(1, epoch_cap + 1):
        if batch_size is None or batch_size >= n:
            batches = [slice(None)]
        else:
            order = rng.permutation(n)
            batches = [order[i:i + batch_size] for i in range(0, n, batch_size)]
        epoch_loss = 0.0
        for rows in batches:
            grads, batch_loss = work.gradients(x[rows], targets[rows], loss)
            opt.step(params, grads.weights + grads.biases)
            epoch_loss += batch_loss * (n if isinstance(rows, slice) else len(rows))
        epoch_loss /= n
        if initial_loss is None:
            initial_loss = epoch_loss
        epochs_used = epoch

        try:
            val_err = _validation_error(work, (xv, tv), loss)
        except NumericError:
            val_err = math.nan
        if not math.isfinite(val_err) or not work.is_finite():
            raise TrainingDivergedError(
                f"validation error became non-finite at epoch {epoch}",
                epoch=epoch - 1, best_error=stop.best_error,
            )
        if initial_loss > 0 and epoch_loss > DIVERGENCE_FACTOR * initial_loss:
            raise TrainingDivergedError(
                f"training loss {epoch_loss:.3g} exceeded "
                f"{DIVERGENCE_FACTOR:g}x its initial value at epoch {epoch}",
                epoch=epoch, best_error=stop.best_error,
            )
        train_history.append(epoch_loss)
        val_history.append(val_err)
        if stop.update(val_err):
            best = work.copy()
            best_epoch = epoch
        if stop.should_stop:
            break

    return FitResult(best, epochs_used, best_epoch, val_history, train_history)
