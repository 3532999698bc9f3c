"""Training loop, evaluation, and loss reporting.

Training is plain mini-batch Adam with global gradient-norm clipping and
optional early stopping on validation MSE; the best-validation parameters
are restored at the end of a run.  Everything is deterministic given the
config seed: batching order, initialization (owned by the model spec), and
the optimizer state evolution.

Serialized metrics deliberately omit wall-clock timing so that two runs of
the same configuration produce byte-identical JSON; timing stays available
on the RunMetrics object for logging.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from wspnet.autodiff import Tape, Tensor, add, backward, mse
from wspnet.datasets import Dataset
from wspnet.errors import ConfigurationError, ContractError, NumericError
from wspnet.layers import Module

__all__ = [
    "METRICS_SCHEMA_VERSION",
    "TrainConfig",
    "RunMetrics",
    "Adam",
    "global_grad_norm",
    "clip_gradients",
    "normalized_loss",
    "evaluate",
    "evaluate_separated",
    "train",
    "train_separated",
]

METRICS_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and loop settings.

    ``patience`` counts consecutive epochs without validation improvement
    before stopping; 0 disables early stopping.  ``clip_norm`` bounds the
    global gradient norm; 0 disables clipping.
    """

    epochs: int = 60
    batch_size: int = 8
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 1.0
    patience: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0.0:
            raise ConfigurationError(f"learning rate must be positive, got {self.lr}")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ConfigurationError(
                f"moment decay rates must lie in [0, 1), got {self.beta1}, {self.beta2}"
            )
        if self.eps <= 0.0:
            raise ConfigurationError(f"eps must be positive, got {self.eps}")
        if self.clip_norm < 0.0:
            raise ConfigurationError(f"clip_norm must be >= 0, got {self.clip_norm}")
        if self.patience < 0 or self.patience > self.epochs:
            raise ConfigurationError(
                f"patience must lie in [0, epochs], got {self.patience} with epochs={self.epochs}"
            )
        if self.seed < 0:
            raise ConfigurationError(f"seed must be non-negative, got {self.seed}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown TrainConfig fields: {sorted(extra)}")
        return cls(**d)

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=seed)


@dataclass
class RunMetrics:
    """Loss curves and summary numbers for one training run.

    ``valid_mse[0]`` is the pre-training validation loss; ``best_epoch``
    indexes into ``valid_mse`` (0 means the initial parameters were never
    improved on).  ``to_dict``/``to_json`` omit ``wall_seconds``.
    """

    train_mse: list = field(default_factory=list)
    valid_mse: list = field(default_factory=list)
    best_epoch: int = 0
    test_mse: float | None = None
    wall_seconds: float = 0.0
    n_params: int = 0

    def best_valid_mse(self) -> float:
        return self.valid_mse[self.best_epoch]

    def to_dict(self) -> dict:
        return {
            "schema_version": METRICS_SCHEMA_VERSION,
            "train_mse": list(self.train_mse),
            "valid_mse": list(self.valid_mse),
            "best_epoch": self.best_epoch,
            "test_mse": self.test_mse,
            "n_params": self.n_params,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


class Adam:
    """Adaptive-moment optimizer over named parameters.

    A parameter whose grad is None is skipped entirely, so an optimizer
    step without gradients is a no-op.
    """

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        names = [n for n, _ in self.params]
        if len(set(names)) != len(names):
            raise ContractError(f"duplicate parameter names: {names}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros(p.shape) for n, p in self.params}
        self.v = {n: np.zeros(p.shape) for n, p in self.params}

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, p in self.params:
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def zero_grads(self) -> None:
        for _, p in self.params:
            p.zero_grad()


def global_grad_norm(params) -> float:
    total = 0.0
    for _, p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    return float(np.sqrt(total))


def clip_gradients(params, max_norm: float) -> float:
    """Scale all gradients so the global norm is at most max_norm; returns
    the pre-clip norm."""
    norm = global_grad_norm(params)
    if max_norm > 0.0 and norm > max_norm:
        scale = max_norm / norm
        for _, p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


def normalized_loss(losses) -> list:
    """Each loss divided by the largest in the list."""
    values = [float(v) for v in losses]
    if not values:
        raise ContractError("normalized_loss requires a non-empty list")
    if any(v <= 0.0 for v in values):
        raise ContractError(f"losses must be positive, got {values}")
    peak = max(values)
    return [v / peak for v in values]


def _stack(split) -> tuple[np.ndarray, np.ndarray]:
    return (
        np.stack([s.x for s in split]),
        np.stack([s.y for s in split]),
    )


def _check_model_vs_data(model, dataset: Dataset) -> None:
    if not dataset.meta.get("normalized", False) and dataset.record is None:
        raise ContractError("training expects a normalized dataset (run minmax_normalize)")
    spec = model.spec
    if spec.d_in != dataset.channels_in or spec.d_out != dataset.channels_out:
        raise ConfigurationError(
            f"model is {spec.d_in}->{spec.d_out} channels but dataset is "
            f"{dataset.channels_in}->{dataset.channels_out}"
        )


def evaluate(model, split, batch_size: int = 16) -> float:
    """Mean squared error over all samples, timesteps, and channels."""
    if not split:
        raise ContractError("evaluate requires a non-empty split")
    X, Y = _stack(split)
    total = 0.0
    count = 0
    for start in range(0, X.shape[0], batch_size):
        xb = Tensor(X[start : start + batch_size])
        pred, _ = model(xb)
        diff = pred.data - Y[start : start + batch_size]
        total += float((diff * diff).sum())
        count += diff.size
    return total / count


def evaluate_separated(model, split, batch_size: int = 16) -> dict:
    """Per-head MSE of a separated network: live, each probe, multi-level."""
    if not split:
        raise ContractError("evaluate requires a non-empty split")
    X, Y = _stack(split)
    sums: dict = {}
    count = 0
    for start in range(0, X.shape[0], batch_size):
        xb = Tensor(X[start : start + batch_size])
        yb = Y[start : start + batch_size]
        live, probes, multi, _ = model.forward_all(xb)
        count += yb.size
        for key, pred in [("live", live), ("multi", multi)] + [
            (f"probe_{name}", p) for name, p in sorted(probes.items())
        ]:
            diff = pred.data - yb
            sums[key] = sums.get(key, 0.0) + float((diff * diff).sum())
    return {k: v / count for k, v in sorted(sums.items())}


def _snapshot(params) -> dict:
    return {n: p.data.copy() for n, p in params}


def _restore(params, snap: dict) -> None:
    for n, p in params:
        p.data[...] = snap[n]


def _run_epochs(model, dataset, config, batch_loss_fn, valid_fn):
    """Shared loop: returns (train curve, valid curve, best_epoch, wall)."""
    start_time = time.perf_counter()
    params = model.parameters()
    opt = Adam(params, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    rng = np.random.default_rng(config.seed)
    X, Y = _stack(dataset.train)
    n = X.shape[0]
    valid_curve = [valid_fn()]
    train_curve = []
    best_epoch = 0
    best_value = valid_curve[0]
    best_params = _snapshot(params)
    bad_epochs = 0
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        loss_sum = 0.0
        entries = 0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start : start + config.batch_size]
            xb = Tensor(X[idx])
            yb = Tensor(Y[idx])
            with Tape():
                loss, weight = batch_loss_fn(xb, yb)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise NumericError(
                        f"non-finite training loss at epoch {epoch}, batch {b}"
                    )
                backward(loss)
            clip_gradients(params, config.clip_norm)
            opt.step()
            opt.zero_grads()
            loss_sum += value * weight
            entries += weight
        train_curve.append(loss_sum / entries)
        v = valid_fn()
        valid_curve.append(v)
        if v < best_value:
            best_value = v
            best_epoch = epoch
            best_params = _snapshot(params)
            bad_epochs = 0
        else:
            bad_epochs += 1
            if config.patience and bad_epochs >= config.patience:
                break
    _restore(params, best_params)
    wall = time.perf_counter() - start_time
    return train_curve, valid_curve, best_epoch, wall


def train(model, dataset: Dataset, config: TrainConfig) -> RunMetrics:
    """Fit a model on the training split; restores best-validation params."""
    _check_model_vs_data(model, dataset)

    def batch_loss(xb, yb):
        pred, _ = model(xb)
        return mse(pred, yb), yb.size

    def valid_value():
        return evaluate(model, dataset.valid)

    train_curve, valid_curve, best_epoch, wall = _run_epochs(
        model, dataset, config, batch_loss, valid_value
    )
    test = evaluate(model, dataset.test) if dataset.test else None
    return RunMetrics(
        train_mse=train_curve,
        valid_mse=valid_curve,
        best_epoch=best_epoch,
        test_mse=test,
        wall_seconds=wall,
        n_params=model.param_count(),
    )


def train_separated(model, dataset: Dataset, config: TrainConfig) -> RunMetrics:
    """Joint training of a separated network.

    The batch loss is the unweighted sum of the live, probe, and
    multi-level head losses; detached probe inputs keep the extractor's
    gradient identical to live-only training.  Validation (for early
    stopping) uses the same summed loss; ``test_mse`` is the live head's.
    """
    _check_model_vs_data(model, dataset)

    def batch_loss(xb, yb):
        live, probes, multi, _ = model.forward_all(xb)
        loss = mse(live, yb)
        for _, pred in sorted(probes.items()):
            loss = add(loss, mse(pred, yb))
        loss = add(loss, mse(multi, yb))
        return loss, yb.size

    def valid_value():
        per_head = evaluate_separated(model, dataset.valid)
        return sum(per_head.values())

    train_curve, valid_curve, best_epoch, wall = _run_epochs(
        model, dataset, config, batch_loss, valid_value
    )
    test = evaluate(model, dataset.test) if dataset.test else None
    return RunMetrics(
        train_mse=train_curve,
        valid_mse=valid_curve,
        best_epoch=best_epoch,
        test_mse=test,
        wall_seconds=wall,
        n_params=model.param_count(),
    )
