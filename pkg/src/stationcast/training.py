"""Adam training on MSE loss, early stopping, and per-city descaled evaluation.

Training shuffles the windowed samples each epoch with a seeded generator,
logs scaled train/validation MSE per epoch, keeps the best-validation
parameter snapshot, and restores it when the patience budget runs out.
Evaluation reports one MSE per target city in the target feature's physical
units (predictions and truths are descaled first).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, no_grad
from .data import TABLE_CITY_ORDER, Scaler, WindowedSet, descale_predictions
from .errors import ConfigurationError, ContractError, DimensionError, NumericalError
from .models import ModelGraph


def mse(pred, truth) -> Tensor:
    """Mean of all squared differences (scalar, differentiable)."""
    pred, truth = ad.as_tensor(pred), ad.as_tensor(truth)
    if pred.shape != truth.shape:
        raise DimensionError(
            f"mse shapes differ: {pred.shape} vs {truth.shape}"
        )
    diff = pred - truth
    return (diff * diff).mean()


class Adam:
    """Adam optimizer with the standard bias-corrected moment estimates.

    Update per parameter: m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2;
    p <- p - lr * m_hat / (sqrt(v_hat) + eps).  A parameter with no gradient
    this step contributes g = 0 (its moments keep decaying).
    """

    def __init__(
        self,
        params,
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        if not self.params:
            raise ContractError("optimizer needs at least one parameter")
        self.lr = float(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        correct1 = 1.0 - self.beta1**self.t
        correct2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            step = (m / correct1) / (np.sqrt(v / correct2) + self.eps)
            p.data -= self.lr * step

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


@dataclass
class TrainConfig:
    """Hyperparameters of one training run."""

    lr: float = 1e-4
    batch_size: int = 16
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    stop_train_mse: Optional[float] = None

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigurationError(f"learning rate must be >= 0, got {self.lr}")
        if self.batch_size < 2:
            raise ConfigurationError(
                f"batch size must be >= 2 for batch norm, got {self.batch_size}"
            )
        if self.max_epochs < 1 or self.patience < 1:
            raise ConfigurationError("max_epochs and patience must be >= 1")


@dataclass
class TrainingLog:
    """Per-epoch scaled MSEs plus where training stopped and which epoch won."""

    entries: list[tuple[int, float, float]] = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = float("inf")
    stopped_early: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.entries)

    def to_text(self) -> str:
        lines = ["epoch,train_mse,val_mse"]
        for epoch, train, val in self.entries:
            lines.append(f"{epoch},{train!r},{val!r}")
        return "\n".join(lines) + "\n"


def _epoch_mse(model: ModelGraph, windows: WindowedSet, batch_size: int) -> float:
    """Scaled MSE over a whole set, in fixed order, infer mode, no gradients."""
    total = 0.0
    count = 0
    with no_grad():
        for start in range(0, len(windows), batch_size):
            xb = windows.inputs[start : start + batch_size]
            yb = windows.targets[start : start + batch_size]
            pred = model.forward(Tensor(xb), mode="infer")
            total += float(((pred.data - yb) ** 2).sum())
            count += yb.size
    return total / count


def train(
    model: ModelGraph,
    train_set: WindowedSet,
    val_set: Optional[WindowedSet],
    cfg: TrainConfig,
) -> TrainingLog:
    """Mini-batch Adam on MSE with early stopping on validation MSE.

    Batches that would reach batch norm with fewer than 2 samples (a trailing
    remainder of 1) are dropped.  With a validation set, the best-validation
    parameter snapshot is restored before returning; without one, training
    runs to ``max_epochs`` unless ``stop_train_mse`` is hit first.
    """
    if len(train_set) == 0:
        raise ContractError("training set is empty")
    rng = np.random.default_rng(cfg.seed)
    optimizer = Adam(
        [p for p in model.parameters() if p.requires_grad], lr=cfg.lr
    )
    log = TrainingLog()
    best_state: Optional[dict[str, np.ndarray]] = None
    stale = 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_set))
        total = 0.0
        count = 0
        for batch_index, start in enumerate(
            range(0, len(order), cfg.batch_size)
        ):
            chosen = order[start : start + cfg.batch_size]
            if len(chosen) < 2:
                continue
            xb = Tensor(train_set.inputs[chosen])
            yb = Tensor(train_set.targets[chosen])
            loss = mse(model.forward(xb, mode="train"), yb)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericalError(
                    f"non-finite training loss at epoch {epoch}, "
                    f"batch {batch_index}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += value * yb.size
            count += yb.size
        train_mse = total / count if count else float("nan")

        if val_set is not None and len(val_set) > 0:
            val_mse = _epoch_mse(model, val_set, cfg.batch_size)
            log.entries.append((epoch, train_mse, val_mse))
            if val_mse < log.best_val:
                log.best_val = val_mse
                log.best_epoch = epoch
                best_state = {
                    name: arr.copy() for name, arr in model.named_state()
                }
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    log.stopped_early = True
                    break
        else:
            log.entries.append((epoch, train_mse, float("nan")))
            if log.best_epoch == 0 or train_mse < log.best_val:
                log.best_val = train_mse
                log.best_epoch = epoch
        if cfg.stop_train_mse is not None and train_mse < cfg.stop_train_mse:
            break

    if best_state is not None:
        model.load_state(best_state)
    return log


@dataclass(frozen=True)
class EvalTable:
    """Per-city descaled MSE rows, in the fixed reporting order."""

    rows: tuple[tuple[str, float], ...]
    target_feature: str
    horizon: int

    def to_csv(self) -> str:
        lines = ["city,mse"]
        for city, value in self.rows:
            lines.append(f"{city},{value!r}")
        return "\n".join(lines) + "\n"

    def mses(self) -> dict[str, float]:
        return dict(self.rows)


def _report_order(cities: Sequence[str]) -> list[str]:
    ordered = [c for c in TABLE_CITY_ORDER if c in cities]
    ordered.extend(c for c in cities if c not in ordered)
    return ordered


def evaluate(
    model: ModelGraph,
    windows: WindowedSet,
    scaler: Scaler,
    batch_size: int = 64,
) -> EvalTable:
    """Descaled per-city MSE of the frozen model over a windowed set."""
    if len(windows) == 0:
        raise ContractError("evaluation set is empty")
    if model.cfg.n_targets != len(windows.target_cities):
        raise ConfigurationError(
            f"model predicts {model.cfg.n_targets} cities but the windows "
            f"target {len(windows.target_cities)}"
        )
    unknown = [c for c in windows.target_cities if c not in scaler.cities]
    if unknown or windows.target_feature not in scaler.features:
        raise ConfigurationError(
            f"scaler does not cover feature {windows.target_feature!r} "
            f"and cities {list(windows.target_cities)}"
        )
    cities = windows.target_cities
    totals = np.zeros(len(cities))
    with no_grad():
        for start in range(0, len(windows), batch_size):
            xb = windows.inputs[start : start + batch_size]
            yb = windows.targets[start : start + batch_size]
            pred = model.forward(Tensor(xb), mode="infer").data
            pred_raw = descale_predictions(
                pred, scaler, windows.target_feature, cities
            )
            truth_raw = descale_predictions(
                yb, scaler, windows.target_feature, cities
            )
            totals += ((pred_raw - truth_raw) ** 2).sum(axis=0)
    per_city = totals / len(windows)
    by_name = dict(zip(cities, per_city))
    rows = tuple(
        (city, float(by_name[city])) for city in _report_order(cities)
    )
    return EvalTable(rows, windows.target_feature, windows.horizon)


def prediction_series(
    model: ModelGraph,
    windows: WindowedSet,
    scaler: Scaler,
    batch_size: int = 64,
) -> dict[str, np.ndarray]:
    """Descaled (truth, prediction) pairs per target city, in sample order."""
    chunks = []
    with no_grad():
        for start in range(0, len(windows), batch_size):
            xb = windows.inputs[start : start + batch_size]
            pred = model.forward(Tensor(xb), mode="infer").data
            chunks.append(pred)
    pred = np.concatenate(chunks, axis=0) if chunks else np.zeros((0, 0))
    pred_raw = descale_predictions(
        pred, scaler, windows.target_feature, windows.target_cities
    )
    truth_raw = descale_predictions(
        windows.targets, scaler, windows.target_feature, windows.target_cities
    )
    return {
        city: np.stack([truth_raw[:, j], pred_raw[:, j]], axis=1)
        for j, city in enumerate(windows.target_cities)
    }
