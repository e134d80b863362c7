"""Mini-batch training with early stopping, divergence retries and evaluation."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import layers as L
from .model import ModelConfig, init_params, loss_and_grads, predict
from .optim import AdamState, adam_step, step_lr

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_size: int = 10
    gamma: float = 0.8
    batch_size: int = 64
    patience: int = 20
    max_epochs: int = 200
    seed: int = 0
    max_retries: int = 3
    dtype: str = "float32"
    stop_at_accuracy: float | None = None
    time_budget_s: float | None = None

    def __post_init__(self):
        for name in ("lr0", "eps", "step_size", "gamma", "batch_size", "patience", "max_epochs"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    def lr(self, epoch: int) -> float:
        return step_lr(epoch, self.lr0, self.step_size, self.gamma)


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stop_reason: str = ""
    retries: int = 0
    seed_used: int = 0
    seconds: float = 0.0

    @property
    def n_epochs(self) -> int:
        return len(self.train_loss)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss", "val_acc", "lr"])
            for e in range(self.n_epochs):
                w.writerow([e, repr(self.train_loss[e]), repr(self.val_loss[e]),
                            repr(self.val_acc[e]), repr(self.lr[e])])

    def summary(self) -> dict:
        d = asdict(self)
        for key in ("train_loss", "val_loss", "val_acc", "lr", "seconds"):
            d.pop(key)
        d["epochs"] = self.n_epochs
        if self.best_epoch >= 0:
            d["best_val_loss"] = self.val_loss[self.best_epoch]
            d["best_val_acc"] = self.val_acc[self.best_epoch]
        return d

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # rows: true class, columns: predicted class
    loss: float
    n: int


def evaluate(params: dict, x: np.ndarray, y: np.ndarray, config: ModelConfig,
             batch_size: int = 64) -> EvalResult:
    """Argmax accuracy, confusion counts and mean cross-entropy over ``(x, y)``."""
    if len(x) == 0:
        raise ValueError("empty evaluation set")
    logits = predict(params, x, config, batch_size)
    y = np.asarray(y)
    loss, _, _ = L.softmax_cross_entropy(logits, y)
    pred = logits.argmax(axis=1)
    conf = np.zeros((config.n_classes, config.n_classes), dtype=np.int64)
    np.add.at(conf, (y, pred), 1)
    return EvalResult(float(np.mean(pred == y)), conf, loss, len(y))


def _attempt_seed(seed: int, attempt: int) -> int:
    return int(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, attempt]).generate_state(1, np.uint64)[0])


def _run(config, tc, x_tr, y_tr, x_va, y_va, seed, report):
    dtype = np.dtype(tc.dtype)
    params = init_params(config, seed, dtype)
    state = AdamState(tc.beta1, tc.beta2, tc.eps)
    rng = np.random.default_rng(seed)
    best, best_loss, since = None, np.inf, 0
    n = len(x_tr)
    started = time.perf_counter()
    for epoch in range(tc.max_epochs):
        t0 = time.perf_counter()
        lr = tc.lr(epoch)
        order = rng.permutation(n)
        total = 0.0
        for i in range(0, n, tc.batch_size):
            idx = order[i:i + tc.batch_size]
            loss, grads = loss_and_grads(params, x_tr[idx], y_tr[idx], config)
            adam_step(params, grads, state, lr)
            total += loss * len(idx)
        res = evaluate(params, x_va, y_va, config, tc.batch_size)
        if not np.isfinite(res.loss):
            raise L.NumericFault("non-finite validation loss")
        report.train_loss.append(total / n)
        report.val_loss.append(res.loss)
        report.val_acc.append(res.accuracy)
        report.lr.append(lr)
        log.info("epoch %d lr %.3g train %.4f val %.4f acc %.4f (%.1fs)", epoch, lr, total / n,
                 res.loss, res.accuracy, time.perf_counter() - t0)
        if res.loss < best_loss:
            best_loss, since = res.loss, 0
            best = {k: v.copy() for k, v in params.items()}
            report.best_epoch = epoch
        else:
            since += 1
        if tc.stop_at_accuracy is not None and res.accuracy >= tc.stop_at_accuracy:
            report.stop_reason = "target_accuracy"
            return best
        if since >= tc.patience:
            report.stop_reason = "early_stop"
            return best
        if tc.time_budget_s is not None and time.perf_counter() - started > tc.time_budget_s:
            # wall-clock cut: results then depend on machine speed
            report.stop_reason = "time_budget"
            return best
    report.stop_reason = "max_epochs"
    return best


def train(config: ModelConfig, tc: TrainConfig, train_set, val_set):
    """Train from a seeded initialization; returns ``(best_params, report)``.

    The epoch learning rate is ``lr0 * gamma ** (epoch // step_size)``. The
    parameters with the lowest validation loss are returned. A non-finite loss
    restarts training from a fresh seed, up to ``max_retries`` times, after
    which :class:`TrainingDiverged` is raised.
    """
    x_tr, y_tr = train_set
    x_va, y_va = val_set
    if len(x_tr) == 0 or len(x_va) == 0:
        raise ValueError("training and validation sets must be non-empty")
    t_start = time.perf_counter()
    for attempt in range(tc.max_retries + 1):
        seed = tc.seed if attempt == 0 else _attempt_seed(tc.seed, attempt)
        report = TrainReport(retries=attempt, seed_used=seed)
        try:
            best = _run(config, tc, x_tr, y_tr, x_va, y_va, seed, report)
        except (L.NumericFault, FloatingPointError) as exc:
            log.warning("attempt %d diverged: %s", attempt, exc)
            report.stop_reason = "diverged"
            continue
        report.seconds = time.perf_counter() - t_start
        return best, report
    raise TrainingDiverged(f"training diverged after {tc.max_retries} retries", report)

