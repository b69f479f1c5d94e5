"""Channel-independent training loop, evaluation metrics, and repeated runs.

Runs are bit-reproducible for a fixed seed: parameter init, batch order,
and optimizer state all derive from it, and batches are sequential unless
a seeded shuffle is requested.
"""
from __future__ import annotations

import random
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .core import Window, instance_normalize
from .errors import NonFiniteLoss
from .model import Forecaster
from .promptgen import BundleBuilder


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 4
    epochs: int = 10
    weight_decay: float = 1e-4
    grad_clip: float = 1.0
    seed: int = 0
    shuffle: bool = False


@dataclass
class LossTrace:
    step_losses: list[float] = field(default_factory=list)
    epoch_means: list[float] = field(default_factory=list)
    stopped_early: bool = False


@dataclass(frozen=True)
class MetricsEntry:
    mse: float
    mae: float
    n_windows: int


@dataclass
class MetricsReport:
    """Per-run metrics with mean and best aggregation."""

    runs: list[tuple[float, float]]

    @property
    def mean_mse(self) -> float:
        return float(np.mean([r[0] for r in self.runs]))

    @property
    def mean_mae(self) -> float:
        return float(np.mean([r[1] for r in self.runs]))

    @property
    def best_mse(self) -> float:
        return float(np.min([r[0] for r in self.runs]))

    @property
    def best_mae(self) -> float:
        return float(np.min([r[1] for r in self.runs]))


def _batch_tensors(
    windows: Sequence[Window],
    dtype: torch.dtype,
) -> tuple[torch.Tensor, torch.Tensor, list]:
    """Normalize each window by its own statistics; targets share the state."""
    inputs, targets, states = [], [], []
    for w in windows:
        x, state = instance_normalize(w.input)
        y = (w.target - state.mean) / state.divisor
        inputs.append(x)
        targets.append(y)
        states.append(state)
    x_t = torch.tensor(np.stack(inputs), dtype=dtype)
    y_t = torch.tensor(np.stack(targets), dtype=dtype)
    return x_t, y_t, states


def _texts_for(builder: Optional[BundleBuilder], windows: Sequence[Window]):
    if builder is None:
        return None
    return [list(builder.for_window(w).texts()) for w in windows]


def train_run(
    model: Forecaster,
    windows: Sequence[Window],
    cfg: TrainConfig,
    bundle_builder: Optional[BundleBuilder] = None,
    wall_budget_s: Optional[float] = None,
) -> LossTrace:
    """Train for a fixed number of epochs with AdamW and MSE loss.

    There is no early stopping; `wall_budget_s` is an operational guard for
    time-boxed experiment cells, off by default. A non-finite loss aborts
    with a diagnostic naming the offending batch.
    """
    if not windows:
        raise ValueError("no training windows")
    torch.manual_seed(cfg.seed)
    dtype = next(model.parameters()).dtype
    params = model.trainable_parameters()
    optimizer = torch.optim.AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    order = list(range(len(windows)))
    rng = random.Random(cfg.seed)
    trace = LossTrace()
    started = time.monotonic()

    model.train()
    for epoch in range(cfg.epochs):
        if cfg.shuffle:
            rng.shuffle(order)
        epoch_losses = []
        for lo in range(0, len(order), cfg.batch_size):
            chunk = [windows[i] for i in order[lo:lo + cfg.batch_size]]
            x, y, _ = _batch_tensors(chunk, dtype)
            texts = _texts_for(bundle_builder, chunk)
            pred = model(x, texts)
            loss = F.mse_loss(pred, y)
            if not torch.isfinite(loss):
                starts = [w.start for w in chunk]
                raise NonFiniteLoss(
                    f"non-finite loss {loss.item()} at epoch {epoch} "
                    f"batch starting index {lo} (window starts {starts})"
                )
            optimizer.zero_grad()
            loss.backward()
            if cfg.grad_clip and cfg.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(params, cfg.grad_clip)
            optimizer.step()
            value = float(loss.item())
            trace.step_losses.append(value)
            epoch_losses.append(value)
        trace.epoch_means.append(float(np.mean(epoch_losses)))
        if wall_budget_s is not None and time.monotonic() - started > wall_budget_s:
            trace.stopped_early = True
            break
    model.eval()
    return trace


def evaluate(
    model: Forecaster,
    windows: Sequence[Window],
    bundle_builder: Optional[BundleBuilder] = None,
    scale: str = "normalized",
    batch_size: int = 16,
) -> MetricsEntry:
    """MSE/MAE over a window set, without gradients.

    Metrics default to the per-window normalized scale; `scale="denormalized"`
    inverts each window's normalization before comparing in raw units.
    """
    if scale not in ("normalized", "denormalized"):
        raise ValueError(f"unknown metrics scale {scale!r}")
    if not windows:
        raise ValueError("no evaluation windows")
    dtype = next(model.parameters()).dtype
    model.eval()
    sq_sum = 0.0
    abs_sum = 0.0
    count = 0
    with torch.no_grad():
        for lo in range(0, len(windows), batch_size):
            chunk = list(windows[lo:lo + batch_size])
            x, y, states = _batch_tensors(chunk, dtype)
            texts = _texts_for(bundle_builder, chunk)
            pred = model(x, texts)
            if scale == "denormalized":
                div = torch.tensor([s.divisor for s in states], dtype=dtype)[:, None]
                mean = torch.tensor([s.mean for s in states], dtype=dtype)[:, None]
                pred = pred * div + mean
                y = y * div + mean
            diff = (pred - y).double()
            sq_sum += float((diff ** 2).sum())
            abs_sum += float(diff.abs().sum())
            count += diff.numel()
    return MetricsEntry(mse=sq_sum / count, mae=abs_sum / count, n_windows=len(windows))


def repeat_runs(
    run_fn: Callable[[int], tuple[float, float]],
    n_runs: int = 3,
    base_seed: int = 0,
) -> MetricsReport:
    """Execute `run_fn` under distinct derived seeds; report mean and best."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    runs = [tuple(map(float, run_fn(base_seed + i))) for i in range(n_runs)]
    return MetricsReport(runs=runs)
