"""Class-weighted BCE training with gradient accumulation, plateau
scheduling, and best-validation checkpointing.

Gradients are accumulated frame by frame in a fixed order and scaled once
per optimizer step, so accumulating 16 micro-batches of 32 frames is
bit-identical to one pass over the concatenated 512-frame batch.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .audio import apply_normalization, fit_normalization
from .data import FrameRecord
from .evaluation import f1_score
from .model import ContactNet, ModelConfig
from .optim import Adam, ReduceOnPlateau
from .tensor import Tape, Tensor

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-7


class TrainingDivergedError(RuntimeError):
    """Loss went non-finite; message carries the diagnostic dump."""


def class_weights(labels) -> tuple[float, float]:
    """Inverse-frequency weights over one training batch's vertices:
    w1 = N/(2*sum(y)), w0 = N/(2*sum(1-y)). Single-class batches fall back
    to (1, 1) with a warning."""
    y = np.asarray(labels).reshape(-1)
    if y.size == 0:
        raise ValueError("class weights need a non-empty batch")
    n = y.size
    pos = float(y.sum())
    if pos == 0.0 or pos == n:
        logger.warning("single-class batch (positives=%d of %d); class weights fall back to (1, 1)", int(pos), n)
        return 1.0, 1.0
    return n / (2.0 * pos), n / (2.0 * (n - pos))


def weighted_bce(yhat, y, w1: float = 1.0, w0: float = 1.0) -> Tensor:
    """Mean weighted binary cross-entropy over a probability vector.

    Probabilities are clamped to [1e-7, 1 - 1e-7] before the logs.
    """
    yhat = yhat if isinstance(yhat, Tensor) else Tensor(np.asarray(yhat))
    y = np.asarray(y, dtype=yhat.dtype)
    if y.shape != yhat.shape:
        raise ValueError(f"prediction shape {yhat.shape} != label shape {y.shape}")
    return T.mul(_weighted_bce_sum(yhat, y, w1, w0), 1.0 / y.size)


def _weighted_bce_sum(yhat: Tensor, y: np.ndarray, w1: float, w0: float) -> Tensor:
    p = T.clamp(yhat, PROB_FLOOR, 1.0 - PROB_FLOOR)
    pos = T.mul(T.log(p), w1 * y)
    negm = T.mul(T.log(T.sub(1.0, p)), w0 * (1.0 - y))
    return T.neg(T.tensor_sum(T.add(pos, negm)))


@dataclass
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 32
    accumulation: int = 16  # effective batch = batch_size * accumulation
    epochs: int = 20
    scheduler_factor: float = 0.5
    scheduler_patience: int = 5
    dropout: float = 0.25
    seed: int = 0
    threshold: float = 0.5
    early_stop_train_f1: float | None = None
    ablation: str = "none"

    @property
    def effective_batch(self) -> int:
        return self.batch_size * self.accumulation


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    train_f1: float | None = None
    seconds: float = 0.0


@dataclass
class TrainResult:
    model: ContactNet
    history: list
    best_val_loss: float
    best_params: dict
    stats: object  # NormalizationStats
    stopped_early: bool = False


def accumulate_gradients(model: ContactNet, frames: list, specs: np.ndarray,
                         w1: float, w0: float, rng,
                         grads: dict | None = None) -> tuple[dict, float]:
    """Sequential per-frame backward passes; gradient sums and loss sum.

    The per-frame unit is atomic, so any micro-batch grouping of the same
    frame sequence accumulates bit-identically.
    """
    if grads is None:
        grads = {k: np.zeros_like(p.data) for k, p in model.params.items()}
    loss_sum = 0.0
    for frame, spec in zip(frames, specs):
        with Tape() as tape:
            yhat, _ = model.forward(frame.vertices, spec, training=True, rng=rng)
            loss = _weighted_bce_sum(yhat, frame.labels.astype(model.dtype), w1, w0)
        tape.backward(loss)
        loss_sum += float(loss.data)
        for name, p in model.params.items():
            if p.grad is not None:
                grads[name] += p.grad
                p.grad = None
    return grads, loss_sum


def _split_loss(model: ContactNet, frames: list, specs: np.ndarray, w1: float, w0: float) -> float:
    total = 0.0
    n = 0
    with T.no_grad():
        for frame, spec in zip(frames, specs):
            yhat, _ = model.forward(frame.vertices, spec, training=False)
            total += float(_weighted_bce_sum(yhat, frame.labels.astype(model.dtype), w1, w0).data)
            n += len(frame.labels)
    return total / max(n, 1)


def _train_f1(model: ContactNet, frames: list, specs: np.ndarray, threshold: float) -> float:
    scores = []
    for frame, spec in zip(frames, specs):
        yhat = model.predict(frame.vertices, spec)
        _, _, f1 = f1_score(yhat >= threshold, frame.contact_mask)
        scores.append(f1)
    return float(np.mean(scores)) if scores else float("nan")


def train(model: ContactNet, train_frames: list, val_frames: list,
          config: TrainConfig) -> TrainResult:
    """Run the optimization loop; returns the best-validation parameters.

    Class weights are computed over each effective (accumulated) batch; the
    plateau scheduler steps once per epoch on validation loss (train loss
    when the validation split is empty, with a warning).
    """
    if not train_frames:
        raise ValueError("training split is empty")
    stats = fit_normalization(np.stack([f.spectrogram for f in train_frames]))
    train_specs = np.stack([apply_normalization(f.spectrogram, stats) for f in train_frames])
    val_specs = (np.stack([apply_normalization(f.spectrogram, stats) for f in val_frames])
                 if val_frames else np.zeros((0,)))
    if not val_frames:
        logger.warning("validation split is empty; scheduler will follow training loss")

    seq = np.random.SeedSequence(config.seed)
    shuffle_rng, dropout_rng = [np.random.default_rng(s) for s in seq.spawn(2)]
    optimizer = Adam(model.params, lr=config.lr)
    scheduler = ReduceOnPlateau(config.lr, factor=config.scheduler_factor,
                                patience=config.scheduler_patience)
    val_w = class_weights(np.concatenate([f.labels for f in val_frames])) if val_frames else (1.0, 1.0)

    history: list[EpochStats] = []
    best_val = float("inf")
    best_params = {k: p.data.copy() for k, p in model.params.items()}
    stopped_early = False
    order = np.arange(len(train_frames))

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        shuffle_rng.shuffle(order)
        epoch_loss = 0.0
        epoch_vertices = 0
        for start in range(0, len(order), config.effective_batch):
            idx = order[start: start + config.effective_batch]
            batch = [train_frames[i] for i in idx]
            specs = train_specs[idx]
            labels = np.concatenate([f.labels for f in batch])
            w1, w0 = class_weights(labels)
            grads, loss_sum = accumulate_gradients(model, batch, specs, w1, w0, dropout_rng)
            n_vertices = labels.size
            scaled = {k: g / n_vertices for k, g in grads.items()}
            if not np.isfinite(loss_sum):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch starting {start} "
                    f"(lr={optimizer.lr}, w1={w1:.4f}, w0={w0:.4f})")
            optimizer.step(scaled)
            epoch_loss += loss_sum
            epoch_vertices += n_vertices

        train_loss = epoch_loss / max(epoch_vertices, 1)
        val_loss = (_split_loss(model, val_frames, val_specs, *val_w)
                    if val_frames else train_loss)
        optimizer.lr = scheduler.step(val_loss)

        train_f1 = None
        if config.early_stop_train_f1 is not None:
            train_f1 = _train_f1(model, train_frames, train_specs, config.threshold)
        history.append(EpochStats(epoch, train_loss, val_loss, optimizer.lr, train_f1,
                                  time.perf_counter() - t0))
        logger.info("epoch %d: train %.5f val %.5f lr %.2e%s", epoch, train_loss, val_loss,
                    optimizer.lr, f" trainF1 {train_f1:.3f}" if train_f1 is not None else "")

        if val_loss < best_val:
            best_val = val_loss
            best_params = {k: p.data.copy() for k, p in model.params.items()}
        if config.early_stop_train_f1 is not None and train_f1 is not None \
                and train_f1 >= config.early_stop_train_f1:
            stopped_early = True
            break

    if not val_frames:
        best_params = {k: p.data.copy() for k, p in model.params.items()}
        best_val = history[-1].train_loss if history else float("inf")
    return TrainResult(model=model, history=history, best_val_loss=best_val,
                       best_params=best_params, stats=stats, stopped_early=stopped_early)
