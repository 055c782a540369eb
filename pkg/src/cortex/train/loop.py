"""Seeded mini-batch training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .._threads import blas_threads
from ..errors import NonFiniteError, ValidationError
from ..metrics import CurveLog, EpochRecord, confusion, predict_class, report
from .config import TrainConfig
from .losses import cross_entropy_loss, inverse_frequency_weights
from .model import Model
from .optim import clip_by_global_norm, optimizer_step

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    model: Model
    records: list = field(default_factory=list)
    steps: int = 0


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    """Shuffle for one epoch, derived only from ``(seed, epoch)``."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def evaluate_model(model: Model, dataset, batch_size: int = 32):
    scores = model.scores(dataset.images, batch_size)
    pred = predict_class(scores)
    return report(confusion(dataset.labels, pred, n_classes=model.n_outputs))


def train(model: Model, train_set, config: TrainConfig, metrics_sink=None, eval_set=None) -> TrainResult:
    """Train ``model`` in place.

    Each epoch appends an :class:`EpochRecord` with the example-weighted mean
    loss and the running accuracy over the epoch's batches (both measured
    before each batch's update) to ``metrics_sink``.
    """
    config.validate()
    n = len(train_set)
    if n == 0:
        raise ValidationError("training set is empty")
    labels = np.asarray(train_set.labels, dtype=np.intp)
    k = model.n_outputs
    if labels.min() < 0 or labels.max() >= k:
        raise ValidationError(f"training labels must lie in 0..{k - 1}")
    loss_kind = config.loss_for(model.head_mode)
    weights = inverse_frequency_weights(labels, k) if config.class_weights else None
    sink = metrics_sink if metrics_sink is not None else CurveLog()
    images = train_set.images
    dtype = model.dtype

    keys = [(i, name) for i, name, _ in model.parameters()]
    state: dict = {}
    result = TrainResult(model)
    with blas_threads(pinned=config.determinism):
        for epoch in range(1, config.epochs + 1):
            order = epoch_order(n, config.seed, epoch)
            loss_sum = 0.0
            correct = 0
            for b, start in enumerate(range(0, n, config.batch_size)):
                idx = order[start : start + config.batch_size]
                x = images[idx].astype(dtype, copy=False)
                y = labels[idx]
                scores, caches = model.forward_train(x)
                loss, d_scores = cross_entropy_loss(scores, y, loss_kind, weights)
                if not np.isfinite(loss):
                    raise NonFiniteError(f"non-finite loss at epoch {epoch}, batch {b}")
                grads = model.backward(caches, d_scores)
                del caches
                if config.clip_norm is not None:
                    grads = clip_by_global_norm(grads, config.clip_norm)
                params = {key: getattr(model.layers[key[0]], key[1]).array for key in keys}
                try:
                    new_params, state = optimizer_step(params, grads, state, config)
                except NonFiniteError as exc:
                    raise NonFiniteError(f"{exc} at epoch {epoch}, batch {b}") from exc
                for key in keys:
                    model.set_parameter(key[0], key[1], new_params[key])
                loss_sum += loss * len(idx)
                correct += int((predict_class(scores) == y).sum())
                result.steps += 1
            rec = EpochRecord(epoch, loss_sum / n, correct / n)
            if eval_set is not None and len(eval_set):
                ev = evaluate_model(model, eval_set, config.batch_size)
                rec.eval_accuracy = ev.accuracy
                rec.eval_macro_precision = ev.macro_precision
            sink.append(rec)
            result.records.append(rec)
            log.info("epoch %d loss %.6f accuracy %.4f", epoch, rec.train_loss, rec.train_accuracy)
    return result
