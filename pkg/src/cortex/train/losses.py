"""Classification losses returning the mean loss and its gradient w.r.t. raw scores."""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from ..nn import sigmoid_array, softmax_array

LOSS_KINDS = ("categorical", "binary")


def _check_labels(labels, n, k):
    y = np.asarray(labels)
    if y.shape != (n,):
        raise ValidationError(f"expected {n} labels, got shape {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= k):
        raise ValidationError(f"labels must lie in 0..{k - 1}")
    return y.astype(np.intp)


def cross_entropy_loss(scores, labels, loss_kind: str = "categorical", class_weights=None):
    """``categorical``: softmax then mean negative log-likelihood.
    ``binary``: sigmoid per output, binary cross-entropy against one-hot targets,
    averaged over examples and classes.

    ``class_weights`` (one per class) weights each example by its true class;
    the mean is then taken over the summed weights.
    """
    z = np.asarray(getattr(scores, "array", scores))
    if z.ndim != 2:
        raise ValidationError(f"scores must be [N, K], got {z.shape}")
    n, k = z.shape
    y = _check_labels(labels, n, k)
    w = np.ones(n, dtype=np.float64) if class_weights is None else np.asarray(class_weights, np.float64)[y]
    wsum = w.sum()
    z64 = z.astype(np.float64)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), y] = 1.0
    if loss_kind == "categorical":
        top = z64.argmax(axis=1)
        shifted = z64 - z64[np.arange(n), top][:, None]
        # log-sum-exp as log1p over the non-maximal terms: stays accurate when the loss is ~1e-15
        rest = np.exp(shifted)
        rest[np.arange(n), top] = 0.0
        logsum = np.log1p(rest.sum(axis=1))
        nll = logsum - shifted[np.arange(n), y]
        loss = float((w * nll).sum() / wsum)
        grad = (softmax_array(z64) - onehot) * (w / wsum)[:, None]
    elif loss_kind == "binary":
        per = np.maximum(z64, 0) - z64 * onehot + np.log1p(np.exp(-np.abs(z64)))
        loss = float((w[:, None] * per).sum() / (wsum * k))
        grad = (sigmoid_array(z64) - onehot) * (w / (wsum * k))[:, None]
    else:
        raise ValidationError(f"unknown loss kind {loss_kind!r}")
    return loss, grad.astype(z.dtype)


def inverse_frequency_weights(labels, n_classes: int) -> np.ndarray:
    counts = np.bincount(np.asarray(labels, dtype=np.intp), minlength=n_classes).astype(np.float64)
    weights = np.zeros(n_classes)
    present = counts > 0
    weights[present] = counts.sum() / (present.sum() * counts[present])
    return weights
