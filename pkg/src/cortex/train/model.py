"""Sequential model container and the brain-MRI classifier stack."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import nn
from ..errors import ShapeError, ValidationError
from ..tensor import Tensor

HEAD_MODES = ("softmax", "sigmoid")
DEFAULT_INPUT = (3, 200, 200)
N_CLASSES = 4


class Model:
    """Ordered layers plus an output head.

    The last layer always emits raw scores during training (the loss owns the
    head nonlinearity); :meth:`predict_scores` applies the head.
    """

    def __init__(self, layers: Sequence, head_mode: str = "softmax", input_shape=DEFAULT_INPUT):
        if head_mode not in HEAD_MODES:
            raise ValidationError(f"head mode must be one of {HEAD_MODES}, got {head_mode!r}")
        self.layers = list(layers)
        self.head_mode = head_mode
        self.input_shape = tuple(int(d) for d in input_shape)
        self.shapes = self._validate_chain()

    def _validate_chain(self):
        shapes = [self.input_shape]
        for i, layer in enumerate(self.layers):
            try:
                shapes.append(tuple(layer.output_shape(shapes[-1])))
            except (ShapeError, ValueError) as exc:
                raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from exc
        return shapes

    def shape_chain(self, batch: int = 1) -> list[tuple]:
        return [(batch,) + s for s in self.shapes]

    @property
    def n_outputs(self) -> int:
        return self.shapes[-1][0]

    @property
    def dtype(self):
        for layer in self.layers:
            for p in layer.params().values():
                return p.dtype
        return np.dtype(np.float32)

    def parameters(self):
        """Yield ``(layer_index, name, tensor)`` in a stable order."""
        for i, layer in enumerate(self.layers):
            for name, t in layer.params().items():
                yield i, name, t

    def set_parameter(self, index: int, name: str, value):
        layer = self.layers[index]
        old = getattr(layer, name)
        arr = np.asarray(value, dtype=old.dtype)
        if arr.shape != old.shape:
            raise ShapeError(f"parameter {index}.{name} must keep shape {old.shape}")
        setattr(layer, name, Tensor(arr))

    def parameter_count(self) -> int:
        return sum(t.size for _, _, t in self.parameters())

    def _check_input(self, x: np.ndarray):
        if x.ndim != 4 or tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(f"model expects [N, {', '.join(map(str, self.input_shape))}], got {list(x.shape)}")

    def forward_train(self, x):
        """Raw final-layer scores plus the per-layer caches for :meth:`backward`."""
        x = np.asarray(x.array if isinstance(x, Tensor) else x, dtype=self.dtype)
        self._check_input(x)
        caches = []
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x, cache = nn.layer_forward(layer, x, skip_activation=(i == last))
            caches.append(cache)
        return x, caches

    def backward(self, caches, d_scores: np.ndarray):
        """Gradients for every parameter, keyed ``(layer_index, name)``."""
        grads = {}
        up = d_scores
        for i in range(len(self.layers) - 1, -1, -1):
            up, g = nn.layer_backward(self.layers[i], caches[i], up, need_input_grad=i > 0)
            for name, t in g.items():
                grads[(i, name)] = t.array
        return grads

    def scores(self, x, batch_size: int = 32) -> np.ndarray:
        """Raw final-layer outputs, computed in chunks of ``batch_size``."""
        x = np.asarray(x.array if isinstance(x, Tensor) else x)
        outs = []
        for start in range(0, len(x), batch_size):
            chunk = x[start : start + batch_size]
            s, _ = self.forward_train(chunk)
            outs.append(s)
        if not outs:
            return np.zeros((0, self.n_outputs), dtype=self.dtype)
        return np.concatenate(outs)

    def predict_scores(self, x, batch_size: int = 32) -> np.ndarray:
        raw = self.scores(x, batch_size)
        if self.head_mode == "softmax":
            return nn.softmax_array(raw.astype(np.float64)).astype(raw.dtype)
        return nn.sigmoid_array(raw)


def mri_layers(rng, head_mode="softmax", in_channels=3, dtype=np.float32):
    """The eleven-layer stack: four conv(3x3, relu)+pool stages, flatten, dense 512 relu, dense 4."""
    layers = []
    c = in_channels
    for width in (32, 64, 128, 128):
        layers.append(nn.Conv2DLayer.init(c, width, rng, activation="relu", dtype=dtype))
        layers.append(nn.MaxPool2DLayer())
        c = width
    layers.append(nn.FlattenLayer())
    return layers


def build_mri_model(head_mode: str = "softmax", input_shape=DEFAULT_INPUT, seed: int = 0, dtype=np.float32) -> Model:
    rng = np.random.default_rng(seed)
    layers = mri_layers(rng, head_mode, input_shape[0], dtype)
    # the dense widths depend on the flattened size, so resolve the conv chain first
    flat = Model(layers, head_mode, input_shape).shapes[-1][0]
    layers.append(nn.DenseLayer.init(flat, 512, rng, activation="relu", dtype=dtype))
    head_act = "sigmoid" if head_mode == "sigmoid" else None
    layers.append(nn.DenseLayer.init(512, N_CLASSES, rng, activation=head_act, dtype=dtype))
    return Model(layers, head_mode, input_shape)
