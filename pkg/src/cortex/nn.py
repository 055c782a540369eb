"""Differentiable layers: convolution, max pooling, flatten, dense and activations.

Layout is channels-first ``[N, C, H, W]``. Convolutions are 3x3 (any odd or
even square kernel works), stride 1, no padding. Pooling uses non-overlapping
2x2 windows and drops a trailing odd row/column.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InternalConsistencyError, ShapeError
from .tensor import Tensor

ACTIVATIONS = (None, "relu", "sigmoid", "softmax")


@dataclass
class LayerGradients:
    d_input: Optional[Tensor]
    d_weights: Optional[Tensor] = None
    d_bias: Optional[Tensor] = None


@dataclass(frozen=True)
class PoolIndices:
    """Which cell of each 2x2 window won, plus the pooled input's shape.

    ``window_pos`` holds 0..3 in row-major window order; :attr:`flat` gives
    the equivalent flat input index of every winner.
    """

    input_shape: tuple
    window_pos: np.ndarray

    @property
    def flat(self) -> np.ndarray:
        n, c, h, w = self.input_shape
        _, _, ho, wo = self.window_pos.shape
        pos = self.window_pos.astype(np.int64)
        rows = 2 * np.arange(ho).reshape(1, 1, ho, 1) + pos // 2
        cols = 2 * np.arange(wo).reshape(1, 1, 1, wo) + pos % 2
        plane = (np.arange(n).reshape(n, 1, 1, 1) * c + np.arange(c).reshape(1, c, 1, 1)) * (h * w)
        return plane + rows * w + cols


def _arr(x) -> np.ndarray:
    return x.array if isinstance(x, Tensor) else np.asarray(x)


def _uniform(rng, bound, shape, dtype):
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


# --------------------------------------------------------------------------
# parameter containers


@dataclass
class Conv2DLayer:
    weights: Tensor  # [out, in, k, k]
    bias: Tensor  # [out]
    activation: Optional[str] = "relu"
    kind = "conv2d"

    def __post_init__(self):
        w, b = self.weights.shape, self.bias.shape
        if len(w) != 4 or w[2] != w[3]:
            raise ShapeError(f"conv weights must be [out, in, k, k], got {list(w)}")
        if b != (w[0],):
            raise ShapeError(f"conv bias must be [{w[0]}], got {list(b)}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def init(cls, in_channels, out_channels, rng, kernel=3, activation="relu", dtype=np.float32):
        fan_in = in_channels * kernel * kernel
        fan_out = out_channels * kernel * kernel
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = _uniform(rng, bound, (out_channels, in_channels, kernel, kernel), dtype)
        return cls(Tensor.wrap(w), Tensor.wrap(np.zeros(out_channels, dtype)), activation)

    @property
    def in_channels(self):
        return self.weights.shape[1]

    @property
    def out_channels(self):
        return self.weights.shape[0]

    @property
    def kernel(self):
        return self.weights.shape[2]

    def params(self) -> dict:
        return {"weights": self.weights, "bias": self.bias}

    def output_shape(self, in_shape):
        c, h, w = in_shape
        k = self.kernel
        if c != self.in_channels:
            raise ShapeError(f"conv expects {self.in_channels} channels, got {c}")
        if h < k or w < k:
            raise ShapeError(f"conv needs spatial extent >= {k}, got {h}x{w}")
        return (self.out_channels, h - k + 1, w - k + 1)


@dataclass
class MaxPool2DLayer:
    window: int = 2
    kind = "maxpool2d"
    activation = None

    def __post_init__(self):
        if self.window != 2:
            raise ValueError("only 2x2 pooling with stride 2 is supported")

    def params(self) -> dict:
        return {}

    def output_shape(self, in_shape):
        c, h, w = in_shape
        if h < 2 or w < 2:
            raise ShapeError(f"max pooling needs spatial extent >= 2, got {h}x{w}")
        return (c, h // 2, w // 2)


@dataclass
class FlattenLayer:
    kind = "flatten"
    activation = None

    def params(self) -> dict:
        return {}

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)


@dataclass
class DenseLayer:
    weights: Tensor  # [in, out]
    bias: Tensor  # [out]
    activation: Optional[str] = "relu"
    kind = "dense"

    def __post_init__(self):
        w, b = self.weights.shape, self.bias.shape
        if len(w) != 2:
            raise ShapeError(f"dense weights must be rank 2, got {list(w)}")
        if b != (w[1],):
            raise ShapeError(f"dense bias must be [{w[1]}], got {list(b)}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def init(cls, in_features, out_features, rng, activation="relu", dtype=np.float32):
        bound = np.sqrt(6.0 / (in_features + out_features))
        w = _uniform(rng, bound, (in_features, out_features), dtype)
        return cls(Tensor.wrap(w), Tensor.wrap(np.zeros(out_features, dtype)), activation)

    @property
    def in_features(self):
        return self.weights.shape[0]

    @property
    def out_features(self):
        return self.weights.shape[1]

    def params(self) -> dict:
        return {"weights": self.weights, "bias": self.bias}

    def output_shape(self, in_shape):
        if in_shape != (self.in_features,):
            raise ShapeError(f"dense expects [{self.in_features}] features, got {list(in_shape)}")
        return (self.out_features,)


# --------------------------------------------------------------------------
# convolution


def _check_conv_input(x: np.ndarray, layer: Conv2DLayer):
    if x.ndim != 4:
        raise ShapeError(f"conv input must be [N, C, H, W], got {list(x.shape)}")
    layer.output_shape(x.shape[1:])


def im2col(x: np.ndarray, k: int) -> np.ndarray:
    """Channel-major patch matrix: rows are ``(c, dy, dx)``, columns ``(n, y, x)``."""
    n, c, h, w = x.shape
    ho, wo = h - k + 1, w - k + 1
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # [n, c, ho, wo, k, k]
    return win.transpose(1, 4, 5, 0, 2, 3).reshape(c * k * k, n * ho * wo)


def col2im(cols: np.ndarray, input_shape, k: int) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add patch rows back onto the input grid."""
    n, c, h, w = input_shape
    ho, wo = h - k + 1, w - k + 1
    blocks = cols.reshape(c, k, k, n, ho, wo)
    out = np.zeros((c, n, h, w), dtype=cols.dtype)
    for dy in range(k):
        for dx in range(k):
            out[:, :, dy : dy + ho, dx : dx + wo] += blocks[:, dy, dx]
    return out.transpose(1, 0, 2, 3)


def conv2d_direct(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Reference path: accumulate one shifted input slice per kernel tap."""
    n, _, h, wd = x.shape
    o, _, k, _ = w.shape
    ho, wo = h - k + 1, wd - k + 1
    dt = np.result_type(x.dtype, w.dtype)
    out = np.empty((n, o, ho, wo), dtype=dt)
    out[...] = b.reshape(1, o, 1, 1)
    for dy in range(k):
        for dx in range(k):
            patch = x[:, :, dy : dy + ho, dx : dx + wo]
            out += np.einsum("oc,nchw->nohw", w[:, :, dy, dx], patch)
    return out


def conv2d_im2col(x: np.ndarray, w: np.ndarray, b: np.ndarray, cols=None) -> np.ndarray:
    n, _, h, wd = x.shape
    o, _, k, _ = w.shape
    ho, wo = h - k + 1, wd - k + 1
    if cols is None:
        cols = im2col(x, k)
    out = w.reshape(o, -1) @ cols
    out += b.reshape(o, 1)
    return np.ascontiguousarray(out.reshape(o, n, ho, wo).transpose(1, 0, 2, 3))


def conv2d_forward(input, layer: Conv2DLayer, method: str = "im2col") -> Tensor:
    """Valid, stride-1 cross-correlation plus per-channel bias (no activation)."""
    x = _arr(input)
    _check_conv_input(x, layer)
    w, b = layer.weights.array, layer.bias.array
    if method == "direct":
        return Tensor.wrap(conv2d_direct(x, w, b))
    if method == "im2col":
        return Tensor.wrap(conv2d_im2col(x, w, b))
    raise ValueError(f"unknown convolution method {method!r}")


def conv2d_backward(input, layer: Conv2DLayer, upstream, need_input_grad=True, cols=None) -> LayerGradients:
    x = _arr(input)
    up = _arr(upstream)
    _check_conv_input(x, layer)
    n = x.shape[0]
    expected = (n,) + layer.output_shape(x.shape[1:])
    if up.shape != expected:
        raise ShapeError(f"upstream shape {list(up.shape)} does not match conv output {list(expected)}")
    w = layer.weights.array
    o, _, k, _ = w.shape
    if cols is None:
        cols = im2col(x, k)
    up2 = up.transpose(1, 0, 2, 3).reshape(o, -1)
    d_w = (up2 @ cols.T).reshape(w.shape)
    d_b = up.sum(axis=(0, 2, 3))
    d_x = None
    if need_input_grad:
        d_x = Tensor.wrap(np.ascontiguousarray(col2im(w.reshape(o, -1).T @ up2, x.shape, k)))
    return LayerGradients(d_x, Tensor.wrap(d_w.astype(w.dtype, copy=False)), Tensor.wrap(d_b.astype(w.dtype, copy=False)))


# --------------------------------------------------------------------------
# max pooling


def _window_slices(h2, w2):
    return [
        (slice(0, h2, 2), slice(0, w2, 2)),
        (slice(0, h2, 2), slice(1, w2, 2)),
        (slice(1, h2, 2), slice(0, w2, 2)),
        (slice(1, h2, 2), slice(1, w2, 2)),
    ]


def maxpool2d_forward(input) -> tuple[Tensor, PoolIndices]:
    x = _arr(input)
    if x.ndim != 4:
        raise ShapeError(f"pool input must be [N, C, H, W], got {list(x.shape)}")
    n, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"max pooling needs spatial extent >= 2, got {h}x{w}")
    quads = [x[:, :, sy, sx] for sy, sx in _window_slices(h // 2 * 2, w // 2 * 2)]
    out = np.maximum(np.maximum(quads[0], quads[1]), np.maximum(quads[2], quads[3]))
    # nested in row-major order so the first maximum wins ties
    pos = np.where(quads[0] == out, 0, np.where(quads[1] == out, 1, np.where(quads[2] == out, 2, 3)))
    pos = pos.astype(np.uint8)
    return Tensor.wrap(out), PoolIndices((n, c, h, w), pos)


def maxpool2d_backward(indices: PoolIndices, upstream) -> Tensor:
    up = _arr(upstream)
    pos = indices.window_pos
    n, c, h, w = indices.input_shape
    if up.shape != pos.shape or pos.shape != (n, c, h // 2, w // 2):
        raise ShapeError(f"upstream shape {list(up.shape)} does not match pool output {list(pos.shape)}")
    if pos.size and pos.max() > 3:
        raise InternalConsistencyError("pooling index out of range for a 2x2 window")
    d = np.zeros(indices.input_shape, dtype=up.dtype)
    for k, (sy, sx) in enumerate(_window_slices(h // 2 * 2, w // 2 * 2)):
        d[:, :, sy, sx] = np.where(pos == k, up, 0)
    return Tensor.wrap(d)


# --------------------------------------------------------------------------
# flatten / dense


def flatten(input) -> Tensor:
    x = _arr(input)
    return Tensor.wrap(x.reshape(x.shape[0], -1))


def dense_forward(input, layer: DenseLayer) -> Tensor:
    x = _arr(input)
    if x.ndim != 2 or x.shape[1] != layer.in_features:
        raise ShapeError(f"dense expects [N, {layer.in_features}], got {list(x.shape)}")
    return Tensor.wrap(x @ layer.weights.array + layer.bias.array)


def dense_backward(input, layer: DenseLayer, upstream, need_input_grad=True) -> LayerGradients:
    x, up = _arr(input), _arr(upstream)
    if x.ndim != 2 or x.shape[1] != layer.in_features:
        raise ShapeError(f"dense expects [N, {layer.in_features}], got {list(x.shape)}")
    if up.shape != (x.shape[0], layer.out_features):
        raise ShapeError(f"upstream shape {list(up.shape)} does not match dense output")
    w = layer.weights.array
    d_x = Tensor.wrap(up @ w.T) if need_input_grad else None
    return LayerGradients(d_x, Tensor.wrap(x.T @ up), Tensor.wrap(up.sum(axis=0)))


# --------------------------------------------------------------------------
# activations


def relu(input) -> Tensor:
    x = _arr(input)
    return Tensor.wrap(np.maximum(x, 0).astype(x.dtype, copy=False))


def relu_backward(input, upstream) -> Tensor:
    x, up = _arr(input), _arr(upstream)
    if x.shape != up.shape:
        raise ShapeError("relu upstream shape mismatch")
    return Tensor.wrap(np.where(x > 0, up, 0).astype(up.dtype, copy=False))


def sigmoid_array(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)


def sigmoid(input) -> Tensor:
    return Tensor.wrap(sigmoid_array(_arr(input)))


def sigmoid_backward(output, upstream) -> Tensor:
    s, up = _arr(output), _arr(upstream)
    if s.shape != up.shape:
        raise ShapeError("sigmoid upstream shape mismatch")
    return Tensor.wrap(up * s * (1 - s))


def softmax_array(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def apply_activation(name, x: np.ndarray) -> np.ndarray:
    if name is None:
        return x
    if name == "relu":
        return relu(x).array
    if name == "sigmoid":
        return sigmoid_array(x)
    if name == "softmax":
        return softmax_array(x)
    raise ValueError(f"unknown activation {name!r}")


# --------------------------------------------------------------------------
# stateless layer application used by the model


def layer_forward(layer, x: np.ndarray, skip_activation=False):
    """Return ``(output, cache)``; the cache feeds :func:`layer_backward`."""
    cache = {"x": x}
    if layer.kind == "conv2d":
        _check_conv_input(x, layer)
        cols = im2col(x, layer.kernel)
        z = conv2d_im2col(x, layer.weights.array, layer.bias.array, cols=cols)
        cache["cols"] = cols
    elif layer.kind == "dense":
        z = dense_forward(x, layer).array
    elif layer.kind == "maxpool2d":
        out, idx = maxpool2d_forward(x)
        cache["indices"] = idx
        return out.array, cache
    elif layer.kind == "flatten":
        return x.reshape(x.shape[0], -1), cache
    else:
        raise ValueError(f"unknown layer kind {layer.kind!r}")
    act = None if skip_activation else layer.activation
    if act == "relu":
        out = np.maximum(z, 0)
    elif act is None:
        out = z
    elif act == "sigmoid":
        out = sigmoid_array(z)
    else:
        raise ValueError(f"activation {act!r} is only available as a model head")
    cache["z"] = z
    cache["act"] = act
    cache["out"] = out
    return out, cache


def layer_backward(layer, cache, upstream: np.ndarray, need_input_grad=True):
    """Return ``(d_input, grads)`` with ``grads`` keyed like ``layer.params()``."""
    if layer.kind == "maxpool2d":
        return maxpool2d_backward(cache["indices"], upstream).array, {}
    if layer.kind == "flatten":
        return upstream.reshape(cache["x"].shape), {}
    act = cache["act"]
    if act == "relu":
        dz = upstream * (cache["z"] > 0)
    elif act == "sigmoid":
        s = cache["out"]
        dz = upstream * s * (1 - s)
    else:
        dz = upstream
    if layer.kind == "conv2d":
        g = conv2d_backward(cache["x"], layer, dz, need_input_grad, cols=cache["cols"])
    else:
        g = dense_backward(cache["x"], layer, dz, need_input_grad)
    d_x = g.d_input.array if g.d_input is not None else None
    return d_x, {"weights": g.d_weights, "bias": g.d_bias}
