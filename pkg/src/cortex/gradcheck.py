"""Central finite-difference checks for every backward pass.

Each check builds a small random problem in double precision, scalarizes
the layer output against a fixed random projection, and compares the
analytic gradient with ``(f(x + eps) - f(x - eps)) / (2 eps)`` coordinate by
coordinate. Evaluation points are redrawn until they sit at least
``KINK_MARGIN`` away from relu zeros and max-pool ties.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .tensor import Tensor

EPS = 1e-5
TOLERANCE = 1e-4
KINK_MARGIN = 1e-3
# keeps the ratio meaningful when both gradients are ~0
REL_FLOOR = 1e-6

GROUPS = ("conv", "pool", "dense", "activations", "loss", "model")


@dataclass
class CheckResult:
    name: str
    group: str
    max_rel_error: float
    worst: str
    checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= TOLERANCE


def relative_error(analytic, numeric) -> np.ndarray:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), REL_FLOOR)


def numeric_gradient(f, x: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Central differences of scalar ``f`` w.r.t. every element of ``x`` (perturbed in place)."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f()
        flat[i] = orig - eps
        lo = f()
        flat[i] = orig
        g[i] = (hi - lo) / (2 * eps)
    return grad


def _compare(name, group, pairs) -> CheckResult:
    """``pairs`` is a list of ``(label, analytic, numeric)``."""
    worst_err, worst_at, count = 0.0, "-", 0
    for label, analytic, numeric in pairs:
        err = relative_error(analytic, numeric)
        count += err.size
        if err.size and err.max() >= worst_err:
            k = int(np.argmax(err))
            worst_err = float(err.reshape(-1)[k])
            worst_at = f"{label}{[int(i) for i in np.unravel_index(k, err.shape)]}"
    return CheckResult(name, group, worst_err, worst_at, count)


def _away_from_zero(rng, shape, low=-1.0, high=1.0):
    x = rng.uniform(low, high, size=shape)
    small = np.abs(x) < KINK_MARGIN
    x[small] = np.where(x[small] >= 0, 1.0, -1.0) * rng.uniform(0.1, 1.0, size=small.sum())
    return x


def check_conv(rng) -> CheckResult:
    x = rng.uniform(-1, 1, size=(2, 2, 5, 6))
    w = rng.uniform(-1, 1, size=(3, 2, 3, 3))
    b = rng.uniform(-1, 1, size=3)
    proj = rng.uniform(-1, 1, size=(2, 3, 3, 4))

    def loss():
        layer = nn.Conv2DLayer(Tensor(w), Tensor(b), None)
        return float((nn.conv2d_forward(x, layer, method="direct").array * proj).sum())

    g = nn.conv2d_backward(x, nn.Conv2DLayer(Tensor(w), Tensor(b), None), proj)
    return _compare(
        "conv2d",
        "conv",
        [
            ("d_input", g.d_input.array, numeric_gradient(loss, x)),
            ("d_weights", g.d_weights.array, numeric_gradient(loss, w)),
            ("d_bias", g.d_bias.array, numeric_gradient(loss, b)),
        ],
    )


def check_pool(rng) -> CheckResult:
    shape = (2, 2, 5, 7)
    size = int(np.prod(shape))
    # distinct values spaced 1e-2 apart, so no window has a near tie
    x = (rng.permutation(size) * 1e-2 + rng.uniform(0, 1e-3, size)).reshape(shape) - size * 5e-3
    out, idx = nn.maxpool2d_forward(x)
    proj = rng.uniform(-1, 1, size=out.shape)
    analytic = nn.maxpool2d_backward(idx, proj).array

    def loss():
        return float((nn.maxpool2d_forward(x)[0].array * proj).sum())

    return _compare("maxpool2d", "pool", [("d_input", analytic, numeric_gradient(loss, x))])


def check_dense(rng) -> CheckResult:
    x = rng.uniform(-1, 1, size=(3, 5))
    w = rng.uniform(-1, 1, size=(5, 4))
    b = rng.uniform(-1, 1, size=4)
    proj = rng.uniform(-1, 1, size=(3, 4))

    def loss():
        return float((nn.dense_forward(x, nn.DenseLayer(Tensor(w), Tensor(b), None)).array * proj).sum())

    g = nn.dense_backward(x, nn.DenseLayer(Tensor(w), Tensor(b), None), proj)
    return _compare(
        "dense",
        "dense",
        [
            ("d_input", g.d_input.array, numeric_gradient(loss, x)),
            ("d_weights", g.d_weights.array, numeric_gradient(loss, w)),
            ("d_bias", g.d_bias.array, numeric_gradient(loss, b)),
        ],
    )


def check_relu(rng) -> CheckResult:
    x = _away_from_zero(rng, (3, 7))
    proj = rng.uniform(-1, 1, size=x.shape)
    analytic = nn.relu_backward(x, proj).array
    numeric = numeric_gradient(lambda: float((nn.relu(x).array * proj).sum()), x)
    return _compare("relu", "activations", [("d_input", analytic, numeric)])


def check_sigmoid(rng) -> CheckResult:
    x = rng.uniform(-5, 5, size=(3, 7))
    proj = rng.uniform(-1, 1, size=x.shape)
    analytic = nn.sigmoid_backward(nn.sigmoid(x), proj).array
    numeric = numeric_gradient(lambda: float((nn.sigmoid(x).array * proj).sum()), x)
    return _compare("sigmoid", "activations", [("d_input", analytic, numeric)])


def check_losses(rng) -> list[CheckResult]:
    from .train.losses import cross_entropy_loss

    results = []
    for kind in ("categorical", "binary"):
        z = rng.uniform(-3, 3, size=(3, 4))
        y = rng.integers(0, 4, size=3)
        _, analytic = cross_entropy_loss(z, y, kind)
        numeric = numeric_gradient(lambda: cross_entropy_loss(z, y, kind)[0], z)
        results.append(_compare(f"{kind}_cross_entropy", "loss", [("d_scores", analytic, numeric)]))
    return results


def tiny_model(rng):
    """Two conv stages, one pool and two dense layers on a 1x8x8 input, float64."""
    from .train.model import Model

    layers = [
        nn.Conv2DLayer(Tensor(rng.uniform(-1, 1, (2, 1, 3, 3))), Tensor(rng.uniform(-0.5, 0.5, 2)), "relu"),
        nn.MaxPool2DLayer(),
        nn.Conv2DLayer(Tensor(rng.uniform(-1, 1, (3, 2, 3, 3))), Tensor(rng.uniform(-0.5, 0.5, 3)), "relu"),
        nn.FlattenLayer(),
        nn.DenseLayer(Tensor(rng.uniform(-1, 1, (3, 5))), Tensor(rng.uniform(-0.5, 0.5, 5)), "relu"),
        nn.DenseLayer(Tensor(rng.uniform(-1, 1, (5, 4))), Tensor(rng.uniform(-0.5, 0.5, 4)), None),
    ]
    return Model(layers, "softmax", (1, 8, 8))


def _kink_free(model, caches) -> bool:
    for layer, cache in zip(model.layers, caches):
        if layer.activation == "relu" and "z" in cache and np.abs(cache["z"]).min() < KINK_MARGIN:
            return False
        if layer.kind == "maxpool2d":
            x = cache["x"]
            n, c, h, w = x.shape
            win = x[:, :, : h // 2 * 2, : w // 2 * 2].reshape(n, c, h // 2, 2, w // 2, 2)
            win = np.sort(win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4), axis=-1)
            live = win[..., -1] > 0
            if np.any((win[..., -1] - win[..., -2])[live] < KINK_MARGIN):
                return False
    return True


def check_model(rng, attempts: int = 200) -> CheckResult:
    from .train.losses import cross_entropy_loss

    for _ in range(attempts):
        model = tiny_model(rng)
        x = rng.uniform(-1, 1, size=(2, 1, 8, 8))
        y = rng.integers(0, 4, size=2)
        scores, caches = model.forward_train(x)
        if _kink_free(model, caches):
            break
    else:
        raise RuntimeError("could not draw a kink-free evaluation point")
    _, d_scores = cross_entropy_loss(scores, y, "categorical")
    grads = model.backward(caches, d_scores)

    # mutable copies the finite-difference loop can perturb in place
    arrays = {(i, name): t.numpy() for i, name, t in model.parameters()}

    def loss():
        for (i, name), arr in arrays.items():
            object.__setattr__(model.layers[i], name, Tensor.wrap(arr.copy()))
        return cross_entropy_loss(model.forward_train(x)[0], y, "categorical")[0]

    pairs = [(f"layer{i}.{name}", grads[(i, name)], numeric_gradient(loss, arr)) for (i, name), arr in arrays.items()]
    return _compare("tiny_model", "model", pairs)


def run_checks(seed: int = 1, group: str = "all") -> list[CheckResult]:
    if group != "all" and group not in GROUPS:
        raise ValueError(f"unknown gradcheck group {group!r}")
    rng = np.random.default_rng(seed)
    results = []
    selected = GROUPS if group == "all" else (group,)
    # draw every problem regardless of selection so a group's numbers do not depend on the filter
    plan = [
        ("conv", lambda: [check_conv(rng)]),
        ("pool", lambda: [check_pool(rng)]),
        ("dense", lambda: [check_dense(rng)]),
        ("activations", lambda: [check_relu(rng), check_sigmoid(rng)]),
        ("loss", lambda: check_losses(rng)),
        ("model", lambda: [check_model(rng)]),
    ]
    for name, fn in plan:
        out = fn()
        if name in selected:
            results.extend(out)
    return results


def format_table(results) -> str:
    lines = [f"{'check':<26}{'group':<13}{'max_rel_error':>15}  {'n':>5}  worst"]
    for r in results:
        lines.append(f"{r.name:<26}{r.group:<13}{r.max_rel_error:>15.3e}  {r.checked:>5}  {r.worst}")
    return "\n".join(lines)
