"""Training configuration and its ``key = value`` text format."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from ..errors import ValidationError
from .losses import LOSS_KINDS
from .optim import OPTIMIZERS

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    # None follows the head: categorical for softmax, binary for sigmoid
    loss: Optional[str] = None
    determinism: bool = True
    clip_norm: Optional[float] = None
    class_weights: bool = False

    def validate(self) -> "TrainConfig":
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be > 0")
        if self.optimizer not in OPTIMIZERS:
            raise ValidationError(f"optimizer must be one of {OPTIMIZERS}")
        if self.loss is not None and self.loss not in LOSS_KINDS:
            raise ValidationError(f"loss must be one of {LOSS_KINDS}")
        if not 0 <= self.momentum < 1 or not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ValidationError("momentum and beta coefficients must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be > 0")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValidationError("clip_norm must be > 0")
        return self

    def loss_for(self, head_mode: str) -> str:
        if self.loss is not None:
            return self.loss
        return "binary" if head_mode == "sigmoid" else "categorical"

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                v = "none"
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:16]


def _coerce(name: str, raw: str):
    f = {f.name: f for f in fields(TrainConfig)}[name]
    kind = f.type
    text = raw.strip()
    if "Optional" in str(kind) and text.lower() in ("none", ""):
        return None
    try:
        if "bool" in str(kind):
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if "int" in str(kind):
            return int(text, 0)
        if "float" in str(kind):
            return float(text)
    except ValueError:
        raise ValidationError(f"bad value for {name}: {raw!r}") from None
    return text


def parse_config_text(text: str, base: TrainConfig | None = None) -> TrainConfig:
    known = {f.name for f in fields(TrainConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ValidationError(f"line {lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, value)
    return dataclasses.replace(base or TrainConfig(), **values).validate()


def load_config(path) -> TrainConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config_text(text)
