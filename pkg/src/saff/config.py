"""Training configuration and the plain-text ``key=value`` config format."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Any, Mapping

from .errors import ParseError, ValidationError


@dataclass
class TrainConfig:
    seed: int = 0
    # data
    n_classes: int = 5
    input_dim: int = 16
    n_per_domain: int = 600
    channels: int = 2
    noise: float = 0.7
    gamma_t: float = 2.5
    rotation_deg: float = 30.0
    shift_t: float = 0.0
    separation: float = 1.0
    # model
    depth: int = 4
    tokens: int = 8
    width: int = 32
    cls_width: int = 16
    activation: str = "tanh"
    # optimisation
    batch: int = 18
    pretrain_epochs: int = 10
    epochs: int = 10
    lr: float = 0.01
    momentum: float = 0.9
    # losses
    alpha: float = 1.0
    rate: float = 0.9
    use_ssid: bool = True
    use_ld: bool = True
    use_style: bool = True
    literal_im_sign: bool = False
    literal_style_second_term: bool = False
    literal_uprate_scope: bool = False
    # ssid
    pre_normalize: bool = True
    detach_stats: bool = True
    epsilon: float = 1e-5
    # paths
    source: str = ""
    target: str = ""
    target_eval: str = ""

    def validate(self) -> "TrainConfig":
        if self.batch <= 0 or self.batch % 3:
            raise ValidationError(f"train.batch must be a positive multiple of 3, got {self.batch}")
        if self.alpha < 0:
            raise ValidationError(f"loss.alpha must be >= 0, got {self.alpha}")
        if self.epochs < 1 or self.pretrain_epochs < 0:
            raise ValidationError("train.epochs must be >= 1 and train.pretrain_epochs >= 0")
        if self.depth < 1 or min(self.tokens, self.width, self.cls_width) < 1:
            raise ValidationError("model sizes must all be >= 1")
        if self.activation not in ("tanh", "identity"):
            raise ValidationError(f"model.activation must be tanh or identity, got {self.activation!r}")
        if self.channels < 1 or self.input_dim % self.channels:
            raise ValidationError(f"data.channels must divide data.D, got {self.channels} and {self.input_dim}")
        if self.input_dim % self.tokens:
            raise ValidationError(f"model.N must divide data.D, got {self.tokens} and {self.input_dim}")
        if self.noise < 0 or self.gamma_t <= 0:
            raise ValidationError("data.noise must be >= 0 and data.gamma_t > 0")
        if self.epsilon <= 0:
            raise ValidationError("ssid.epsilon must be positive")
        return self

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_keys(self) -> dict[str, Any]:
        return {key: getattr(self, attr) for key, attr in CONFIG_KEYS.items()}

    @classmethod
    def from_keys(cls, values: Mapping[str, Any], base: "TrainConfig | None" = None) -> "TrainConfig":
        base = cls() if base is None else base
        changes = {}
        for key, raw in values.items():
            if key not in CONFIG_KEYS:
                raise ValidationError(f"unknown config key {key!r}")
            attr = CONFIG_KEYS[key]
            changes[attr] = coerce(raw, type(getattr(base, attr)), key)
        return base.replace(**changes)


# dotted config key -> TrainConfig attribute
CONFIG_KEYS: dict[str, str] = {
    "seed": "seed",
    "data.K": "n_classes",
    "data.D": "input_dim",
    "data.n_per_domain": "n_per_domain",
    "data.channels": "channels",
    "data.noise": "noise",
    "data.gamma_t": "gamma_t",
    "data.rotation_deg": "rotation_deg",
    "data.shift_t": "shift_t",
    "data.separation": "separation",
    "data.source": "source",
    "data.target": "target",
    "data.target_eval": "target_eval",
    "model.L": "depth",
    "model.N": "tokens",
    "model.C": "width",
    "model.C_cls": "cls_width",
    "model.activation": "activation",
    "train.batch": "batch",
    "train.pretrain_epochs": "pretrain_epochs",
    "train.epochs": "epochs",
    "train.lr": "lr",
    "train.momentum": "momentum",
    "loss.alpha": "alpha",
    "loss.rate": "rate",
    "loss.use_ssid": "use_ssid",
    "loss.use_ld": "use_ld",
    "loss.use_style": "use_style",
    "loss.literal_im_sign": "literal_im_sign",
    "loss.literal_style_second_term": "literal_style_second_term",
    "loss.literal_uprate_scope": "literal_uprate_scope",
    "ssid.pre_normalize": "pre_normalize",
    "ssid.detach_stats": "detach_stats",
    "ssid.epsilon": "epsilon",
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def coerce(raw: Any, typ: type, key: str = "?") -> Any:
    if not isinstance(raw, str):
        return typ(raw)
    text = raw.strip()
    try:
        if typ is bool:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        return typ(text)
    except ValueError as exc:
        raise ValidationError(f"bad value {raw!r} for {key} (expected {typ.__name__})") from exc


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_config(path: str | os.PathLike) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(path, lineno, "expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            if not key:
                raise ParseError(path, lineno, "empty key")
            values[key] = value
    return values


def write_config(path: str | os.PathLike, values: Mapping[str, Any]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(values):
            fh.write(f"{key}={format_value(values[key])}\n")
