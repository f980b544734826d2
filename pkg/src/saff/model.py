"""Token-mixing-free feature extractor with SSID hook points.

Input ``x`` (B x D) is split into ``N`` equal patches; each patch is embedded
by the same linear map and a learned per-position bias is added, giving a
B x N x C map. That map passes through ``L`` per-token ``linear + activation``
blocks, is max-pooled over tokens, projected by a linear bottleneck and
classified by a linear head.
Each block ``l`` also owns a pair of C x C style projections used by the
SSID fusion.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import numerics as nx
from .errors import DimensionError, ValidationError
from .numerics import Tensor
from .rng import stream

Hook = Callable[[int, Tensor], Tensor]


@dataclass
class Linear:
    weight: Tensor  # in x out
    bias: Tensor    # out

    def __call__(self, x: Tensor) -> Tensor:
        return nx.matmul(x, self.weight) + self.bias

    @property
    def params(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def packed(self) -> np.ndarray:
        """Weight with the bias appended as a last row."""
        return np.vstack([self.weight.data, self.bias.data.reshape(-1, self.weight.shape[1])])

    @classmethod
    def unpack(cls, arr: np.ndarray, bias_rows: int = 1) -> "Linear":
        bias = arr[-bias_rows:] if bias_rows > 1 else arr[-1]
        return cls(Tensor(arr[:-bias_rows], requires_grad=True), Tensor(bias, requires_grad=True))


def _dense(rng: np.random.Generator, n_in: int, n_out: int) -> Linear:
    w = rng.standard_normal((n_in, n_out)) / np.sqrt(n_in)
    return Linear(Tensor(w, requires_grad=True), Tensor(np.zeros(n_out), requires_grad=True))


def _patch_embedding(rng: np.random.Generator, patch: int, tokens: int, width: int) -> Linear:
    w = rng.standard_normal((patch, width)) / np.sqrt(patch)
    pos = 0.1 * rng.standard_normal((tokens, width))
    return Linear(Tensor(w, requires_grad=True), Tensor(pos, requires_grad=True))


def _identity(n: int) -> Linear:
    return Linear(Tensor(np.eye(n), requires_grad=True), Tensor(np.zeros(n), requires_grad=True))


@dataclass
class ModelParams:
    tokenizer: Linear
    blocks: list[Linear]
    fc_mu: list[Linear]
    fc_sigma: list[Linear]
    bottleneck: Linear
    head: Linear
    tokens: int
    activation: str = "tanh"

    @property
    def depth(self) -> int:
        return len(self.blocks)

    @property
    def width(self) -> int:
        return self.blocks[-1].weight.shape[1]

    @property
    def n_classes(self) -> int:
        return self.head.weight.shape[1]

    @property
    def input_dim(self) -> int:
        return self.tokens * self.tokenizer.weight.shape[0]

    def named_layers(self) -> list[tuple[str, Linear]]:
        out = [("tokenizer", self.tokenizer)]
        for l, blk in enumerate(self.blocks, 1):
            out.append((f"block{l}", blk))
        for l, (mu, sig) in enumerate(zip(self.fc_mu, self.fc_sigma), 1):
            out.append((f"fc_mu{l}", mu))
            out.append((f"fc_sigma{l}", sig))
        out += [("bottleneck", self.bottleneck), ("head", self.head)]
        return out

    def parameters(self, style_proj: bool = True) -> list[Tensor]:
        ps = []
        for name, layer in self.named_layers():
            if not style_proj and name.startswith("fc_"):
                continue
            ps += layer.params
        return ps

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: layer.packed() for name, layer in self.named_layers()}

    @classmethod
    def from_state_dict(cls, state: dict[str, np.ndarray], tokens: int, activation: str = "tanh") -> "ModelParams":
        depth = sum(1 for k in state if k.startswith("block"))
        return cls(
            tokenizer=Linear.unpack(state["tokenizer"], bias_rows=tokens),
            blocks=[Linear.unpack(state[f"block{l}"]) for l in range(1, depth + 1)],
            fc_mu=[Linear.unpack(state[f"fc_mu{l}"]) for l in range(1, depth + 1)],
            fc_sigma=[Linear.unpack(state[f"fc_sigma{l}"]) for l in range(1, depth + 1)],
            bottleneck=Linear.unpack(state["bottleneck"]),
            head=Linear.unpack(state["head"]),
            tokens=tokens,
            activation=activation,
        )

    def frozen(self) -> "ModelParams":
        """View sharing the same arrays but building no gradient graph."""
        def det(layer: Linear) -> Linear:
            return Linear(layer.weight.detach(), layer.bias.detach())
        return ModelParams(
            det(self.tokenizer), [det(b) for b in self.blocks], [det(b) for b in self.fc_mu],
            [det(b) for b in self.fc_sigma], det(self.bottleneck), det(self.head),
            self.tokens, self.activation)

    def copy(self) -> "ModelParams":
        return ModelParams.from_state_dict(
            {k: v.copy() for k, v in self.state_dict().items()}, self.tokens, self.activation)


def init_params(
    input_dim: int,
    n_classes: int,
    depth: int = 4,
    tokens: int = 8,
    width: int = 32,
    cls_width: int = 16,
    activation: str = "tanh",
    seed: int = 0,
) -> ModelParams:
    """Random feature extractor; style projections start as identities (plain AdaIN)."""
    if depth < 1 or min(input_dim, n_classes, tokens, width, cls_width) < 1:
        raise ValidationError("all model sizes must be >= 1")
    if input_dim % tokens:
        raise ValidationError(f"input dimension {input_dim} is not divisible into {tokens} patches")
    rng = stream(seed, "init")
    return ModelParams(
        tokenizer=_patch_embedding(rng, input_dim // tokens, tokens, width),
        blocks=[_dense(rng, width, width) for _ in range(depth)],
        fc_mu=[_identity(width) for _ in range(depth)],
        fc_sigma=[_identity(width) for _ in range(depth)],
        bottleneck=_dense(rng, width, cls_width),
        head=_dense(rng, cls_width, n_classes),
        tokens=tokens,
        activation=activation,
    )


@dataclass
class ForwardRecord:
    blocks: list[Tensor] = field(default_factory=list)  # f^1 .. f^L, after any hook
    pooled: Optional[Tensor] = None
    cls: Optional[Tensor] = None
    logits: Optional[Tensor] = None

    @property
    def last(self) -> Tensor:
        return self.blocks[-1]


def _activate(x: Tensor, activation: str) -> Tensor:
    return nx.tanh(x) if activation == "tanh" else x


def pool(f: Tensor) -> Tensor:
    """Per-channel max over the token axis."""
    return nx.max_axis(f, axis=1)


def forward(params: ModelParams, x, hook: Optional[Hook] = None) -> ForwardRecord:
    """Run one branch. ``hook(l, f)`` (1-based ``l``) may rewrite each block output."""
    x = nx.as_tensor(x)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise DimensionError(f"expected inputs of shape B x {params.input_dim}, got {x.shape}")
    b = x.shape[0]
    f = params.tokenizer(x.reshape(b, params.tokens, -1))
    rec = ForwardRecord()
    for l, blk in enumerate(params.blocks, 1):
        f = _activate(blk(f), params.activation)
        if hook is not None:
            f = hook(l, f)
        rec.blocks.append(f)
    rec.pooled = pool(f)
    rec.cls = params.bottleneck(rec.pooled)
    rec.logits = params.head(rec.cls)
    return rec


def predict(logits) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class index."""
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    return np.argmax(data, axis=-1)
