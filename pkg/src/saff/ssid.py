"""Style-aware self-intermediate domain (SSID): cross-domain style fusion.

After every block the SSID branch is rewritten: a batch is assembled from a
random third of the source, SSID and target rows, its per-sample channel
statistics are taken as style, and those styles are stamped onto the cleaned
SSID features through two learned projections.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numerics as nx
from .data import Dataset
from .errors import ContractError, DimensionError
from .model import Linear, ModelParams
from .numerics import Tensor


@dataclass(frozen=True)
class SsidConfig:
    pre_normalize: bool = True
    detach_stats: bool = True
    epsilon: float = 1e-5


@dataclass
class StyleStats:
    mu: Tensor     # B x C
    sigma: Tensor  # B x C, standard deviation sqrt(var + eps)


def init_ssid(source: Dataset) -> Dataset:
    """The SSID sample set starts as (and keeps) the source inputs and labels."""
    return Dataset("ssid", source.indices.copy(), source.x.copy(), source.labels.copy())


def _bcast(t: Tensor) -> Tensor:
    return t.reshape(t.shape[0], 1, t.shape[1])


def clean_object(f: Tensor, epsilon: float = 1e-5) -> Tensor:
    """Strip channel statistics: ``(f - mean) / sqrt(var + eps)`` per sample and channel."""
    mu, var = nx.channel_mean_var(f)
    return (f - _bcast(mu)) / nx.sqrt(_bcast(var) + epsilon)


def style_stats(f: Tensor, epsilon: float = 1e-5) -> StyleStats:
    mu, var = nx.channel_mean_var(f)
    return StyleStats(mu, nx.sqrt(var + epsilon))


def select_one_third(batch: int, rng: np.random.Generator) -> tuple[list[np.ndarray], np.ndarray]:
    """Row choices per domain (source, SSID, target) and the final permutation."""
    if batch <= 0 or batch % 3:
        raise ContractError(f"one-third sampling needs a batch divisible by 3, got {batch}")
    third = batch // 3
    picks = [np.sort(rng.choice(batch, size=third, replace=False)) for _ in range(3)]
    return picks, rng.permutation(batch)


def sample_one_third(f_s: Tensor, f_i: Tensor, f_t: Tensor, rng: np.random.Generator) -> Tensor:
    if not (f_s.shape == f_i.shape == f_t.shape):
        raise DimensionError(f"domain maps differ in shape: {f_s.shape}, {f_i.shape}, {f_t.shape}")
    picks, perm = select_one_third(f_s.shape[0], rng)
    mixed = nx.concat([nx.take_rows(f, rows) for f, rows in zip((f_s, f_i, f_t), picks)], axis=0)
    return nx.take_rows(mixed, perm)


def fuse(f_i: Tensor, stats: StyleStats, fc_mu: Linear, fc_sigma: Linear, config: SsidConfig = SsidConfig()) -> Tensor:
    """Row ``b`` of ``stats`` restyles row ``b`` of ``f_i``."""
    if f_i.ndim != 3 or stats.mu.shape != (f_i.shape[0], f_i.shape[2]) or stats.sigma.shape != stats.mu.shape:
        raise DimensionError(f"style stats {stats.mu.shape} do not match feature map {f_i.shape}")
    g = clean_object(f_i, config.epsilon) if config.pre_normalize else f_i
    return g * _bcast(fc_sigma(stats.sigma)) + _bcast(fc_mu(stats.mu))


def apply_strategy(
    f_s: Tensor,
    f_i: Tensor,
    f_t: Tensor,
    fc_mu: Linear,
    fc_sigma: Linear,
    rng: np.random.Generator,
    config: SsidConfig = SsidConfig(),
) -> Tensor:
    """New SSID map for one block. ``f_s`` and ``f_t`` are only read."""
    f_sample = sample_one_third(f_s, f_i, f_t, rng)
    if config.detach_stats:
        f_sample = f_sample.detach()
    return fuse(f_i, style_stats(f_sample, config.epsilon), fc_mu, fc_sigma, config)


def make_hook(
    params: ModelParams,
    source_blocks: Sequence[Tensor],
    target_blocks: Sequence[Tensor],
    rng: np.random.Generator,
    config: SsidConfig = SsidConfig(),
):
    """Forward hook that applies the strategy after block ``l`` of the SSID branch."""

    def hook(l: int, f_i: Tensor) -> Tensor:
        return apply_strategy(
            source_blocks[l - 1], f_i, target_blocks[l - 1],
            params.fc_mu[l - 1], params.fc_sigma[l - 1], rng, config)

    return hook
