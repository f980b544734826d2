"""Intra-domain and inter-domain objectives.

``L = (L_s + L_i + L_t) + alpha * (L_D + L_style)``: cross-entropy on the
labelled source and SSID branches, information maximisation on the target,
and two KL terms that pull live features towards the memory-bank centres.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from . import numerics as nx
from .errors import ContractError
from .membank import MemoryBank
from .model import predict
from .numerics import Tensor

LOG_EPS = 1e-8


def ce_loss(logits: Tensor, labels) -> Tensor:
    labels = np.asarray(labels, dtype=np.intp)
    k = logits.shape[-1]
    if labels.shape != (logits.shape[0],) or labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ContractError(f"labels must be {logits.shape[0]} class ids in [0, {k})")
    logp = nx.log_softmax(logits, axis=-1)
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(labels)), labels] = 1.0
    return -(logp * onehot).sum() / len(labels)


def entropies(logits: Tensor) -> tuple[Tensor, Tensor]:
    """Mean per-row entropy and entropy of the batch-mean prediction."""
    if logits.shape[0] < 1:
        raise ContractError("need at least one row")
    p = nx.softmax(logits, axis=-1)
    h_cond = -(p * nx.log(p + LOG_EPS)).sum() / logits.shape[0]
    p_bar = p.mean(axis=0)
    h_marg = -(p_bar * nx.log(p_bar + LOG_EPS)).sum()
    return h_cond, h_marg


def im_loss(logits_t: Tensor, literal: bool = False) -> Tensor:
    """Information maximisation: confident rows, diverse marginal.

    ``literal=True`` returns the sign-flipped variant (marginal entropy minus
    conditional entropy) kept only for comparison runs.
    """
    h_cond, h_marg = entropies(logits_t)
    return h_marg - h_cond if literal else h_cond - h_marg


def kl_softmax(p_logits, q_logits: Tensor) -> Tensor:
    """Row-averaged ``KL(softmax(p) || softmax(q))``; ``p`` is treated as a constant."""
    p_raw = p_logits.data if isinstance(p_logits, Tensor) else np.asarray(p_logits, dtype=np.float64)
    z = p_raw - p_raw.max(axis=-1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    # log-space on both sides: never log(0), and no additive eps to break KL >= 0
    kl_rows = (np.exp(log_p) * (log_p - nx.log_softmax(q_logits, axis=-1))).sum(axis=-1)
    return kl_rows.mean()


def discrimination_loss(bank: MemoryBank, f_s_cls: Tensor, y_s_pre, f_t_cls: Tensor, y_t_pre) -> Tensor:
    c_s = bank.lookup_center("cls_k", np.asarray(y_s_pre, dtype=np.int64))
    c_t = bank.lookup_center("cls_k", np.asarray(y_t_pre, dtype=np.int64))
    return kl_softmax(c_s, f_s_cls) + kl_softmax(c_t, f_t_cls)


def up_rate(epoch_num: float, total_epoch: float, rate: float = 0.9) -> float:
    if total_epoch < 1 or not 0 <= epoch_num <= total_epoch:
        raise ContractError(f"need 0 <= epoch_num <= total_epoch and total_epoch >= 1, got {epoch_num}/{total_epoch}")
    return (epoch_num / total_epoch) ** rate


def style_loss(
    bank: MemoryBank,
    f_t_last: Tensor,
    y_t_pre,
    epoch_num: float,
    total_epoch: float,
    rate: float = 0.9,
    epsilon: float = 1e-5,
    literal_second_term: bool = False,
    literal_scope: bool = False,
) -> Tensor:
    """Class-wise style alignment of the target's last block output.

    By default the rising factor scales both KL terms and the deviation centre
    is compared with the target deviation. The ``literal_*`` switches restore
    the alternative readings (factor on the first term only; deviation centre
    compared with the target mean).
    """
    y = np.asarray(y_t_pre, dtype=np.int64)
    mu, var = nx.channel_mean_var(f_t_last)
    sigma = nx.sqrt(var + epsilon)
    factor = up_rate(epoch_num, total_epoch, rate)
    first = kl_softmax(bank.lookup_center("mu_k", y), mu)
    second = kl_softmax(bank.lookup_center("sigma_k", y), mu if literal_second_term else sigma)
    if literal_scope:
        return factor * first + second
    return factor * (first + second)


@dataclass
class LossBreakdown:
    loss_s: float = 0.0
    loss_i: float = 0.0
    loss_t: float = 0.0
    loss_d: float = 0.0
    loss_style: float = 0.0
    up_rate_value: float = 0.0
    total: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class LossFlags:
    use_ssid: bool = True
    use_ld: bool = True
    use_style: bool = True


# ablation rows, baseline first: (name, flags)
ABLATION_ROWS = (
    ("Ls+Lt", LossFlags(False, False, False)),
    ("+Li", LossFlags(True, False, False)),
    ("+Li+LD", LossFlags(True, True, False)),
    ("+Li+Lstyle", LossFlags(True, False, True)),
    ("SAFF", LossFlags(True, True, True)),
)


def total_loss(
    components: dict[str, Optional[Tensor]],
    alpha: float = 1.0,
    flags: LossFlags = LossFlags(),
    up_rate_value: float = 0.0,
) -> tuple[Tensor, LossBreakdown]:
    """Combine components; disabled ones are left out of the graph entirely.

    ``components`` maps ``loss_s``, ``loss_i``, ``loss_t``, ``loss_d`` and
    ``loss_style`` to scalar tensors (``None`` where not computed).
    """
    if alpha < 0:
        raise ContractError("alpha must be >= 0")
    enabled = {
        "loss_s": True,
        "loss_t": True,
        "loss_i": flags.use_ssid,
        "loss_d": flags.use_ld,
        "loss_style": flags.use_style,
    }
    parts = {}
    for name, on in enabled.items():
        term = components.get(name)
        if on:
            if term is None:
                raise ContractError(f"{name} is enabled but was not computed")
            parts[name] = term
    intra = parts["loss_s"] + parts["loss_t"]
    if "loss_i" in parts:
        intra = parts["loss_s"] + parts["loss_i"] + parts["loss_t"]
    inter = None
    for name in ("loss_d", "loss_style"):
        if name in parts:
            inter = parts[name] if inter is None else inter + parts[name]
    total = intra if inter is None else intra + alpha * inter
    report = LossBreakdown(
        **{name: (float(parts[name].data) if name in parts else 0.0) for name in enabled},
        up_rate_value=up_rate_value,
        total=float(total.data),
    )
    return total, report


def non_finite_component(report: LossBreakdown) -> Optional[str]:
    for name, value in report.as_dict().items():
        if not math.isfinite(value):
            return name
    return None


__all__ = [
    "ce_loss", "im_loss", "entropies", "kl_softmax", "discrimination_loss", "up_rate",
    "style_loss", "total_loss", "LossBreakdown", "LossFlags", "ABLATION_ROWS", "predict",
]
