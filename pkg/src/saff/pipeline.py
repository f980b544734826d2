"""Source pretraining, the three-branch SAFF training loop, and experiment sweeps."""
from __future__ import annotations

import csv
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import analysis
from . import numerics as nx
from .config import TrainConfig
from .data import Dataset, DomainSpec, default_spec, gen_synthetic, iterate_batches
from .errors import ContractError, DivergenceError, NonFiniteError
from .losses import (
    ABLATION_ROWS,
    LossBreakdown,
    LossFlags,
    ce_loss,
    discrimination_loss,
    im_loss,
    style_loss,
    total_loss,
    up_rate,
)
from .membank import MemoryBank, init_bank
from .model import ModelParams, forward, init_params, predict
from .numerics import SGD
from .rng import stream
from .ssid import SsidConfig, init_ssid, make_hook, style_stats

log = logging.getLogger(__name__)

PRETRAIN_EPOCH_KEY = 100_000

EPOCH_FIELDS = ("epoch", "loss_s", "loss_i", "loss_t", "loss_d", "loss_style", "total",
                "acc_s", "acc_t", "dist", "secs")


@dataclass
class EpochReport:
    epoch: int
    losses: LossBreakdown
    acc_s: float
    acc_t: float
    dist: float
    secs: float

    def csv_row(self) -> list[str]:
        l = self.losses
        vals = [l.loss_s, l.loss_i, l.loss_t, l.loss_d, l.loss_style, l.total, self.acc_s, self.acc_t, self.dist]
        return [str(self.epoch)] + [repr(float(v)) for v in vals] + [f"{self.secs:.3f}"]


@dataclass
class TrainResult:
    params: ModelParams
    bank: Optional[MemoryBank]
    reports: list[EpochReport] = field(default_factory=list)


def data_spec(config: TrainConfig) -> DomainSpec:
    return default_spec(config.n_classes, config.input_dim, config.channels, config.gamma_t,
                        config.rotation_deg, config.shift_t, config.separation, config.noise, seed=config.seed)


def make_data(config: TrainConfig) -> tuple[Dataset, Dataset]:
    """Labelled source and target sets drawn from the configured domain description."""
    config.validate()
    return gen_synthetic(data_spec(config), config.n_per_domain, config.seed)


def ssid_config(config: TrainConfig) -> SsidConfig:
    return SsidConfig(config.pre_normalize, config.detach_stats, config.epsilon)


def loss_flags(config: TrainConfig) -> LossFlags:
    return LossFlags(config.use_ssid, config.use_ld, config.use_style)


def new_model(config: TrainConfig, input_dim: int) -> ModelParams:
    return init_params(input_dim, config.n_classes, config.depth, config.tokens, config.width,
                       config.cls_width, config.activation, seed=config.seed)


def evaluate(params: ModelParams, ds: Dataset) -> float:
    """Fraction of rows whose argmax prediction equals the stored label."""
    if not ds.has_labels:
        raise ContractError("evaluation needs a labelled set")
    _, pred = analysis.features(params, ds)
    return float(np.mean(pred == ds.labels))


def domain_distance(params: ModelParams, source: Dataset, target: Dataset) -> float:
    cs = analysis.class_centers(params, source, use_predictions=False)
    ct = analysis.class_centers(params, target, use_predictions=True)
    return analysis.inter_domain_distance(cs, ct)


def pretrain_source(config: TrainConfig, source: Dataset, params: Optional[ModelParams] = None) -> ModelParams:
    """Cross-entropy on the labelled source only; style projections stay untouched."""
    config.validate()
    if not source.has_labels:
        raise ContractError("pretraining needs source labels")
    params = new_model(config, source.dim) if params is None else params
    opt = SGD(params.parameters(style_proj=False), config.lr, config.momentum)
    for p in range(config.pretrain_epochs):
        for batch in iterate_batches(source, config.batch, config.seed, PRETRAIN_EPOCH_KEY + p):
            loss = ce_loss(forward(params, batch.xs).logits, batch.labels)
            nx.backward(loss)
            opt.step()
    return params


def _component(name: str, fn: Callable[[], nx.Tensor], epoch: int, step: int) -> nx.Tensor:
    try:
        value = fn()
    except NonFiniteError as exc:
        raise DivergenceError(name, epoch, step) from exc
    if not np.isfinite(value.data).all():
        raise DivergenceError(name, epoch, step)
    return value


def step_losses(
    params: ModelParams,
    bank: Optional[MemoryBank],
    config: TrainConfig,
    s_batch,
    t_batch,
    rng: np.random.Generator,
    epoch: int,
    step: int = 0,
) -> tuple[nx.Tensor, LossBreakdown]:
    """Forward the three branches, refresh the bank, and assemble the total loss.

    Order: the three forward passes (fusion after every SSID block), bank
    update from detached features, then loss evaluation.
    """
    flags = loss_flags(config)
    cfg = ssid_config(config)
    need_bank = flags.use_ld or flags.use_style
    try:
        rec_s = forward(params, s_batch.xs)
        rec_t = forward(params, t_batch.xs)
    except NonFiniteError as exc:
        raise DivergenceError("forward", epoch, step) from exc
    rec_i = None
    if flags.use_ssid or need_bank:
        hook = make_hook(params, rec_s.blocks, rec_t.blocks, rng, cfg) if flags.use_ssid else None
        try:
            # the SSID set mirrors the source set, so its rows are the source inputs
            rec_i = forward(params, s_batch.xs, hook=hook)
        except NonFiniteError as exc:
            raise DivergenceError("ssid", epoch, step) from exc

    if need_bank:
        stats = style_stats(rec_s.last, cfg.epsilon)
        bank.update(s_batch.indices, stats.mu.data, stats.sigma.data, rec_i.cls.data)

    y_s_pre = predict(rec_s.logits)
    y_t_pre = predict(rec_t.logits)
    factor = up_rate(epoch, config.epochs, config.rate)
    comps = {
        "loss_s": _component("loss_s", lambda: ce_loss(rec_s.logits, s_batch.labels), epoch, step),
        "loss_t": _component("loss_t", lambda: im_loss(rec_t.logits, config.literal_im_sign), epoch, step),
    }
    if flags.use_ssid:
        comps["loss_i"] = _component("loss_i", lambda: ce_loss(rec_i.logits, s_batch.labels), epoch, step)
    if flags.use_ld:
        comps["loss_d"] = _component(
            "loss_d", lambda: discrimination_loss(bank, rec_s.cls, y_s_pre, rec_t.cls, y_t_pre), epoch, step)
    if flags.use_style:
        comps["loss_style"] = _component(
            "loss_style",
            lambda: style_loss(bank, rec_t.last, y_t_pre, epoch, config.epochs, config.rate, cfg.epsilon,
                               config.literal_style_second_term, config.literal_uprate_scope),
            epoch, step)
    return total_loss(comps, config.alpha, flags, factor)


def train_step(
    params: ModelParams,
    bank: Optional[MemoryBank],
    opt: SGD,
    config: TrainConfig,
    s_batch,
    t_batch,
    rng: np.random.Generator,
    epoch: int,
    step: int = 0,
) -> LossBreakdown:
    """One optimisation step over aligned source / SSID / target batches."""
    total, report = step_losses(params, bank, config, s_batch, t_batch, rng, epoch, step)
    nx.backward(total)
    opt.step()
    return report


def _mean_breakdown(reports: Sequence[LossBreakdown]) -> LossBreakdown:
    if not reports:
        return LossBreakdown()
    keys = reports[0].as_dict().keys()
    return LossBreakdown(**{k: float(np.mean([getattr(r, k) for r in reports])) for k in keys})


def train(
    config: TrainConfig,
    source: Dataset,
    target: Dataset,
    target_eval: Optional[Dataset] = None,
    params: Optional[ModelParams] = None,
    on_epoch: Optional[Callable[[EpochReport], None]] = None,
) -> TrainResult:
    """Pretrain (unless ``params`` is given), initialise the bank, then run the SAFF loop.

    ``target`` is only used through its inputs. Accuracy on the target is
    measured against ``target_eval`` (or ``target`` itself if it carries labels).
    """
    config.validate()
    if target_eval is None and target.has_labels:
        target_eval = target
    target = target.hidden()
    if params is None:
        params = pretrain_source(config, source)
    ssid_set = init_ssid(source)
    flags = loss_flags(config)
    bank = None
    if flags.use_ld or flags.use_style:
        bank = init_bank(params, source, ssid_set, target, config.batch, config.seed, ssid_config(config))
    opt = SGD(params.parameters(style_proj=config.use_ssid), config.lr, config.momentum)
    reports = []
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        rng = stream(config.seed, "ssid", epoch + 1)
        steps = []
        pairs = zip(iterate_batches(source, config.batch, config.seed, epoch),
                    iterate_batches(target, config.batch, config.seed, epoch))
        for step, (sb, tb) in enumerate(pairs):
            steps.append(train_step(params, bank, opt, config, sb, tb, rng, epoch, step))
        acc_s = evaluate(params, source)
        acc_t = evaluate(params, target_eval) if target_eval is not None else float("nan")
        dist = domain_distance(params, source, target)
        rep = EpochReport(epoch + 1, _mean_breakdown(steps), acc_s, acc_t, dist, time.perf_counter() - t0)
        log.info("epoch %d total=%.4f acc_s=%.4f acc_t=%.4f dist=%.4g", rep.epoch, rep.losses.total,
                 acc_s, acc_t, dist)
        reports.append(rep)
        if on_epoch is not None:
            on_epoch(rep)
    return TrainResult(params, bank, reports)


# -- experiment tables ----------------------------------------------------------

@dataclass
class TableRow:
    name: str
    accuracies: list[float]
    distances: list[float]

    @property
    def mean_acc(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def mean_dist(self) -> float:
        return float(np.mean(self.distances))


def _run_rows(
    config: TrainConfig,
    rows: Sequence[tuple[str, TrainConfig]],
    source: Dataset,
    target: Dataset,
    target_eval: Optional[Dataset],
    seeds: Sequence[int],
) -> list[TableRow]:
    out = [TableRow(name, [], []) for name, _ in rows]
    for seed in seeds:
        base = pretrain_source(config.replace(seed=seed), source)
        for row, (_, cfg) in zip(out, rows):
            result = train(cfg.replace(seed=seed), source, target, target_eval, params=base.copy())
            last = result.reports[-1]
            row.accuracies.append(last.acc_t)
            row.distances.append(last.dist)
    return out


def ablate(config: TrainConfig, source: Dataset, target: Dataset, target_eval: Optional[Dataset] = None,
           seeds: Sequence[int] = (0,)) -> list[TableRow]:
    """The five loss combinations, each seed sharing one pretrained starting point."""
    rows = [(name, config.replace(use_ssid=f.use_ssid, use_ld=f.use_ld, use_style=f.use_style))
            for name, f in ABLATION_ROWS]
    return _run_rows(config, rows, source, target, target_eval, seeds)


def sweep_alpha(config: TrainConfig, values: Sequence[float], source: Dataset, target: Dataset,
                target_eval: Optional[Dataset] = None, seeds: Sequence[int] = (0,)) -> list[TableRow]:
    if any(v < 0 for v in values):
        raise ContractError("alpha values must be >= 0")
    rows = [(f"alpha={v!r}", config.replace(alpha=float(v))) for v in values]
    return _run_rows(config, rows, source, target, target_eval, seeds)


def write_epoch_csv(path: str | os.PathLike, reports: Sequence[EpochReport], append: bool = False) -> None:
    new = not append or not os.path.exists(path)
    with open(path, "a" if append else "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(EPOCH_FIELDS)
        for r in reports:
            w.writerow(r.csv_row())


def write_table_csv(path: str | os.PathLike, rows: Sequence[TableRow], seeds: Sequence[int]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row"] + [f"acc_t_seed{s}" for s in seeds] + ["acc_t_mean", "dist_mean"])
        for r in rows:
            w.writerow([r.name] + [repr(a) for a in r.accuracies] + [repr(r.mean_acc), repr(r.mean_dist)])
