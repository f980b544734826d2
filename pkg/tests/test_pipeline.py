import numpy as np
import pytest

from saff import numerics as nx
from saff import pipeline
from saff.data import iterate_batches
from saff.errors import ContractError, DivergenceError
from saff.losses import ce_loss, im_loss
from saff.membank import MemoryBank
from saff.model import forward
from saff.numerics import SGD, Tensor


def _baseline(cfg):
    return cfg.replace(use_ssid=False, use_ld=False, use_style=False)


def test_baseline_flags_reduce_to_plain_source_plus_im(tiny_config, tiny_data):
    cfg = _baseline(tiny_config)
    src, tgt = tiny_data
    start = pipeline.pretrain_source(cfg, src)

    # independent reference loop: CE on source plus IM on target, one SGD step per batch pair
    ref = start.copy()
    opt = SGD(ref.parameters(style_proj=False), cfg.lr, cfg.momentum)
    hidden = tgt.hidden()
    for epoch in range(cfg.epochs):
        for sb, tb in zip(iterate_batches(src, cfg.batch, cfg.seed, epoch),
                          iterate_batches(hidden, cfg.batch, cfg.seed, epoch)):
            loss = ce_loss(forward(ref, sb.xs).logits, sb.labels) + im_loss(forward(ref, tb.xs).logits)
            nx.backward(loss)
            opt.step()

    result = pipeline.train(cfg, src, tgt, params=start.copy())
    assert result.bank is None
    for a, b in zip(result.params.state_dict().values(), ref.state_dict().values()):
        assert a.tobytes() == b.tobytes()


def test_training_is_deterministic(tiny_config, tiny_data):
    src, tgt = tiny_data
    runs = [pipeline.train(tiny_config, src, tgt) for _ in range(2)]
    rows = [[r.csv_row()[:-1] for r in run.reports] for run in runs]
    assert rows[0] == rows[1]
    assert runs[0].bank.equals(runs[1].bank)


def test_reports_are_sane(tiny_config, tiny_data):
    src, tgt = tiny_data
    result = pipeline.train(tiny_config, src, tgt)
    assert [r.epoch for r in result.reports] == [1, 2]
    for r in result.reports:
        assert 0 <= r.acc_s <= 1 and 0 <= r.acc_t <= 1 and r.dist >= 0
        assert np.isfinite(r.losses.total)
    assert np.array_equal(result.bank.labels, src.labels)


def test_bank_updates_touch_each_source_index_once_per_epoch(tiny_config, tiny_data, monkeypatch):
    src, tgt = tiny_data
    seen = []
    original = MemoryBank.update

    def spy(self, indices, *rest):
        seen.append(np.asarray(indices).copy())
        return original(self, indices, *rest)

    monkeypatch.setattr(MemoryBank, "update", spy)
    pipeline.train(tiny_config.replace(epochs=1), src, tgt)
    touched = np.concatenate(seen)
    n_full = len(src) - len(src) % tiny_config.batch
    assert len(touched) == n_full == len(np.unique(touched))


def test_optimizer_never_touches_the_bank(tiny_config, tiny_data):
    src, tgt = tiny_data
    result = pipeline.train(tiny_config.replace(epochs=1), src, tgt)
    bank, params = result.bank, result.params
    opt = SGD(params.parameters(), 0.1, 0.9)
    bank_arrays = [getattr(bank, c) for c in ("mu_ns", "sigma_ns", "cls_ns", "mu_k", "sigma_k", "cls_k")]
    assert not any(p.data is a for p in opt.params for a in bank_arrays)
    before = bank.copy()
    for p in opt.params:
        p.grad = np.ones_like(p.data)
    opt.step()
    assert bank.equals(before)


def test_no_shift_control():
    from saff.config import TrainConfig
    cfg = TrainConfig(gamma_t=1.0, rotation_deg=0.0, shift_t=0.0)
    src, tgt = pipeline.make_data(cfg)
    params = pipeline.pretrain_source(cfg, src)
    acc_s, acc_t = pipeline.evaluate(params, src), pipeline.evaluate(params, tgt)
    assert abs(acc_t - acc_s) <= 0.02, f"source {acc_s:.4f} vs target {acc_t:.4f}"


def test_divergence_names_the_component():
    with pytest.raises(DivergenceError) as info:
        pipeline._component("loss_t", lambda: Tensor(np.array(np.nan)), 3, 4)
    assert info.value.component == "loss_t" and info.value.epoch == 3


def test_diverging_training_run_raises(tiny_config, tiny_data, monkeypatch):
    src, tgt = tiny_data
    monkeypatch.setattr(pipeline, "im_loss", lambda logits, literal=False: Tensor(np.array(np.inf)))
    with pytest.raises(DivergenceError) as info:
        pipeline.train(tiny_config, src, tgt)
    assert info.value.component == "loss_t"


def test_evaluate_needs_labels(tiny_config, tiny_data):
    src, tgt = tiny_data
    params = pipeline.new_model(tiny_config, src.dim)
    with pytest.raises(ContractError):
        pipeline.evaluate(params, tgt.hidden())


def test_tables(tiny_config, tiny_data, tmp_path):
    src, tgt = tiny_data
    cfg = tiny_config.replace(epochs=1, pretrain_epochs=1)
    rows = pipeline.ablate(cfg, src, tgt, seeds=[0, 1])
    assert [r.name for r in rows] == ["Ls+Lt", "+Li", "+Li+LD", "+Li+Lstyle", "SAFF"]
    assert all(len(r.accuracies) == 2 for r in rows)
    sweep = pipeline.sweep_alpha(cfg, [0.0, 2.0], src, tgt, seeds=[0])
    assert [r.name for r in sweep] == ["alpha=0.0", "alpha=2.0"]
    with pytest.raises(ContractError):
        pipeline.sweep_alpha(cfg, [-1.0], src, tgt)
    path = tmp_path / "t.csv"
    pipeline.write_table_csv(path, rows, [0, 1])
    assert path.read_text().splitlines()[0] == "row,acc_t_seed0,acc_t_seed1,acc_t_mean,dist_mean"


def test_epoch_csv_appends(tiny_config, tiny_data, tmp_path):
    src, tgt = tiny_data
    reports = pipeline.train(tiny_config, src, tgt).reports
    path = tmp_path / "e.csv"
    for r in reports:
        pipeline.write_epoch_csv(path, [r], append=True)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(pipeline.EPOCH_FIELDS)
    assert len(lines) == 1 + len(reports)
