"""External memory bank of per-sample features and their class centres.

Six cells: per-source-sample channel mean and deviation of the last block
output, per-SSID-sample bottleneck features, and the class-wise means of all
three. The bank stores plain arrays only, so nothing computed against it can
push a gradient back into it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ContractError, ValidationError

PER_SAMPLE = ("mu_ns", "sigma_ns", "cls_ns")
CENTERS = ("mu_k", "sigma_k", "cls_k")
CELLS = PER_SAMPLE + CENTERS


def class_means(rows: np.ndarray, labels: np.ndarray, n_classes: int) -> np.ndarray:
    """Mean of ``rows`` per label, summed sequentially in ascending row order."""
    out = np.zeros((n_classes, rows.shape[1]))
    for k in range(n_classes):
        members = rows[labels == k]
        if len(members):
            # cumsum is a strict left-to-right running sum, unlike np.sum's pairwise tree
            out[k] = np.cumsum(members, axis=0)[-1] / len(members)
    return out


@dataclass
class MemoryBank:
    mu_ns: np.ndarray
    sigma_ns: np.ndarray
    cls_ns: np.ndarray
    mu_k: np.ndarray
    sigma_k: np.ndarray
    cls_k: np.ndarray
    labels: np.ndarray  # source label per bank row
    indices: np.ndarray  # source sample index per bank row, ascending

    @classmethod
    def empty(cls, indices, labels, n_classes: int, width: int, cls_width: int) -> "MemoryBank":
        indices = np.asarray(indices, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64)
        order = np.argsort(indices, kind="stable")
        indices, labels = indices[order], labels[order]
        if len(np.unique(indices)) != len(indices):
            raise ValidationError("duplicate source index")
        if labels.min(initial=0) < 0 or labels.max(initial=0) >= n_classes:
            raise ValidationError("source label out of range")
        missing = sorted(set(range(n_classes)) - set(labels.tolist()))
        if missing:
            raise ValidationError(f"classes with no source samples: {missing}")
        n = len(indices)
        return cls(
            mu_ns=np.zeros((n, width)), sigma_ns=np.zeros((n, width)), cls_ns=np.zeros((n, cls_width)),
            mu_k=np.zeros((n_classes, width)), sigma_k=np.zeros((n_classes, width)),
            cls_k=np.zeros((n_classes, cls_width)), labels=labels, indices=indices,
        )

    @property
    def n_classes(self) -> int:
        return self.mu_k.shape[0]

    def rows_for(self, indices: Iterable[int]) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        pos = np.searchsorted(self.indices, idx)
        bad = (pos >= len(self.indices)) | (self.indices[np.minimum(pos, len(self.indices) - 1)] != idx)
        if np.any(bad):
            raise ContractError(f"unknown sample index {idx[bad][0]}")
        return pos

    def write_rows(self, indices, mu=None, sigma=None, cls=None) -> None:
        """Replace per-sample rows without touching the centres."""
        pos = self.rows_for(indices)
        for cell, value in (("mu_ns", mu), ("sigma_ns", sigma), ("cls_ns", cls)):
            if value is None:
                continue
            value = np.asarray(value, dtype=np.float64)
            store = getattr(self, cell)
            if value.shape != (len(pos), store.shape[1]):
                raise ContractError(f"{cell}: expected rows of shape {(len(pos), store.shape[1])}, got {value.shape}")
            store[pos] = value

    def recompute_centers(self) -> None:
        k = self.n_classes
        self.mu_k = class_means(self.mu_ns, self.labels, k)
        self.sigma_k = class_means(self.sigma_ns, self.labels, k)
        self.cls_k = class_means(self.cls_ns, self.labels, k)

    def update(self, indices, mu_batch, sigma_batch, cls_batch) -> None:
        """Overwrite the rows at ``indices`` with fresh values, then refresh all centres."""
        arrays = [_plain(a) for a in (mu_batch, sigma_batch, cls_batch)]
        self.write_rows(indices, *arrays)
        self.recompute_centers()

    def lookup_center(self, cell: str, class_id) -> np.ndarray:
        if cell not in CENTERS:
            raise ContractError(f"unknown centre cell {cell!r}")
        ids = np.asarray(class_id)
        if ids.dtype.kind not in "iu" or np.any(ids < 0) or np.any(ids >= self.n_classes):
            raise ContractError(f"class id out of range: {class_id!r}")
        return getattr(self, cell)[ids].copy()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {f"bank.{c}": getattr(self, c).copy() for c in CELLS}

    def load_cells(self, state: dict[str, np.ndarray]) -> None:
        for c in CELLS:
            setattr(self, c, np.array(state[f"bank.{c}"], dtype=np.float64))

    def copy(self) -> "MemoryBank":
        return MemoryBank(**{c: getattr(self, c).copy() for c in CELLS},
                          labels=self.labels.copy(), indices=self.indices.copy())

    def equals(self, other: "MemoryBank") -> bool:
        return all(getattr(self, c).tobytes() == getattr(other, c).tobytes() for c in CELLS)


def _plain(a) -> np.ndarray:
    # accept Tensors but keep only their values
    return np.array(getattr(a, "data", a), dtype=np.float64)


def _chunks(n: int, batch: int) -> list[np.ndarray]:
    """Cover positions 0..n-1 in order with full batches, wrapping the last one."""
    out = []
    for start in range(0, n, batch):
        pos = np.arange(start, start + batch) % n
        out.append(pos)
    return out


def init_bank(params, source, ssid_set, target, batch: int, seed: int, ssid_config=None) -> MemoryBank:
    """One frozen pass over S and I (with SSID fusion active) filling every cell.

    The trailing chunk is padded by wrapping around to the first rows so every
    fusion batch stays divisible by three; padded rows are not stored twice.
    """
    from . import model as mdl
    from . import ssid
    from .rng import stream

    config = ssid.SsidConfig() if ssid_config is None else ssid_config
    if batch % 3:
        raise ContractError("bank initialisation batch must be divisible by 3")
    if not np.array_equal(source.indices, ssid_set.indices) or not np.array_equal(source.labels, ssid_set.labels):
        raise ContractError("SSID set must mirror the source set")
    frozen = params.frozen()
    bank = MemoryBank.empty(source.indices, source.labels, params.n_classes, params.width,
                            frozen.bottleneck.weight.shape[1])
    rng = stream(seed, "ssid", 0)
    t_perm = stream(seed, "batches", 0, 2).permutation(len(target))
    order = np.argsort(source.indices, kind="stable")
    n = len(order)
    b = batch if n >= batch else n - n % 3
    if b < 3:
        raise ContractError("need at least three source samples")
    for c, chunk in enumerate(_chunks(n, b)):
        pos = order[chunk]
        keep = np.arange(len(chunk)) < min(b, n - c * b)
        t_pos = t_perm[(np.arange(c * b, c * b + b)) % len(target)]
        rec_s = mdl.forward(frozen, source.x[pos])
        rec_t = mdl.forward(frozen, target.x[t_pos])
        hook = ssid.make_hook(frozen, rec_s.blocks, rec_t.blocks, rng, config)
        rec_i = mdl.forward(frozen, ssid_set.x[pos], hook=hook)
        stats = ssid.style_stats(rec_s.last, config.epsilon)
        bank.write_rows(source.indices[pos][keep], stats.mu.data[keep], stats.sigma.data[keep],
                        rec_i.cls.data[keep])
    bank.recompute_centers()
    return bank
