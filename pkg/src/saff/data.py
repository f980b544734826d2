"""Synthetic source/target domains, CSV storage and seeded batch iteration.

An input of dimension D is laid out patch-major as P patches of C channels
(``x[p * C + c]``). Both domains share Gaussian content clusters, one per
class. A class is a spatial pattern over patches shared by every channel, so
class identity does not live in the per-channel statistics. A domain's *style*
is a channel-wise affine map plus an optional rotation of channel pairs,
applied identically to every patch. Target labels are generated (so accuracy can
be measured) but the trainer only ever sees the hidden-label export.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .errors import ContractError, ParseError, ValidationError
from .rng import stream

HIDDEN = -1
DOMAIN_KEYS = {"source": 0, "ssid": 1, "target": 2}


@dataclass(frozen=True)
class Style:
    gamma: np.ndarray
    beta: np.ndarray
    rotation_deg: float = 0.0

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = rotate_pairs(x, self.rotation_deg)
        return x * self.gamma + self.beta


def rotate_pairs(x: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate coordinate pairs (0,1), (2,3), ... by the same angle."""
    if degrees == 0.0:
        return x.copy()
    t = math.radians(degrees)
    c, s = math.cos(t), math.sin(t)
    out = x.copy()
    d = x.shape[1] - x.shape[1] % 2
    a, b = x[:, 0:d:2], x[:, 1:d:2]
    out[:, 0:d:2] = c * a - s * b
    out[:, 1:d:2] = s * a + c * b
    return out


@dataclass(frozen=True)
class DomainSpec:
    means: np.ndarray  # K x D content centres
    noise: float
    source_style: Style
    target_style: Style
    channels: int = 1

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def validate(self) -> None:
        k, d = self.means.shape
        if k < 1 or d < 1:
            raise ValidationError("need at least one class and one input dimension")
        if self.channels < 1 or d % self.channels:
            raise ValidationError(f"input dimension {d} is not a whole number of {self.channels}-channel patches")
        for name, style in (("source", self.source_style), ("target", self.target_style)):
            gamma = np.broadcast_to(style.gamma, (d,))
            if np.any(gamma <= 0):
                raise ValidationError(f"{name} style scale must be strictly positive")
            if np.broadcast_to(style.beta, (d,)).shape != (d,):
                raise ValidationError(f"{name} style shift has the wrong width")
        for i in range(k):
            for j in range(i + 1, k):
                if np.array_equal(self.means[i], self.means[j]):
                    raise ValidationError(f"content means of classes {i} and {j} coincide")
        if self.noise < 0:
            raise ValidationError("noise scale must be >= 0")


def content_templates(n_classes: int, dim: int, channels: int, rng: np.random.Generator,
                      palette=None) -> np.ndarray:
    """Class means ``palette[c] * pattern_k[p]``.

    Each class owns a standardised spatial pattern over the patches; all
    channels carry that same pattern, scaled by a per-channel palette (ones by
    default). Channel statistics are then the same for every class.
    """
    patches = dim // channels
    pattern = rng.standard_normal((n_classes, patches))
    pattern = pattern - pattern.mean(axis=1, keepdims=True)
    pattern = pattern / pattern.std(axis=1, keepdims=True)
    palette = np.ones(channels) if palette is None else np.broadcast_to(np.asarray(palette, float), (channels,))
    return (pattern[:, :, None] * palette[None, None, :]).reshape(n_classes, dim)


def channel_style(gamma, beta, dim: int, channels: int, rotation_deg: float = 0.0) -> Style:
    """Per-channel scale and shift, tiled over all patches."""
    gamma = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (channels,))
    beta = np.broadcast_to(np.asarray(beta, dtype=np.float64), (channels,))
    reps = dim // channels
    return Style(np.tile(gamma, reps), np.tile(beta, reps), rotation_deg)


def default_spec(
    n_classes: int = 5,
    dim: int = 16,
    channels: int = 2,
    gamma_t: float = 2.5,
    rotation_deg: float = 30.0,
    shift_t: float = 0.0,
    separation: float = 1.0,
    noise: float = 0.7,
    seed: int = 0,
) -> DomainSpec:
    """Desk-scale two-domain problem; identity style on the source side."""
    rng = stream(seed, "data", 1)
    means = separation * content_templates(n_classes, dim, channels, rng)
    return DomainSpec(
        means=means,
        noise=noise,
        source_style=channel_style(1.0, 0.0, dim, channels),
        target_style=channel_style(gamma_t, shift_t, dim, channels, rotation_deg),
        channels=channels,
    )


@dataclass
class Dataset:
    domain: str
    indices: np.ndarray  # int64, unique
    x: np.ndarray        # n x D
    labels: np.ndarray   # int64, HIDDEN where unknown

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def has_labels(self) -> bool:
        return bool(np.all(self.labels != HIDDEN))

    def hidden(self) -> "Dataset":
        """Copy with every label replaced by the hidden marker."""
        return Dataset(self.domain, self.indices.copy(), self.x.copy(), np.full(len(self), HIDDEN, dtype=np.int64))

    def rows(self, positions) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.indices[positions], self.x[positions], self.labels[positions]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.indices, other.indices)
            and np.array_equal(self.labels, other.labels)
            and self.x.shape == other.x.shape
            and self.x.tobytes() == other.x.tobytes()
        )


def gen_synthetic(spec: DomainSpec, n_per_domain: int, seed: int) -> tuple[Dataset, Dataset]:
    spec.validate()
    k = spec.n_classes
    if n_per_domain < k:
        raise ValidationError(f"n_per_domain ({n_per_domain}) must be >= number of classes ({k})")
    out = []
    for domain, style in (("source", spec.source_style), ("target", spec.target_style)):
        rng = stream(seed, "data", 2, DOMAIN_KEYS[domain])
        labels = rng.permutation(np.arange(n_per_domain) % k).astype(np.int64)
        content = spec.means[labels] + spec.noise * rng.standard_normal((n_per_domain, spec.dim))
        out.append(Dataset(domain, np.arange(n_per_domain, dtype=np.int64), style.apply(content), labels))
    return out[0], out[1]


# -- CSV ------------------------------------------------------------------------

def save_csv(ds: Dataset, path: str | os.PathLike) -> None:
    d = ds.dim
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "label"] + [f"x{j}" for j in range(d)])
        for idx, label, row in zip(ds.indices, ds.labels, ds.x):
            w.writerow([int(idx), int(label)] + [repr(float(v)) for v in row])


def load_csv(path: str | os.PathLike, domain: Optional[str] = None) -> Dataset:
    if domain is None:
        domain = "target" if "target" in os.path.basename(str(path)) else "source"
    indices, labels, rows = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["index", "label"]:
            raise ParseError(path, 1, "header must start with index,label")
        d = len(header) - 2
        if d < 1 or header[2:] != [f"x{j}" for j in range(d)]:
            raise ParseError(path, 1, "feature columns must be x0..x{D-1}")
        for lineno, rec in enumerate(reader, 2):
            if len(rec) != d + 2:
                raise ParseError(path, lineno, f"expected {d + 2} fields, found {len(rec)}")
            try:
                indices.append(int(rec[0]))
                labels.append(int(rec[1]))
                rows.append([float(v) for v in rec[2:]])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from exc
            if not all(math.isfinite(v) for v in rows[-1]):
                raise ParseError(path, lineno, "non-finite feature value")
    if len(set(indices)) != len(indices):
        raise ParseError(path, 0, "duplicate sample index")
    x = np.array(rows, dtype=np.float64).reshape(len(rows), d)
    return Dataset(domain, np.array(indices, dtype=np.int64), x, np.array(labels, dtype=np.int64))


# -- batching -------------------------------------------------------------------

@dataclass
class Batch:
    xs: np.ndarray
    labels: Optional[np.ndarray]
    indices: np.ndarray
    domain: str
    positions: np.ndarray = field(repr=False, default=None)


def epoch_permutation(n: int, seed: int, epoch: int, domain: str) -> np.ndarray:
    return stream(seed, "batches", epoch, DOMAIN_KEYS[domain]).permutation(n)


def iterate_batches(ds: Dataset, batch: int, seed: int, epoch: int, domain: Optional[str] = None) -> Iterator[Batch]:
    """Seeded permutation per epoch; the trailing partial batch is dropped."""
    if batch <= 0:
        raise ContractError("batch size must be positive")
    if batch > len(ds):
        raise ContractError(f"batch size {batch} exceeds dataset size {len(ds)}")
    domain = ds.domain if domain is None else domain
    perm = epoch_permutation(len(ds), seed, epoch, domain)
    expose = ds.has_labels
    for start in range(0, len(ds) - batch + 1, batch):
        pos = perm[start:start + batch]
        yield Batch(
            xs=ds.x[pos],
            labels=ds.labels[pos] if expose else None,
            indices=ds.indices[pos],
            domain=domain,
            positions=pos,
        )
