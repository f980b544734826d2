"""Transferability diagnostics over frozen bottleneck features."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist

from .data import Dataset
from .errors import ContractError
from .model import ModelParams, forward, predict
from .rng import stream


@dataclass
class CenterSet:
    domain: str
    centers: np.ndarray  # K x C_cls
    present: np.ndarray  # K bool; absent rows are zero and excluded from distances
    counts: np.ndarray


def features(params: ModelParams, ds: Dataset, batch: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Bottleneck features and predicted labels for every row, in dataset order."""
    frozen = params.frozen()
    cls, pred = [], []
    for start in range(0, len(ds), batch):
        rec = forward(frozen, ds.x[start:start + batch])
        cls.append(rec.cls.data)
        pred.append(predict(rec.logits))
    return np.concatenate(cls), np.concatenate(pred)


def centers_from(feats: np.ndarray, labels: np.ndarray, n_classes: int, domain: str = "") -> CenterSet:
    centers = np.zeros((n_classes, feats.shape[1]))
    counts = np.bincount(labels, minlength=n_classes)[:n_classes]
    for k in range(n_classes):
        if counts[k]:
            centers[k] = feats[labels == k].mean(axis=0)
    return CenterSet(domain, centers, counts > 0, counts)


def class_centers(params: ModelParams, ds: Dataset, use_predictions: Optional[bool] = None) -> CenterSet:
    """Mean bottleneck feature per class.

    Labelled sets group by their true labels; sets with hidden labels (or
    ``use_predictions=True``) group by the model's predictions.
    """
    feats, pred = features(params, ds)
    if use_predictions is None:
        use_predictions = not ds.has_labels
    labels = pred if use_predictions else ds.labels
    return centers_from(feats, labels, params.n_classes, ds.domain)


def inter_domain_distance(cs: CenterSet, ct: CenterSet) -> float:
    """Mean squared difference of matching class centres over classes and channels."""
    if cs.centers.shape != ct.centers.shape:
        raise ContractError("center sets have different shapes")
    common = cs.present & ct.present
    if not np.any(common):
        raise ContractError("no class is present in both center sets")
    diff = cs.centers[common] - ct.centers[common]
    return float(np.mean(diff * diff))


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray


def random_projection(dim: int, projection_dim: int, seed: int) -> np.ndarray:
    rng = stream(seed, "projection")
    return rng.standard_normal((dim, projection_dim)) / np.sqrt(projection_dim)


def jl_histogram(features_: np.ndarray, projection_dim: int = 8, bins: int = 50, seed: int = 0) -> Histogram:
    """Histogram of pairwise distances after a Gaussian random projection."""
    x = np.asarray(features_, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ContractError("need at least two feature rows")
    proj = x @ random_projection(x.shape[1], projection_dim, seed)
    dist = pdist(proj)
    top = float(dist.max())
    counts, edges = np.histogram(dist, bins=bins, range=(0.0, top if top > 0 else 1.0))
    return Histogram(edges, counts)


# -- CSV outputs ----------------------------------------------------------------

def write_centers(path: str | os.PathLike, cs: CenterSet) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "present", "count"] + [f"c{j}" for j in range(cs.centers.shape[1])])
        for k, row in enumerate(cs.centers):
            w.writerow([k, int(cs.present[k]), int(cs.counts[k])] + [repr(float(v)) for v in row])


def write_histogram(path: str | os.PathLike, hist: Histogram) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lo", "hi", "count"])
        for lo, hi, c in zip(hist.edges[:-1], hist.edges[1:], hist.counts):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
