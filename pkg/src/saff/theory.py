"""Numerical check of the SSID loss convergence argument.

Fused bottleneck features of class ``k`` are modelled as a diagonal Gaussian
``N(mu_k, diag(var_k))``; an anchor with label ``y`` sees class ``k`` with
probability ``p_k``. Its loss under an affine softmax classifier is::

    E_k E_f [ logsumexp(W^T f + b) - (W_y^T f + b_y) ]

Pushing the expectation inside the log (Jensen) and using the Gaussian moment
generating function ``E[exp(w^T f)] = exp(w^T mu + w^T diag(var) w / 2)``
gives a closed-form upper bound that is itself a cross-entropy.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ContractError, ValidationError
from .rng import stream

CHUNK = 65536


@dataclass(frozen=True)
class GaussianClassModel:
    means: np.ndarray        # K x d
    variances: np.ndarray    # K x d, diagonal covariance
    proportions: np.ndarray  # K, on the simplex

    def __post_init__(self):
        if self.means.shape != self.variances.shape:
            raise ValidationError("means and variances must have the same shape")
        if np.any(self.variances < 0):
            raise ValidationError("variances must be non-negative")
        p = self.proportions
        if p.shape != (self.means.shape[0],) or np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-12):
            raise ValidationError("proportions must be a probability vector with one entry per class")

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @classmethod
    def uniform(cls, means, variances) -> "GaussianClassModel":
        means = np.asarray(means, dtype=np.float64)
        k = means.shape[0]
        return cls(means, np.asarray(variances, dtype=np.float64), np.full(k, 1.0 / k))


@dataclass(frozen=True)
class ClassifierAffine:
    weight: np.ndarray  # d x K
    bias: np.ndarray    # K

    def __post_init__(self):
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValidationError("classifier entries must be finite")
        if self.bias.shape != (self.weight.shape[1],):
            raise ValidationError("bias length must match the number of weight columns")


def random_problem(seed: int, n_classes: int = 5, dim: int = 8, n_anchors: int = 4,
                   scale: float = 1.0) -> tuple[GaussianClassModel, ClassifierAffine, np.ndarray]:
    """A random (model, classifier, anchor labels) triple for experiments and tests."""
    rng = stream(seed, "theory", 10**6)
    means = rng.standard_normal((n_classes, dim))
    variances = rng.uniform(0.05, 1.0, size=(n_classes, dim))
    props = rng.dirichlet(np.ones(n_classes))
    clf = ClassifierAffine(scale * rng.standard_normal((dim, n_classes)) / math.sqrt(dim),
                           0.5 * rng.standard_normal(n_classes))
    labels = rng.integers(0, n_classes, size=n_anchors)
    return GaussianClassModel(means, variances, props), clf, labels


# -- counting ---------------------------------------------------------------------

@dataclass(frozen=True)
class LatentCount:
    per_layer: int
    compounded: int
    layers: int


def latent_space_size(n_source: int, n_target: int, batch: int, layers: int = 1) -> LatentCount:
    """Fused features reachable after one layer: C(Ns,B)^2 * C(Nt,B) * A(B,B/3)^3.

    ``compounded`` is the per-layer count raised to ``layers``; the law for
    stacking layers is a modelling choice, so both numbers are reported.
    """
    if batch < 1 or batch % 3:
        raise ContractError(f"batch must be a positive multiple of 3, got {batch}")
    if batch > min(n_source, n_target):
        raise ContractError("batch cannot exceed either domain size")
    if layers < 1:
        raise ContractError("layers must be >= 1")
    per = math.comb(n_source, batch) ** 2 * math.comb(n_target, batch) * math.perm(batch, batch // 3) ** 3
    return LatentCount(per, per ** layers, layers)


# -- losses under the Gaussian model --------------------------------------------

def _logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = a.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def _anchor_losses(f: np.ndarray, clf: ClassifierAffine, labels: np.ndarray) -> np.ndarray:
    """Cross-entropy of every feature row against every anchor label: rows x anchors."""
    z = f @ clf.weight + clf.bias
    return _logsumexp(z)[:, None] - z[:, labels]


def _stable_mean(values: np.ndarray, weights: Optional[np.ndarray] = None) -> float:
    # anchor on the first value so identical inputs reproduce it bit for bit
    values = np.asarray(values, dtype=np.float64).ravel()
    w = np.full(values.size, 1.0 / values.size) if weights is None else np.asarray(weights, dtype=np.float64).ravel()
    ref = values[0]
    return float(ref + np.dot(w, values - ref) / w.sum())


def plain_ce_at_means(model: GaussianClassModel, clf: ClassifierAffine, labels) -> float:
    labels = np.asarray(labels, dtype=np.intp)
    per_class = np.array([_stable_mean(_anchor_losses(model.means[k:k + 1], clf, labels)[0])
                          for k in range(model.n_classes)])
    return _stable_mean(per_class, model.proportions)


@dataclass(frozen=True)
class McResult:
    estimate: float
    stderr: float
    samples: int

    def interval(self, z: float = 1.96) -> tuple[float, float]:
        return self.estimate - z * self.stderr, self.estimate + z * self.stderr


def _chain(model, clf, labels, centers, n, seed, chain, shared):
    """Count, mean and sum of squared deviations of the per-draw loss excess."""
    rng = stream(seed, "theory", chain)
    k, d = model.means.shape
    sd = np.sqrt(model.variances)
    if shared:
        z = rng.standard_normal((n, d))
    combined = np.zeros(n)
    for c in range(k):
        if model.proportions[c] == 0.0:
            continue
        zc = z if shared else rng.standard_normal((n, d))
        f = model.means[c] + sd[c] * zc
        excess = (_anchor_losses(f, clf, labels) - centers[c]).mean(axis=1)
        combined += model.proportions[c] * excess
    mean = combined.mean()
    return n, mean, float(((combined - mean) ** 2).sum())


def _merge(stats: Iterable[tuple[int, float, float]]) -> tuple[int, float, float]:
    n, mean, m2 = 0, 0.0, 0.0
    for nb, mb, m2b in stats:
        if nb == 0:
            continue
        tot = n + nb
        delta = mb - mean
        mean = mean + delta * nb / tot
        m2 = m2 + m2b + delta * delta * n * nb / tot
        n = tot
    return n, mean, m2


def _monte_carlo(model, clf, labels, m, seed, shared, workers=1) -> McResult:
    if m < 1:
        raise ContractError("M must be >= 1")
    labels = np.asarray(labels, dtype=np.intp)
    if labels.size == 0 or labels.min() < 0 or labels.max() >= clf.weight.shape[1]:
        raise ContractError("anchor labels out of range")
    centers = [_anchor_losses(model.means[c:c + 1], clf, labels)[0] for c in range(model.n_classes)]
    base = _stable_mean(np.array([_stable_mean(v) for v in centers]), model.proportions)
    sizes = [min(CHUNK, m - s) for s in range(0, m, CHUNK)]
    jobs = [(model, clf, labels, centers, n, seed, i, shared) for i, n in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _chain(*a), jobs))
    else:
        parts = [_chain(*a) for a in jobs]
    n, mean, m2 = _merge(parts)  # reduced in chain-index order
    stderr = math.sqrt(m2 / (n - 1) / n) if n > 1 else float("inf")
    return McResult(base + mean, stderr, n)


def mc_estimate_Li(model: GaussianClassModel, clf: ClassifierAffine, labels, M: int, seed: int,
                   workers: int = 1) -> McResult:
    """Finite-M estimate: M independent draws per anchor and class."""
    return _monte_carlo(model, clf, labels, M, seed, shared=False, workers=workers)


def limit_Li(model: GaussianClassModel, clf: ClassifierAffine, labels, M: int = 10**6, seed: int = 0,
             workers: int = 1) -> McResult:
    """High-M reference; one set of normal draws is reused across classes and anchors."""
    return _monte_carlo(model, clf, labels, M, seed, shared=True, workers=workers)


def gaussian_mgf(w, mean, variance) -> float:
    """``E[exp(w^T x)]`` for ``x ~ N(mean, diag(variance))``."""
    w, mean, variance = (np.atleast_1d(np.asarray(a, dtype=np.float64)) for a in (w, mean, variance))
    return float(np.exp(w @ mean + 0.5 * w @ (variance * w)))


def mgf_upper_bound(model: GaussianClassModel, clf: ClassifierAffine, labels) -> float:
    labels = np.asarray(labels, dtype=np.intp)
    w = clf.weight
    per_class = []
    for k in range(model.n_classes):
        vals = []
        for y in labels:
            diff = w - w[:, [y]]  # d x K, column k' is W_k' - W_y
            a = model.means[k] @ w + clf.bias + 0.5 * (model.variances[k] @ (diff * diff))
            vals.append(_logsumexp(a) - a[y])
        per_class.append(_stable_mean(np.array(vals)))
    return _stable_mean(np.array(per_class), model.proportions)


# -- convergence report ---------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceRow:
    M: int
    estimate: float
    stderr: float
    bound: float
    gap: float
    cauchy_pass: bool
    diff_rms: float

    CSV_FIELDS = ("M", "estimate", "stderr", "bound", "gap", "cauchy_pass")

    def csv_row(self) -> list[str]:
        return [str(self.M), repr(self.estimate), repr(self.stderr), repr(self.bound), repr(self.gap),
                "true" if self.cauchy_pass else "false"]


def convergence_report(model: GaussianClassModel, clf: ClassifierAffine, labels, schedule: Sequence[int],
                       seeds: Sequence[int], workers: int = 1) -> list[ConvergenceRow]:
    """Per-M estimates pooled over ``seeds`` plus a Cauchy check against an independent 2M run.

    A seed passes at M when ``|est(2M) - est(M)| <= 5 * sqrt(se(M)^2 + se(2M)^2)``;
    ``cauchy_pass`` requires every seed to pass.
    """
    schedule = [int(m) for m in schedule]
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ContractError("M schedule must be strictly ascending")
    if not seeds:
        raise ContractError("need at least one seed")
    bound = mgf_upper_bound(model, clf, labels)
    rows = []
    for i, m in enumerate(schedule):
        ests, ses, diffs, ok = [], [], [], True
        for s in seeds:
            a = mc_estimate_Li(model, clf, labels, m, seed=_seed(s, i, 0), workers=workers)
            b = mc_estimate_Li(model, clf, labels, 2 * m, seed=_seed(s, i, 1), workers=workers)
            diff = abs(b.estimate - a.estimate)
            ok &= diff <= 5.0 * math.hypot(a.stderr, b.stderr)
            ests.append(a.estimate)
            ses.append(a.stderr)
            diffs.append(diff)
        est = float(np.mean(ests))
        se = float(math.sqrt(np.sum(np.square(ses))) / len(seeds))
        rows.append(ConvergenceRow(m, est, se, bound, bound - est, bool(ok),
                                   float(math.sqrt(np.mean(np.square(diffs))))))
    return rows


def _seed(base: int, step: int, half: int) -> int:
    return int(np.random.SeedSequence([int(base), step, half]).generate_state(1)[0])


def loglog_slope(rows: Sequence[ConvergenceRow]) -> float:
    """Least-squares slope of log(diff_rms) against log(M)."""
    x = np.log([r.M for r in rows])
    y = np.log([r.diff_rms for r in rows])
    return float(np.polyfit(x, y, 1)[0])
