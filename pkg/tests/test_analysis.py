import math

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.spatial.distance import pdist

from saff import analysis, pipeline
from saff.analysis import CenterSet
from saff.errors import ContractError


def _cs(rows, present=None):
    rows = np.asarray(rows, dtype=float)
    present = np.ones(len(rows), bool) if present is None else np.asarray(present)
    return CenterSet("x", rows, present, present.astype(int))


def test_distance_examples(rng):
    a = rng.standard_normal((4, 3))
    assert analysis.inter_domain_distance(_cs(a), _cs(a)) == 0.0
    assert analysis.inter_domain_distance(_cs([[0.0]]), _cs([[2.0]])) == 4.0
    b = rng.standard_normal((4, 3))
    assert analysis.inter_domain_distance(_cs(a), _cs(b)) == analysis.inter_domain_distance(_cs(b), _cs(a)) > 0


def test_absent_classes_are_skipped():
    a = _cs([[0.0], [100.0]], [True, False])
    b = _cs([[1.0], [0.0]])
    assert analysis.inter_domain_distance(a, b) == 1.0
    with pytest.raises(ContractError):
        analysis.inter_domain_distance(_cs([[0.0]], [False]), _cs([[0.0]]))


def test_identical_rows_fall_in_the_zero_bin():
    h = analysis.jl_histogram(np.ones((2, 5)), bins=10)
    assert h.counts[0] == 1 and h.counts.sum() == 1


def test_counts_sum_to_pair_count(rng):
    for n in (2, 7, 31):
        h = analysis.jl_histogram(rng.standard_normal((n, 6)), bins=13, seed=n)
        assert h.counts.sum() == n * (n - 1) // 2 and len(h.edges) == 14


def test_histogram_is_seeded(rng):
    x = rng.standard_normal((20, 6))
    a, b = analysis.jl_histogram(x, seed=3), analysis.jl_histogram(x, seed=3)
    assert np.array_equal(a.counts, b.counts) and np.array_equal(a.edges, b.edges)


def jl_epsilon(n, k):
    # smallest eps with k >= 4 ln n / (eps^2/2 - eps^3/3)
    return brentq(lambda e: e * e / 2 - e ** 3 / 3 - 4 * math.log(n) / k, 1e-9, 1.0)


def test_projection_preserves_distances(rng):
    n, k = 60, 256
    x = rng.standard_normal((n, 40))
    proj = x @ analysis.random_projection(40, k, seed=0)
    ratio = pdist(proj) ** 2 / pdist(x) ** 2
    assert np.quantile(np.abs(ratio - 1), 0.99) <= jl_epsilon(n, k)


def test_centres_use_labels_or_predictions(tiny_config, tiny_data):
    src, tgt = tiny_data
    params = pipeline.pretrain_source(tiny_config, src)
    feats, pred = analysis.features(params, src)
    cs = analysis.class_centers(params, src)
    for k in range(5):
        np.testing.assert_allclose(cs.centers[k], feats[src.labels == k].mean(axis=0), rtol=1e-13)
    ct = analysis.class_centers(params, tgt.hidden())
    _, tpred = analysis.features(params, tgt)
    assert ct.counts.tolist() == np.bincount(tpred, minlength=5).tolist()


def test_csv_writers(tmp_path, rng):
    cs = _cs(rng.standard_normal((2, 3)), [True, False])
    analysis.write_centers(tmp_path / "c.csv", cs)
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "class,present,count,c0,c1,c2" and lines[2].startswith("1,0,0,")
    analysis.write_histogram(tmp_path / "h.csv", analysis.jl_histogram(rng.standard_normal((5, 3)), bins=4))
    assert len((tmp_path / "h.csv").read_text().splitlines()) == 5
