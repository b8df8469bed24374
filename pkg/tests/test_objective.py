import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from regionkit.objective import (
    RegionSummary,
    between_variability,
    distance,
    linkage_distance,
    minmax_normalize,
    summarize,
    within_variability,
)
from regionkit.spatial import Partition

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


class TestDistance:
    def test_examples(self):
        assert distance([0] * 5, [0] * 5) == 0
        assert distance([3, 4], [0, 0]) == 5
        assert math.isclose(distance([1] * 5, [0] * 5), 2.2360680, rel_tol=1e-7)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            distance([1, 2], [1, 2, 3])


class TestVariability:
    def test_within_examples(self):
        x = np.array([[0.0], [2.0], [5.0]])
        assert within_variability(Partition(np.arange(3), 3), x) == 0
        assert within_variability(Partition(np.zeros(3, int), 1), np.ones((3, 2))) == 0
        assert within_variability(Partition(np.zeros(2, int), 1), [[0.0], [2.0]]) == 2

    def test_between_examples(self):
        x = np.array([[0.0], [2.0]])
        assert between_variability(Partition(np.zeros(2, int), 1), x) == 0
        assert between_variability(Partition(np.arange(2), 2), x) == 2
        assert between_variability(Partition(np.array([0, 1, 1]), 2), np.full((3, 4), 3.0)) == 0

    def test_against_oracle(self, rng):
        for _ in range(10):
            x = rng.normal(size=(30, 3))
            labels = rng.integers(0, 5, 30)
            labels[:5] = np.arange(5)
            p = Partition(labels, 5)
            assert math.isclose(within_variability(p, x), oracles.within(labels.tolist(), x.tolist()), rel_tol=1e-12)
            assert math.isclose(between_variability(p, x), oracles.between(labels.tolist(), x.tolist()), rel_tol=1e-12)

    def test_merging_can_decrease_unsquared_within(self):
        # with plain distances a merge can lower W; squared deviations never decrease
        x = np.array([[0.0], [0.0], [0.0], [3.0], [-3.0], [0.0], [0.0], [0.0]])
        split = Partition(np.array([0, 0, 0, 0, 1, 1, 1, 1]), 2)
        merged = Partition(np.zeros(8, int), 1)
        assert math.isclose(within_variability(split, x), 9.0)
        assert math.isclose(within_variability(merged, x), 6.0)
        assert sum(s.ssd for s in summarize(merged, x)) >= sum(s.ssd for s in summarize(split, x))


class TestLinkage:
    def test_examples(self):
        x = np.array([[0.0], [2.0]])
        assert linkage_distance("single", [0], [1], x) == 2
        assert linkage_distance("ward", [0], [1], x) == 2
        y = np.array([[0.0], [1.0], [5.0], [9.0]])
        assert linkage_distance("complete", [0, 1], [2, 3], y) == 9
        assert linkage_distance("single", [0, 1], [2, 3], y) == 4

    def test_errors(self):
        x = np.zeros((3, 1))
        with pytest.raises(ValueError):
            linkage_distance("single", [0, 1], [1, 2], x)
        with pytest.raises(ValueError):
            linkage_distance("median", [0], [1], x)
        with pytest.raises(ValueError):
            linkage_distance("single", [], [1], x)

    def test_against_oracle(self, rng):
        x = rng.normal(size=(12, 2))
        a, b = [0, 3, 5], [1, 7, 8, 11]
        for kind in ("ward", "complete", "average", "single"):
            expected = oracles.linkage(kind, a, b, x.tolist())
            assert math.isclose(linkage_distance(kind, a, b, x), expected, rel_tol=1e-12, abs_tol=1e-12)


class TestNormalize:
    def test_examples(self):
        out = minmax_normalize([[0.0, 7.0, 0.2], [5.0, 7.0, 1.0], [10.0, 7.0, 0.0]])
        assert np.allclose(out[:, 0], [0, 0.5, 1])
        assert np.all(out[:, 1] == 0)
        assert np.allclose(out[:, 2], [0.2, 1.0, 0.0])

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            minmax_normalize([[0.0], [np.nan]])


class TestRegionSummary:
    def test_incremental_matches_direct(self, rng):
        x = rng.normal(size=(40, 3))
        s = RegionSummary.of(x[:10])
        for i in range(10, 25):
            s.add(x[i])
        for i in range(3):
            s.remove(x[i])
        ref = x[3:25]
        assert s.count == 22
        assert np.allclose(s.mean, ref.mean(axis=0), rtol=1e-9)
        assert math.isclose(s.ssd, oracles.ssd(ref.tolist()), rel_tol=1e-9)

    def test_cannot_empty(self):
        s = RegionSummary.of([[1.0]])
        with pytest.raises(ValueError):
            s.remove([1.0])


vectors = st.integers(1, 4).flatmap(lambda m: st.tuples(*[arrays(float, m, elements=finite) for _ in range(3)]))


@settings(max_examples=100, deadline=None)
@given(vectors)
def test_triangle_inequality(triple):
    u, v, w = triple
    assert distance(u, w) <= distance(u, v) + distance(v, w) + 1e-9
    assert distance(u, v) == distance(v, u)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12), st.integers(1, 3))
def test_linkage_ordering(seed, n, m):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, m))
    perm = rng.permutation(n)
    cut = int(rng.integers(1, n))
    a, b = perm[:cut], perm[cut:]
    sl, al, cl = (linkage_distance(k, a, b, x) for k in ("single", "average", "complete"))
    assert sl <= al + 1e-12 and al <= cl + 1e-12
    assert linkage_distance("ward", a, b, x) >= -1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 15))
def test_merging_never_decreases_ssd(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    k = int(rng.integers(2, n + 1))
    labels = np.concatenate([np.arange(k), rng.integers(0, k, n - k)])
    p = Partition(rng.permutation(labels), k)
    merged = Partition(np.where(p.labels == k - 1, 0, p.labels), k - 1) if k > 1 else p
    before = sum(s.ssd for s in summarize(p, x))
    after = sum(s.ssd for s in summarize(merged, x))
    assert after >= before - 1e-9 * (1 + before)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 20))
def test_summaries_agree_with_direct(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3)) * 10
    k = int(rng.integers(1, n + 1))
    labels = rng.permutation(np.concatenate([np.arange(k), rng.integers(0, k, n - k)]))
    p = Partition(labels, k)
    summaries = summarize(p, x)
    mu = x.mean(axis=0)
    w_inc = sum(np.sqrt(((x[m] - s.mean) ** 2).sum(axis=1)).sum() for m, s in zip(p.regions(), summaries))
    b_inc = sum(s.count * np.sqrt(((s.mean - mu) ** 2).sum()) for s in summaries)
    assert math.isclose(w_inc, within_variability(p, x), rel_tol=1e-9, abs_tol=1e-9)
    assert math.isclose(b_inc, between_variability(p, x), rel_tol=1e-9, abs_tol=1e-9)
