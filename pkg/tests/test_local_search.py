import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import grid_graph, hex_patch, random_connected_graph
from regionkit.local_search import azp, azp_initial, azp_search, kmeans_baseline, maxp
from regionkit.objective import within_variability
from regionkit.spatial import ContiguityGraph, Partition, build_rook_contiguity, is_region_connected


def all_connected(graph, p):
    return all(is_region_connected(graph, m) for m in p.regions())


def single_moves(graph, labels):
    """Every legal single-unit move: (unit, new region) keeping the donor nonempty and connected."""
    edges = graph.edges().tolist()
    n = len(labels)
    out = []
    for u in range(n):
        donor = [i for i in range(n) if labels[i] == labels[u] and i != u]
        if not donor or not oracles.connected(n, edges, donor):
            continue
        for r in sorted({labels[b] for b in graph.neighbors(u)} - {labels[u]}):
            out.append((u, r))
    return out


class TestInitial:
    def test_extremes(self):
        g = grid_graph(3, 3)
        assert azp_initial(g, 1).k == 1
        assert azp_initial(g, 9).labels.tolist() == list(range(9))
        with pytest.raises(ValueError):
            azp_initial(g, 10)

    def test_hex_patch(self):
        units = hex_patch(4)[:50]
        g = build_rook_contiguity(units)
        assert g.is_connected()
        p = azp_initial(g, 5, seed=3)
        assert p.k == 5 and p.n == 50
        assert all_connected(g, p)
        assert azp_initial(g, 5, seed=3) == p

    def test_disconnected(self):
        with pytest.raises(ValueError):
            azp_initial(ContiguityGraph.from_edges(4, [(0, 1), (2, 3)]), 2)


class TestAzp:
    def test_optimal_split_accepts_nothing(self):
        g = ContiguityGraph.from_edges(6, [(i, i + 1) for i in range(5)])
        x = np.array([[0.0], [0.1], [0.2], [9.8], [9.9], [10.0]])
        start = Partition(np.array([0, 0, 0, 1, 1, 1]), 2)
        w0 = within_variability(start, x)
        # enumeration: no legal single move lowers W
        for u, r in single_moves(g, start.labels.tolist()):
            lab = start.labels.copy()
            lab[u] = r
            assert oracles.within(lab.tolist(), x.tolist()) >= w0
        state = azp_search(g, x, 2, seed=0, initial=start)
        assert state.moves == 0
        assert state.partition == start

    def test_grid_converges_to_row_split(self):
        g = grid_graph(2, 2)
        x = np.array([[0.0], [0.0], [10.0], [10.0]])
        for seed in range(10):
            p = azp(g, x, 2, seed=seed)
            assert p.labels.tolist() == [0, 0, 1, 1]
            assert within_variability(p, x) == 0

    def test_trace_non_increasing_and_consistent(self, rng):
        g = grid_graph(8, 8)
        x = rng.normal(size=(64, 3))
        trace = []
        state = azp_search(g, x, 6, seed=4, trace=trace, check=True)
        assert len(trace) == state.moves + 1
        assert all(b < a for a, b in zip(trace, trace[1:]))
        w = within_variability(state.partition, x)
        assert math.isclose(state.objective, w, rel_tol=1e-6)
        assert all_connected(g, state.partition)
        assert state.partition.k == 6

    def test_local_optimum(self, rng):
        g = random_connected_graph(rng, 30, extra=0.6)
        x = rng.normal(size=(30, 2))
        p = azp(g, x, 4, seed=1)
        w = within_variability(p, x)
        for u, r in single_moves(g, p.labels.tolist()):
            lab = p.labels.copy()
            lab[u] = r
            assert oracles.within(lab.tolist(), x.tolist()) >= w * (1 - 1e-9)

    def test_deterministic(self, rng):
        g = grid_graph(6, 7)
        x = rng.normal(size=(42, 2))
        assert azp(g, x, 5, seed=9) == azp(g, x, 5, seed=9)

    def test_max_passes(self, rng):
        g = grid_graph(10, 10)
        x = rng.normal(size=(100, 2))
        state = azp_search(g, x, 5, seed=0, max_passes=1)
        assert state.passes == 1


class TestMaxp:
    def test_threshold_equals_total(self, rng):
        g = grid_graph(4, 4)
        p = maxp(g, rng.normal(size=(16, 2)), threshold=16, seed=0)
        assert p.k == 1

    def test_unit_threshold_gives_singletons(self, rng):
        g = grid_graph(4, 4)
        assert maxp(g, rng.normal(size=(16, 2)), threshold=1, seed=0).k == 16

    def test_errors(self):
        g = grid_graph(2, 2)
        with pytest.raises(ValueError):
            maxp(g, np.zeros((4, 1)), threshold=5)
        with pytest.raises(ValueError):
            maxp(g, np.zeros((4, 1)), threshold=0)
        with pytest.raises(ValueError):
            maxp(g, np.zeros((4, 1)), spatial_attr=[1, -1, 1, 1], threshold=1)

    def test_weighted_threshold(self, rng):
        g = grid_graph(6, 6)
        w = rng.uniform(0.5, 3.0, 36)
        t = 0.2 * w.sum()
        p = maxp(g, rng.normal(size=(36, 2)), spatial_attr=w, threshold=t, seed=2)
        assert all(w[m].sum() >= t for m in p.regions())
        assert p.k <= math.floor(w.sum() / t)
        assert all_connected(g, p)

    def test_local_search_does_not_hurt(self, rng):
        g = grid_graph(8, 8)
        x = rng.normal(size=(64, 2))
        raw = maxp(g, x, threshold=8, seed=5, restarts=4, local_search=False)
        tuned = maxp(g, x, threshold=8, seed=5, restarts=4)
        assert tuned.k == raw.k
        assert within_variability(tuned, x) <= within_variability(raw, x) + 1e-12

    def test_level0_ten_percent(self, level0):
        _, graph, x = level0
        p = maxp(graph, x, seed=0, restarts=4)
        assert 1 <= p.k <= 10
        assert np.all(p.sizes() >= 0.1 * graph.n)


class TestKmeans:
    def test_extremes(self, rng):
        x = rng.normal(size=(6, 2))
        assert kmeans_baseline(x, 6).labels.tolist() == list(range(6))
        assert kmeans_baseline(x, 1).k == 1
        with pytest.raises(ValueError):
            kmeans_baseline(x, 7)

    def test_two_blobs(self, rng):
        x = np.vstack([rng.normal(0, 0.1, (20, 2)), rng.normal(50, 0.1, (20, 2))])
        p = kmeans_baseline(x, 2, seed=0)
        assert p.labels.tolist() == [0] * 20 + [1] * 20

    def test_deterministic(self, rng):
        x = rng.normal(size=(100, 3))
        assert kmeans_baseline(x, 5, seed=1) == kmeans_baseline(x, 5, seed=1)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 30), st.integers(1, 6))
def test_azp_invariants(seed, n, m):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(rng, n, extra=0.4)
    x = rng.normal(size=(n, 2))
    m = min(m, n)
    start = azp_initial(g, m, seed)
    trace = []
    state = azp_search(g, x, m, seed=seed, trace=trace, check=True)
    assert state.partition.k == m
    assert all_connected(g, state.partition)
    assert trace[0] == pytest.approx(within_variability(start, x), rel=1e-9)
    assert state.objective <= trace[0]
    assert math.isclose(state.objective, within_variability(state.partition, x), rel_tol=1e-6, abs_tol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.integers(1, 4))
def test_maxp_reaches_brute_force_maximum(seed, n, t):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(rng, n, extra=0.3)
    t = min(t, n)
    x = rng.normal(size=(n, 1))
    p = maxp(g, x, threshold=t, seed=seed, restarts=64)
    assert p.k == oracles.max_regions(n, g.edges().tolist(), t)
    assert np.all(p.sizes() >= t)
    assert p.k <= n // t
    assert all_connected(g, p)
