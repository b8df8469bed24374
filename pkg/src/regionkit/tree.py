"""Spanning-tree regionalization: SKATER and the REDCAP family.

Both build a spanning tree over the contiguity graph and then cut it
``k - 1`` times.  Each cut removes the tree edge whose removal leaves
the smallest total within variability over the resulting forest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .agglomerative import agglomerate
from .objective import as_features
from .spatial import Partition

__all__ = ["SpanningTree", "build_mst", "prune_tree", "skater", "redcap_tree", "redcap"]


@dataclass(frozen=True, eq=False)
class SpanningTree:
    """``n - 1`` undirected edges (``u < v``) with their weights."""

    n: int
    edges: np.ndarray
    weights: np.ndarray

    @property
    def total_weight(self):
        return float(self.weights.sum())

    def edge_set(self):
        return {(int(u), int(v)) for u, v in self.edges}


def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def build_mst(graph, features):
    """Kruskal minimum spanning tree with Euclidean feature weights.

    Ties are broken by ``(weight, u, v)`` so the tree is deterministic.
    """
    n = graph.n
    x = as_features(features, n)
    e = graph.edges()
    w = np.sqrt(((x[e[:, 0]] - x[e[:, 1]]) ** 2).sum(axis=1))
    order = np.lexsort((e[:, 1], e[:, 0], w))
    parent = list(range(n))
    chosen = []
    for t in order.tolist():
        u, v = e[t]
        ru, rv = _find(parent, int(u)), _find(parent, int(v))
        if ru != rv:
            parent[ru] = rv
            chosen.append(t)
            if len(chosen) == n - 1:
                break
    if len(chosen) < n - 1:
        first = {}
        for i in range(n):
            first.setdefault(_find(parent, i), i)
        roots = first
        a, b = sorted(first.values())[:2]
        raise ValueError(
            f"contiguity graph is disconnected ({len(roots)} components): no edge bridges "
            f"the components containing units {a} and {b}"
        )
    chosen = np.asarray(sorted(chosen), dtype=np.int64)
    return SpanningTree(n, e[chosen].reshape(-1, 2), w[chosen])


class _Forest:
    """Tree adjacency under successive edge removals."""

    def __init__(self, tree, x, exhaustive=False):
        self.x = x
        self.exhaustive = exhaustive
        self.adj = [set() for _ in range(tree.n)]
        for u, v in tree.edges.tolist():
            self.adj[u].add(v)
            self.adj[v].add(u)

    def walk(self, root):
        order, parent = [], {root: -1}
        stack = [root]
        while stack:
            u = stack.pop()
            order.append(u)
            for v in sorted(self.adj[u], reverse=True):
                if v != parent[u]:
                    parent[v] = u
                    stack.append(v)
        return order, parent

    def best_cut(self, root):
        """Best edge of the component containing ``root``.

        Returns ``(cost after cut, (u, v), cost before, nodes)``; the cost
        is ``inf`` for a single-node component.
        """
        order, parent = self.walk(root)
        s = len(order)
        nodes = np.asarray(order, dtype=np.int64)
        xt = np.ascontiguousarray(self.x[nodes].T)
        before = _kernels.members_cost(self.x, nodes, -1, -1, self.x[nodes].mean(axis=0))
        if s == 1:
            return np.inf, None, before, nodes
        # preorder: every subtree is a contiguous block of ``order``
        pos = {v: i for i, v in enumerate(order)}
        size = np.ones(s, dtype=np.int64)
        for i in range(s - 1, 0, -1):
            size[pos[parent[order[i]]]] += size[i]
        starts = np.arange(1, s, dtype=np.int64)
        stops = starts + size[1:]
        child = nodes[1:]
        par = np.array([parent[v] for v in order[1:]], dtype=np.int64)
        lo, hi = np.minimum(child, par), np.maximum(child, par)
        if self.exhaustive:
            costs = _kernels.split_costs(xt, starts, stops)
            best = np.lexsort((hi, lo, costs))[0]
            cost = costs[best]
        else:
            best, cost, _ = _kernels.best_split(xt, starts, stops, lo, hi)
        return float(cost), (int(lo[best]), int(hi[best])), before, nodes

    def remove(self, u, v):
        self.adj[u].discard(v)
        self.adj[v].discard(u)


def prune_tree(tree, features, k, trace=None, exhaustive=False):
    """Cut a spanning tree into ``k`` connected regions.

    Each round evaluates, for every remaining tree edge, the total
    within variability of the forest after removing it, and removes the
    best edge (ties: smallest ``(u, v)``).  Only the two components
    created by the previous cut are re-evaluated.

    Parameters
    ----------
    trace : list, optional
        Receives the removed ``(u, v)`` edges in order.
    exhaustive : bool
        Evaluate every edge exactly instead of pruning candidates with a
        convexity lower bound.  Both give the same cuts; this is the slow
        reference route.
    """
    n = tree.n
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    x = as_features(features, n)
    forest = _Forest(tree, x, exhaustive)
    # component state keyed by its smallest node: (gain, edge, cost, nodes)
    comps = {}

    def evaluate(root):
        after, edge, before, nodes = forest.best_cut(root)
        comps[int(nodes.min())] = (before - after, edge, before, nodes)

    if n:
        evaluate(0)
    for _ in range(k - 1):
        key = min(comps, key=lambda c: (-comps[c][0], comps[c][1] or (n, n)))
        gain, edge, _, _ = comps.pop(key)
        if edge is None:
            raise RuntimeError("no cuttable edge left")
        forest.remove(*edge)
        if trace is not None:
            trace.append(edge)
        evaluate(edge[0])
        evaluate(edge[1])

    labels = np.empty(n, dtype=np.int64)
    for r, c in enumerate(sorted(comps)):
        labels[comps[c][3]] = r
    return Partition.from_labels(labels)


def skater(graph, features, k):
    """SKATER: minimum spanning tree followed by best-objective pruning.

    Examples
    --------
    >>> from regionkit.spatial import ContiguityGraph
    >>> g = ContiguityGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
    >>> skater(g, [[0.0], [0.0], [10.0], [10.0]], 2).labels.tolist()
    [0, 0, 1, 1]
    """
    if not 1 <= k <= graph.n:
        raise ValueError(f"k must lie in [1, {graph.n}], got {k}")
    return prune_tree(build_mst(graph, features), features, k)


def redcap_tree(graph, features, linkage="complete", order="full"):
    """Spanning tree built by contiguity-constrained agglomeration.

    Every merge contributes the lightest graph edge joining the two
    clusters; the ``n - 1`` recorded edges form the tree.  With single
    linkage and first order this is exactly Kruskal's algorithm.
    """
    merged = agglomerate(graph, features, linkage=linkage, order=order)
    edges = np.sort(merged.edges, axis=1)
    return SpanningTree(graph.n, edges, merged.edge_weight.copy())


def redcap(graph, features, k, linkage="complete", order="full"):
    """REDCAP regionalization: :func:`redcap_tree` then :func:`prune_tree`."""
    if not 1 <= k <= graph.n:
        raise ValueError(f"k must lie in [1, {graph.n}], got {k}")
    return prune_tree(redcap_tree(graph, features, linkage, order), features, k)
