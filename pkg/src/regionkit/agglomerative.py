"""Contiguity-constrained agglomerative clustering.

Only clusters joined by at least one graph edge are ever compared, so
the candidate set stays proportional to the number of graph edges
instead of all cluster pairs.  Candidates sit in a binary heap keyed by
``(linkage, smaller id, larger id)``; entries go stale when either
cluster is merged away and are skipped lazily on pop.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .objective import LINKAGES, as_features
from .spatial import Partition

__all__ = ["MergeTree", "constrained_agglomerative", "cut", "agglomerate"]

ORDERS = ("first", "full")
_KERNEL_KIND = {"single": _kernels.SINGLE, "complete": _kernels.COMPLETE, "average": _kernels.AVERAGE}


@dataclass(frozen=True, eq=False)
class MergeTree:
    """Dendrogram of ``n`` leaves.

    Merge ``t`` joins clusters ``left[t]`` and ``right[t]`` at linkage
    ``distance[t]`` into the new cluster ``n + t``.  Leaves are clusters
    ``0 .. n-1``.  ``edges[t]`` is the lightest graph edge that connected
    the two clusters when they merged, with weight ``edge_weight[t]``.
    """

    n: int
    left: np.ndarray
    right: np.ndarray
    distance: np.ndarray
    edges: np.ndarray
    edge_weight: np.ndarray

    @property
    def n_merges(self):
        return len(self.left)

    @property
    def n_components(self):
        return self.n - self.n_merges

    def records(self):
        """``(left, right, distance, new id)`` tuples in merge order."""
        return [
            (int(a), int(b), float(d), self.n + t)
            for t, (a, b, d) in enumerate(zip(self.left, self.right, self.distance))
        ]


def _edge_weights(graph, x):
    e = graph.edges()
    w = np.sqrt(((x[e[:, 0]] - x[e[:, 1]]) ** 2).sum(axis=1))
    return e, w


def agglomerate(graph, features, linkage="ward", order="full", allow_disconnected=False):
    """Run the constrained merge loop and return the :class:`MergeTree`.

    Parameters
    ----------
    graph : ContiguityGraph
    features : array_like, shape (n, m)
    linkage : {"ward", "complete", "average", "single"}
    order : {"full", "first"}
        ``full`` evaluates the linkage over all member pairs of the two
        clusters; ``first`` uses only the graph edges running between
        them (shortest, longest or mean edge length).  Ward linkage
        depends only on cluster sizes and means and ignores ``order``.
    allow_disconnected : bool
        If false (default) a disconnected graph raises ``ValueError``;
        otherwise one subtree per component is built and the tree has
        ``n - components`` merges.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}; choose from {LINKAGES}")
    if order not in ORDERS:
        raise ValueError(f"unknown order {order!r}; choose from {ORDERS}")
    n = graph.n
    x = as_features(features, n)
    if n >= 2 and not allow_disconnected and not graph.is_connected():
        raise ValueError("contiguity graph is disconnected; pass allow_disconnected=True for per-component trees")

    ward = linkage == "ward"
    full = order == "full" and not ward
    kind = _KERNEL_KIND.get(linkage)

    e, w = _edge_weights(graph, x)
    # per-neighbour record: [lightest (w, u, v), heaviest w, summed w, edge count, full-order linkage]
    links = [dict() for _ in range(max(2 * n - 1, 1))]
    for (u, v), wt in zip(e.tolist(), w.tolist()):
        links[u][v] = [(wt, u, v), wt, wt, 1, wt]
        links[v][u] = [(wt, u, v), wt, wt, 1, wt]

    size = np.zeros(max(2 * n - 1, 1))
    size[:n] = 1
    sums = np.zeros((max(2 * n - 1, 1), x.shape[1]))
    sums[:n] = x
    members = [[i] for i in range(n)] + [None] * max(n - 1, 0) if full else None

    def first_order(rec):
        if linkage == "single":
            return rec[0][0]
        if linkage == "complete":
            return rec[1]
        return rec[2] / rec[3]

    if ward:
        init = 0.5 * w**2
    else:
        init = w
    heap = [(d, int(u), int(v)) for d, (u, v) in zip(init.tolist(), e.tolist())]
    heapq.heapify(heap)

    alive = np.zeros(max(2 * n - 1, 1), dtype=bool)
    alive[:n] = True
    left, right, dist, tedges, tweights = [], [], [], [], []
    nxt = n
    while heap:
        d, a, b = heapq.heappop(heap)
        if not (alive[a] and alive[b]):
            continue
        c = nxt
        nxt += 1
        la, lb = links[a], links[b]
        joint = la.pop(b)
        del lb[a]
        left.append(a)
        right.append(b)
        dist.append(d)
        tedges.append(joint[0][1:])
        tweights.append(joint[0][0])
        alive[a] = alive[b] = False
        alive[c] = True
        size[c] = size[a] + size[b]
        sums[c] = sums[a] + sums[b]

        if len(la) < len(lb):
            big, small, big_id, small_id = lb, la, b, a
        else:
            big, small, big_id, small_id = la, lb, a, b
        if full:
            fresh = []
            for k, rec in big.items():
                if k not in small:
                    fresh.append((k, small_id, rec))
            for k, rec in small.items():
                if k not in big:
                    fresh.append((k, big_id, rec))
        for k, rs in small.items():
            rb = big.get(k)
            if rb is None:
                big[k] = rs
            else:
                if rs[0] < rb[0]:
                    rb[0] = rs[0]
                if rs[1] > rb[1]:
                    rb[1] = rs[1]
                rb[2] += rs[2]
                rb[3] += rs[3]
                if full:
                    if linkage == "single":
                        rb[4] = min(rb[4], rs[4])
                    elif linkage == "complete":
                        rb[4] = max(rb[4], rs[4])
                    else:
                        rb[4] = (size[big_id] * rb[4] + size[small_id] * rs[4]) / size[c]
        if full:
            # neighbours of only one side need the other side's linkage computed from members
            for k, other, rec in fresh:
                missing = _kernels.cross_linkage(
                    x, np.asarray(members[other], dtype=np.int64), np.asarray(members[k], dtype=np.int64), kind
                )
                known = rec[4]
                if linkage == "single":
                    rec[4] = min(known, missing)
                elif linkage == "complete":
                    rec[4] = max(known, missing)
                else:
                    mine = big_id if other == small_id else small_id
                    rec[4] = (size[mine] * known + size[other] * missing) / size[c]
            ma, mb = members[a], members[b]
            if len(ma) < len(mb):
                ma, mb = mb, ma
            ma.extend(mb)
            members[c] = ma
            members[a] = members[b] = None
        links[c] = big
        links[a] = links[b] = None

        nbrs = list(big)
        for k in nbrs:
            lk = links[k]
            lk.pop(a, None)
            lk.pop(b, None)
            lk[c] = big[k]
        if not nbrs:
            continue
        if ward:
            kk = np.asarray(nbrs)
            sk = size[kk]
            diff = sums[kk] / sk[:, None] - sums[c] / size[c]
            vals = (size[c] * sk / (size[c] + sk)) * (diff**2).sum(axis=1)
            for k, v in zip(nbrs, vals.tolist()):
                heapq.heappush(heap, (v, k, c))
        elif full:
            for k in nbrs:
                heapq.heappush(heap, (big[k][4], k, c))
        else:
            for k in nbrs:
                heapq.heappush(heap, (first_order(big[k]), k, c))

    return MergeTree(
        n=n,
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        distance=np.asarray(dist, dtype=float),
        edges=np.asarray(tedges, dtype=np.int64).reshape(-1, 2),
        edge_weight=np.asarray(tweights, dtype=float),
    )


def constrained_agglomerative(graph, features, linkage="ward", allow_disconnected=False):
    """Bottom-up clustering that only merges contiguous clusters.

    At each step the pair of graph-adjacent clusters with the smallest
    linkage is merged; ties go to the smallest ``(id, id)`` pair.  Ward
    merges can be non-monotone in distance; they are recorded as they
    happen and :func:`cut` works by merge order.

    Examples
    --------
    >>> from regionkit.spatial import ContiguityGraph
    >>> g = ContiguityGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    >>> tree = constrained_agglomerative(g, [[0.0], [1.0], [10.0]])
    >>> tree.records()[0][:2]
    (0, 1)
    """
    return agglomerate(graph, features, linkage=linkage, order="full", allow_disconnected=allow_disconnected)


def cut(tree, k):
    """Partition obtained by undoing the last ``k - 1`` merges."""
    k = int(k)
    if not tree.n_components <= k <= tree.n:
        raise ValueError(f"k must lie in [{tree.n_components}, {tree.n}], got {k}")
    applied = tree.n - k
    parent = np.arange(tree.n + applied)
    new = tree.n + np.arange(applied)
    parent[tree.left[:applied]] = new
    parent[tree.right[:applied]] = new
    while True:
        nxt = parent[parent]
        if np.array_equal(nxt, parent):
            break
        parent = nxt
    return Partition.from_labels(parent[: tree.n])
