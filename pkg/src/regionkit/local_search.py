"""Swap-based local search: AZP, the max-p-regions heuristic, and an
unconstrained K-Means baseline.

Both AZP and the max-p local-search phase move one unit at a time from a
donor region into a neighbouring receiver region.  A move is accepted
only when it strictly lowers the within variability and the donor stays
nonempty and connected (and, for max-p, above the threshold).
"""

from __future__ import annotations

import random
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2

from . import _kernels
from .objective import as_features
from .spatial import Partition

__all__ = ["SearchState", "azp_initial", "azp", "azp_search", "maxp", "kmeans_baseline"]


@dataclass
class SearchState:
    """Outcome of a local search run."""

    partition: Partition
    objective: float
    seed: int
    moves: int = 0
    passes: int = 0
    trace: list = field(default_factory=list, repr=False)


def _require_connected(graph):
    if graph.n >= 2 and not graph.is_connected():
        raise ValueError("contiguity graph must be connected")


def azp_initial(graph, m, seed=0):
    """Random contiguous partition into ``m`` regions.

    ``m`` seed units are drawn at random and regions grow by randomized
    breadth-first accretion: a random (frontier unit, region) pair is
    drawn and the unit joins that region if still unassigned.
    """
    n = graph.n
    if not 1 <= m <= n:
        raise ValueError(f"m must lie in [1, {n}], got {m}")
    _require_connected(graph)
    adj = graph.adjacency_lists()
    rng = random.Random(seed)
    labels = [-1] * n
    frontier = []
    for r, s in enumerate(rng.sample(range(n), m)):
        labels[s] = r
    for s in range(n):
        if labels[s] >= 0:
            frontier.extend((b, labels[s]) for b in adj[s] if labels[b] < 0)
    while frontier:
        j = rng.randrange(len(frontier))
        frontier[j], frontier[-1] = frontier[-1], frontier[j]
        v, r = frontier.pop()
        if labels[v] >= 0:
            continue
        labels[v] = r
        frontier.extend((b, r) for b in adj[v] if labels[b] < 0)
    return Partition.from_labels(labels)


class _SwapSearch:
    """Single-unit move engine shared by AZP and the max-p swap phase.

    Region members live in per-region index buffers with swap-remove, so
    a move costs O(1) bookkeeping; the exact cost of a candidate move is
    one pass over the two regions involved.
    """

    def __init__(self, graph, x, labels, rng, attr=None, threshold=None, check=False, trace=None, tol=1e-10):
        n = graph.n
        self.graph = graph
        self.adj = graph.adjacency_lists()
        self.x = x
        self.rng = rng
        self.labels = [int(v) for v in labels]
        self.lab = np.asarray(self.labels, dtype=np.int64)
        self.k = max(self.labels) + 1
        self.counts = np.bincount(self.lab, minlength=self.k).tolist()
        self.buf = [np.empty(max(2 * c, 16), dtype=np.int64) for c in self.counts]
        self.pos = np.empty(n, dtype=np.int64)
        fill = [0] * self.k
        for i, r in enumerate(self.labels):
            self.buf[r][fill[r]] = i
            self.pos[i] = fill[r]
            fill[r] += 1
        self.sums = np.zeros((self.k, x.shape[1]))
        np.add.at(self.sums, self.lab, x)
        self.attr = attr
        self.threshold = threshold
        if attr is not None:
            self.attr_tot = np.bincount(self.lab, weights=np.asarray(attr, dtype=float), minlength=self.k).tolist()
        self.grad = np.zeros((self.k, x.shape[1]))
        self.cost = [
            _kernels.members_cost_grad(x, self.array(r), -1, -1, self.sums[r] / self.counts[r], self.grad[r])
            for r in range(self.k)
        ]
        self._gd = np.empty(x.shape[1])
        self._gr = np.empty(x.shape[1])
        self.exact_evals = 0
        self._stamp_of = np.zeros(n, dtype=np.int64)
        self._owner = np.empty(n, dtype=np.int64)
        self._link = np.empty(n, dtype=np.int64)
        self._stamp = 0
        self.check = check
        self.trace = trace
        self.tol = tol
        self.moves = 0
        if trace is not None:
            trace.append(self.objective)

    @property
    def objective(self):
        return float(sum(self.cost))

    def array(self, r):
        return self.buf[r][: self.counts[r]]

    def _ring_connected(self, u, targets):
        tset = set(targets)
        seen = {targets[0]}
        stack = [targets[0]]
        adj = self.adj
        while stack:
            a = stack.pop()
            for b in adj[a]:
                if b in tset and b not in seen:
                    seen.add(b)
                    stack.append(b)
        return len(seen) == len(tset)

    def _stays_connected(self, u, donor, targets):
        """Whether ``donor`` minus ``u`` is connected (search inside the donor)."""
        self._stamp += 1
        return _kernels.stays_connected(
            self.graph.indptr, self.graph.indices, self.lab, u, donor,
            np.asarray(targets, dtype=np.int64), self._stamp_of, self._owner, self._link, self._stamp,
        )

    def try_move(self, u, donor, receiver):
        if self.counts[donor] <= 1:
            return False
        if self.threshold is not None and self.attr_tot[donor] - self.attr[u] < self.threshold:
            return False
        x = self.x
        old = self.cost[donor] + self.cost[receiver]
        limit = -self.tol * max(1.0, old)
        bound = _kernels.move_bound(x, u, self.sums[donor], self.counts[donor], self.grad[donor],
                                    self.sums[receiver], self.counts[receiver], self.grad[receiver])
        # the bound cannot clear the acceptance bar: the exact change would not either
        if bound - 1e-9 * (old + 1.0) >= limit:
            return False
        targets = [b for b in self.adj[u] if self.labels[b] == donor]
        if len(targets) > 1 and not self._ring_connected(u, targets):
            if not self._stays_connected(u, donor, targets):
                return False
        self.exact_evals += 1
        mu_d = (self.sums[donor] - x[u]) / (self.counts[donor] - 1)
        mu_r = (self.sums[receiver] + x[u]) / (self.counts[receiver] + 1)
        c_d = _kernels.members_cost_grad(x, self.array(donor), u, -1, mu_d, self._gd)
        c_r = _kernels.members_cost_grad(x, self.array(receiver), -1, u, mu_r, self._gr)
        if c_d + c_r - old >= limit:
            return False
        if self.check:
            # independent full search over the donor, not the early-exit one used above
            ok = _kernels.connected_without(self.graph.indptr, self.graph.indices, self.lab, donor,
                                            self.counts[donor], u)
            assert ok, f"moving {u} disconnects region {donor}"
        self._apply(u, donor, receiver, c_d, c_r)
        self.grad[donor] = self._gd
        self.grad[receiver] = self._gr
        return True

    def _apply(self, u, donor, receiver, c_d, c_r):
        self.labels[u] = receiver
        self.lab[u] = receiver
        i, last = self.pos[u], self.counts[donor] - 1
        moved = self.buf[donor][last]
        self.buf[donor][i] = moved
        self.pos[moved] = i
        self.counts[donor] = last
        c = self.counts[receiver]
        if c == len(self.buf[receiver]):
            self.buf[receiver] = np.concatenate([self.buf[receiver], np.empty(c, dtype=np.int64)])
        self.buf[receiver][c] = u
        self.pos[u] = c
        self.counts[receiver] = c + 1
        self.sums[donor] -= self.x[u]
        self.sums[receiver] += self.x[u]
        if self.attr is not None:
            self.attr_tot[donor] -= self.attr[u]
            self.attr_tot[receiver] += self.attr[u]
        self.cost[donor] = c_d
        self.cost[receiver] = c_r
        self.moves += 1
        if self.trace is not None:
            self.trace.append(self.objective)

    def improve_region(self, r):
        lab, adj, rng = self.labels, self.adj, self.rng
        border = set()
        for v in self.array(r).tolist():
            for b in adj[v]:
                if lab[b] != r:
                    border.add(b)
        cand = sorted(border)
        rng.shuffle(cand)
        pending = set(cand)
        moved = False
        while cand:
            u = cand.pop()
            pending.discard(u)
            if lab[u] == r:
                continue
            if self.try_move(u, lab[u], r):
                moved = True
                for b in adj[u]:
                    if lab[b] != r and b not in pending:
                        pending.add(b)
                        cand.append(b)
                        j = rng.randrange(len(cand))
                        cand[j], cand[-1] = cand[-1], cand[j]
        return moved

    def run(self, max_passes=None):
        passes = 0
        while True:
            order = list(range(self.k))
            self.rng.shuffle(order)
            moved = False
            for r in order:
                moved |= self.improve_region(r)
            passes += 1
            if not moved or (max_passes is not None and passes >= max_passes):
                return passes


def azp_search(graph, features, m, seed=0, max_passes=None, trace=None, check=False, initial=None):
    """AZP local search returning the full :class:`SearchState`.

    Parameters
    ----------
    max_passes : int, optional
        Stop after this many passes over the regions even if moves were
        still being accepted.
    trace : list, optional
        Receives the objective before the first move and after each
        accepted move.
    check : bool
        Verify every accepted move with a full connectivity test of the
        donor region.
    initial : Partition, optional
        Start from this partition instead of :func:`azp_initial`.
    """
    x = as_features(features, graph.n)
    start = azp_initial(graph, m, seed) if initial is None else initial
    rng = random.Random(seed)
    search = _SwapSearch(graph, x, start.labels, rng, check=check, trace=trace)
    passes = search.run(max_passes)
    return SearchState(
        partition=Partition.from_labels(search.labels),
        objective=search.objective,
        seed=seed,
        moves=search.moves,
        passes=passes,
        trace=trace if trace is not None else [],
    )


def azp(graph, features, m, seed=0, max_passes=None, trace=None, check=False):
    """Automatic Zoning Procedure.

    Starts from :func:`azp_initial` and repeatedly visits the regions in
    random order.  For each region the units bordering it are drawn at
    random and moved in when that strictly lowers the within
    variability without disconnecting or emptying the donor.  Stops after
    a full pass with no accepted move.
    """
    return azp_search(graph, features, m, seed, max_passes, trace, check).partition


def _grow_regions(adj, attr, threshold, rng):
    n = len(adj)
    labels = [-1] * n  # -1 unassigned, -2 enclave
    order = list(range(n))
    rng.shuffle(order)
    p = 0
    enclaves = []
    for s in order:
        if labels[s] != -1:
            continue
        region = [s]
        labels[s] = p
        total = attr[s]
        cand = [b for b in adj[s] if labels[b] == -1]
        pending = set(cand)
        while total < threshold and cand:
            j = rng.randrange(len(cand))
            cand[j], cand[-1] = cand[-1], cand[j]
            v = cand.pop()
            labels[v] = p
            region.append(v)
            total += attr[v]
            for b in adj[v]:
                if labels[b] == -1 and b not in pending:
                    pending.add(b)
                    cand.append(b)
        if total >= threshold:
            p += 1
        else:
            for v in region:
                labels[v] = -2
            enclaves.extend(region)
    return labels, p, enclaves


def _assign_enclaves(adj, x, labels, p, enclaves):
    sums = np.zeros((p, x.shape[1]))
    counts = np.zeros(p)
    for i, r in enumerate(labels):
        if r >= 0:
            sums[r] += x[i]
            counts[r] += 1
    pending = list(enclaves)
    while pending:
        rest = []
        for u in pending:
            regions = sorted({labels[b] for b in adj[u] if labels[b] >= 0})
            if not regions:
                rest.append(u)
                continue
            means = sums[regions] / counts[regions][:, None]
            best = regions[int(np.argmin(((means - x[u]) ** 2).sum(axis=1)))]
            labels[u] = best
            sums[best] += x[u]
            counts[best] += 1
        if len(rest) == len(pending):
            raise ValueError("enclave units cannot reach any region; graph is disconnected")
        pending = rest
    return labels


def maxp(graph, features, spatial_attr=None, threshold=None, seed=0, restarts=16, local_search=True,
         max_passes=None):
    """Max-p-regions heuristic.

    Finds as many contiguous regions as possible such that each region's
    summed ``spatial_attr`` reaches ``threshold``, then lowers the within
    variability by threshold-respecting swaps.

    Parameters
    ----------
    spatial_attr : array_like, optional
        Nonnegative per-unit weights; defaults to ones, so the threshold
        counts units.
    threshold : float
        Minimum summed attribute per region.  Defaults to 10% of the total.
    restarts : int
        Number of independent constructions.  The result maximises the
        region count, then minimises the within variability (ties go to
        the earliest restart).
    local_search : bool
        Run the swap phase on every construction that reaches the best
        region count.

    Returns
    -------
    Partition
        The region count is determined by the data, not by the caller.
    """
    n = graph.n
    x = as_features(features, n)
    attr = np.ones(n) if spatial_attr is None else np.asarray(spatial_attr, dtype=float)
    if attr.shape != (n,) or np.any(attr < 0):
        raise ValueError("spatial_attr must hold one nonnegative weight per unit")
    total = float(attr.sum())
    if threshold is None:
        threshold = 0.1 * total
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    if total < threshold:
        raise ValueError(f"total attribute {total:g} is below the threshold {threshold:g}")
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    _require_connected(graph)
    adj = graph.adjacency_lists()
    attr_list = attr.tolist()
    rng = random.Random(seed)

    built = []
    for _ in range(restarts):
        labels, p, enclaves = _grow_regions(adj, attr_list, threshold, rng)
        built.append((p, _assign_enclaves(adj, x, labels, p, enclaves)))
    pmax = max(p for p, _ in built)

    best, best_w = None, np.inf
    for p, labels in built:
        if p != pmax:
            continue
        search = _SwapSearch(graph, x, labels, rng, attr=attr_list, threshold=threshold)
        if local_search:
            search.run(max_passes)
        if search.objective < best_w:
            best, best_w = search.labels, search.objective
    return Partition.from_labels(best)


def kmeans_baseline(features, k, seed=0, iterations=100):
    """Unconstrained K-Means (Lloyd iterations, k-means++ seeding).

    Regions are not required to be contiguous.  Clusters that end up
    empty are dropped, so the result can have fewer than ``k`` regions.
    """
    x = as_features(features)
    n = len(x)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if k == n:
        return Partition(np.arange(n), n)
    if k == 1:
        return Partition(np.zeros(n, dtype=np.int64), 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, labels = kmeans2(x, k, iter=iterations, minit="++", seed=np.random.default_rng(seed), missing="warn")
    return Partition.from_labels(labels)
