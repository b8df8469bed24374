"""Compiled inner loops.

Kept free of Python objects so numba can compile them in nopython mode;
results are cached on disk next to the module.
"""

import numpy as np
from numba import njit

SINGLE, COMPLETE, AVERAGE = 0, 1, 2


@njit(cache=True)
def cross_linkage(x, ia, ib, kind):
    """Min, max or mean pairwise distance between two member sets."""
    m = x.shape[1]
    best = np.inf if kind == SINGLE else 0.0
    total = 0.0
    for p in range(ia.shape[0]):
        a = ia[p]
        for q in range(ib.shape[0]):
            b = ib[q]
            acc = 0.0
            for j in range(m):
                t = x[a, j] - x[b, j]
                acc += t * t
            d = np.sqrt(acc)
            if kind == SINGLE:
                if d < best:
                    best = d
            elif kind == COMPLETE:
                if d > best:
                    best = d
            else:
                total += d
    if kind == AVERAGE:
        return total / (ia.shape[0] * ib.shape[0])
    return best


@njit(cache=True)
def _dev_sum(xt, lo, hi, mu):
    m = xt.shape[0]
    total = 0.0
    for i in range(lo, hi):
        acc = 0.0
        for j in range(m):
            t = xt[j, i] - mu[j]
            acc += t * t
        total += np.sqrt(acc)
    return total


@njit(cache=True)
def split_costs(xt, starts, stops):
    """Within variability after splitting a preorder block in two.

    ``xt`` is ``(m, s)``: the features of one tree component laid out in
    DFS preorder, so every subtree is a contiguous column range.  For each
    candidate ``[starts[e], stops[e])`` return the cost of that subtree
    plus the cost of the remaining columns, each measured against its own
    mean.
    """
    m, s = xt.shape
    total = np.zeros(m)
    for j in range(m):
        for i in range(s):
            total[j] += xt[j, i]
    prefix = np.zeros((m, s + 1))
    for j in range(m):
        acc = 0.0
        for i in range(s):
            acc += xt[j, i]
            prefix[j, i + 1] = acc
    out = np.empty(starts.shape[0])
    mu_in = np.empty(m)
    mu_out = np.empty(m)
    for e in range(starts.shape[0]):
        a = starts[e]
        b = stops[e]
        n_in = b - a
        n_out = s - n_in
        for j in range(m):
            sub = prefix[j, b] - prefix[j, a]
            mu_in[j] = sub / n_in
            mu_out[j] = (total[j] - sub) / n_out
        out[e] = _dev_sum(xt, a, b, mu_in) + _dev_sum(xt, 0, a, mu_out) + _dev_sum(xt, b, s, mu_out)
    return out


@njit(cache=True)
def members_cost(x, idx, skip, extra, mu):
    """Sum of distances to ``mu`` over ``idx`` minus ``skip`` plus ``extra``.

    Pass ``-1`` for ``skip``/``extra`` to disable them.
    """
    m = x.shape[1]
    total = 0.0
    for p in range(idx.shape[0]):
        i = idx[p]
        if i == skip:
            continue
        acc = 0.0
        for j in range(m):
            t = x[i, j] - mu[j]
            acc += t * t
        total += np.sqrt(acc)
    if extra >= 0:
        acc = 0.0
        for j in range(m):
            t = x[extra, j] - mu[j]
            acc += t * t
        total += np.sqrt(acc)
    return total


@njit(cache=True)
def stays_connected(indptr, indices, lab, u, donor, targets, stamp_of, owner, link, stamp):
    """Whether the donor-labelled neighbours ``targets`` of ``u`` remain
    mutually reachable inside the donor region once ``u`` leaves it.

    One breadth-first search grows from each target in lock step; searches
    that touch are merged.  The answer is known once a single search is
    left (connected) or any search runs dry (disconnected), so the work is
    bounded by the smaller side of a would-be split.

    ``stamp_of``, ``owner`` and ``link`` are scratch arrays of length
    ``n``; entries are valid only where ``stamp_of == stamp``, so they
    never need clearing.
    """
    g = targets.shape[0]
    parent = np.arange(g)
    head = np.empty(g, dtype=np.int64)
    tail = np.empty(g, dtype=np.int64)
    stamp_of[u] = stamp
    owner[u] = -1
    for t in range(g):
        v = targets[t]
        stamp_of[v] = stamp
        owner[v] = t
        link[v] = -1
        head[t] = v
        tail[t] = v
    groups = g
    while True:
        for t in range(g):
            if parent[t] != t:
                continue
            a = head[t]
            if a < 0:
                return False
            head[t] = link[a]
            if head[t] < 0:
                tail[t] = -1
            for p in range(indptr[a], indptr[a + 1]):
                b = indices[p]
                if lab[b] != donor:
                    continue
                if stamp_of[b] != stamp:
                    stamp_of[b] = stamp
                    owner[b] = t
                    link[b] = -1
                    if tail[t] < 0:
                        head[t] = b
                    else:
                        link[tail[t]] = b
                    tail[t] = b
                    continue
                o = owner[b]
                if o < 0:
                    continue
                while parent[o] != o:
                    parent[o] = parent[parent[o]]
                    o = parent[o]
                if o == t:
                    continue
                parent[o] = t
                if head[o] >= 0:
                    if tail[t] < 0:
                        head[t] = head[o]
                    else:
                        link[tail[t]] = head[o]
                    tail[t] = tail[o]
                groups -= 1
                if groups == 1:
                    return True
        # owners of nodes claimed by merged searches resolve through ``parent``


@njit(cache=True)
def _dev_pair(xt, lo, hi, mu_a, mu_b, out):
    """Add to ``out`` the distance sums of columns ``lo:hi`` to two centres."""
    m = xt.shape[0]
    for i in range(lo, hi):
        aa = 0.0
        bb = 0.0
        for j in range(m):
            t = xt[j, i] - mu_a[j]
            aa += t * t
            t = xt[j, i] - mu_b[j]
            bb += t * t
        out[0] += np.sqrt(aa)
        out[1] += np.sqrt(bb)


@njit(cache=True)
def best_split(xt, starts, stops, lo, hi):
    """Best single cut of a preorder block, same answer as scanning
    :func:`split_costs` for the minimum (ties: smallest ``(lo, hi)``).

    Every candidate first gets a lower bound that only touches its
    smaller side.  With ``F(c) = sum_i |x_i - c|`` over the whole block,
    convexity gives ``F(c) >= F(mu) + g . (c - mu)`` for the block mean
    ``mu`` and a subgradient ``g``, and the larger side's cost is
    ``F(c_big)`` minus the smaller side's distances to ``c_big``.
    Candidates are then evaluated exactly in bound order until the bound
    exceeds the best exact cost found.

    Returns ``(index, cost, exact evaluations)``; index is -1 when there
    are no candidates.
    """
    m, s = xt.shape
    n_e = starts.shape[0]
    prefix = np.zeros((m, s + 1))
    for j in range(m):
        acc = 0.0
        for i in range(s):
            acc += xt[j, i]
            prefix[j, i + 1] = acc
    total = np.empty(m)
    mu = np.empty(m)
    for j in range(m):
        total[j] = 0.0
        for i in range(s):
            total[j] += xt[j, i]
        mu[j] = prefix[j, s] / s
    f0 = 0.0
    g = np.zeros(m)
    for i in range(s):
        acc = 0.0
        for j in range(m):
            t = xt[j, i] - mu[j]
            acc += t * t
        d = np.sqrt(acc)
        f0 += d
        if d > 0.0:
            for j in range(m):
                g[j] += (mu[j] - xt[j, i]) / d

    lb = np.empty(n_e)
    mu_in = np.empty(m)
    mu_out = np.empty(m)
    acc2 = np.zeros(2)
    for e in range(n_e):
        a = starts[e]
        b = stops[e]
        n_in = b - a
        n_out = s - n_in
        for j in range(m):
            sub = prefix[j, b] - prefix[j, a]
            mu_in[j] = sub / n_in
            mu_out[j] = (total[j] - sub) / n_out
        acc2[0] = 0.0
        acc2[1] = 0.0
        lin = 0.0
        if n_in <= n_out:
            _dev_pair(xt, a, b, mu_in, mu_out, acc2)
            for j in range(m):
                lin += g[j] * (mu_out[j] - mu[j])
        else:
            _dev_pair(xt, 0, a, mu_out, mu_in, acc2)
            _dev_pair(xt, b, s, mu_out, mu_in, acc2)
            for j in range(m):
                lin += g[j] * (mu_in[j] - mu[j])
        lb[e] = acc2[0] + f0 + lin - acc2[1]

    order = np.argsort(lb)
    margin = 1e-9 * (f0 + 1.0)
    best = np.inf
    best_e = -1
    evaluated = 0
    for p in range(n_e):
        e = order[p]
        if lb[e] - margin > best:
            break
        a = starts[e]
        b = stops[e]
        n_in = b - a
        n_out = s - n_in
        for j in range(m):
            sub = prefix[j, b] - prefix[j, a]
            mu_in[j] = sub / n_in
            mu_out[j] = (total[j] - sub) / n_out
        cost = _dev_sum(xt, a, b, mu_in) + _dev_sum(xt, 0, a, mu_out) + _dev_sum(xt, b, s, mu_out)
        evaluated += 1
        if best_e < 0 or cost < best or (
            cost == best and (lo[e] < lo[best_e] or (lo[e] == lo[best_e] and hi[e] < hi[best_e]))
        ):
            best = cost
            best_e = e
    return best_e, best, evaluated


@njit(cache=True)
def members_cost_grad(x, idx, skip, extra, mu, grad):
    """:func:`members_cost` that also writes into ``grad`` the subgradient
    ``sum_i (mu - x_i) / |x_i - mu|`` of the cost at ``mu``."""
    m = x.shape[1]
    total = 0.0
    for j in range(m):
        grad[j] = 0.0
    n_idx = idx.shape[0]
    for p in range(n_idx + 1):
        if p < n_idx:
            i = idx[p]
            if i == skip:
                continue
        else:
            i = extra
            if i < 0:
                break
        acc = 0.0
        for j in range(m):
            t = x[i, j] - mu[j]
            acc += t * t
        d = np.sqrt(acc)
        total += d
        if d > 0.0:
            inv = 1.0 / d
            for j in range(m):
                grad[j] += (mu[j] - x[i, j]) * inv
    return total


@njit(cache=True)
def move_bound(x, u, sum_d, n_d, grad_d, sum_r, n_r, grad_r):
    """Lower bound on the change of within variability when ``u`` moves
    from donor to receiver.

    Each region's cost is convex in its centre, so at the new centre it
    is at least the current cost plus the subgradient step; the moved
    unit's own distance is then taken off the donor and added to the
    receiver exactly.
    """
    m = x.shape[1]
    lin = 0.0
    dd = 0.0
    dr = 0.0
    for j in range(m):
        mu_d = sum_d[j] / n_d
        mu_r = sum_r[j] / n_r
        new_d = (sum_d[j] - x[u, j]) / (n_d - 1)
        new_r = (sum_r[j] + x[u, j]) / (n_r + 1)
        lin += grad_d[j] * (new_d - mu_d) + grad_r[j] * (new_r - mu_r)
        t = x[u, j] - new_d
        dd += t * t
        t = x[u, j] - new_r
        dr += t * t
    return lin - np.sqrt(dd) + np.sqrt(dr)


@njit(cache=True)
def connected_without(indptr, indices, lab, region, size, u):
    """Plain full search: is ``region`` minus ``u`` (``size - 1`` units) connected?"""
    n = lab.shape[0]
    seen = np.zeros(n, dtype=np.bool_)
    stack = np.empty(size, dtype=np.int64)
    start = -1
    for p in range(indptr[u], indptr[u + 1]):
        if lab[indices[p]] == region:
            start = indices[p]
            break
    if start < 0:
        return size - 1 <= 0
    seen[u] = True
    seen[start] = True
    stack[0] = start
    top = 1
    reached = 1
    while top > 0:
        top -= 1
        a = stack[top]
        for p in range(indptr[a], indptr[a + 1]):
            b = indices[p]
            if lab[b] == region and not seen[b]:
                seen[b] = True
                stack[top] = b
                top += 1
                reached += 1
    return reached == size - 1
