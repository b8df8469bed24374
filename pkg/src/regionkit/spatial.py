"""Spatial units, contiguity graphs and partitions.

A :class:`ContiguityGraph` is stored in compressed sparse row form
(``indptr``/``indices``) so that the per-unit neighbour lists are sorted
numpy views; algorithms that walk the graph in Python use the cached
:meth:`ContiguityGraph.adjacency_lists` instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import shapely
from scipy import sparse
from scipy.sparse.csgraph import connected_components as _cc
from scipy.spatial import Delaunay, cKDTree

from .geometry import polygon_area, polygon_centroid

__all__ = [
    "SpatialUnit",
    "ContiguityGraph",
    "Partition",
    "DegenerateInputError",
    "validate_units",
    "unit_arrays",
    "build_queen_contiguity",
    "build_rook_contiguity",
    "bridge_gaps",
    "build_graph",
    "is_region_connected",
    "connected_components",
    "load_geojson",
    "read_units",
    "write_units",
]


class DegenerateInputError(ValueError):
    """Input geometry cannot support the requested construction."""


@dataclass(frozen=True, eq=False)
class SpatialUnit:
    """One tessellation cell.

    Attributes
    ----------
    id : int
        Dense identifier, equal to the unit's position in its dataset.
    centroid : tuple of float
        Planar area centroid.
    polygon : numpy.ndarray
        Open exterior ring, shape ``(v, 2)``.
    features : numpy.ndarray
        Feature vector of length ``m``.
    """

    id: int
    centroid: tuple
    polygon: np.ndarray
    features: np.ndarray

    @classmethod
    def from_polygon(cls, id, polygon, features):
        ring = np.asarray(polygon, dtype=float)
        if len(ring) > 1 and np.array_equal(ring[0], ring[-1]):
            ring = ring[:-1]
        _check_ring(id, ring)
        return cls(int(id), polygon_centroid(ring), ring, np.asarray(features, dtype=float))


def _check_ring(uid, ring):
    if ring.ndim != 2 or ring.shape[1] != 2 or len(np.unique(ring, axis=0)) < 3:
        raise DegenerateInputError(f"unit {uid}: polygon needs at least 3 distinct vertices")
    if not np.all(np.isfinite(ring)):
        raise DegenerateInputError(f"unit {uid}: non-finite coordinates")
    extent = float(np.ptp(ring, axis=0).max())
    if polygon_area(ring) <= 1e-12 * extent * extent:
        raise DegenerateInputError(f"unit {uid}: polygon has zero area")


def validate_units(units):
    """Check ids are dense from 0, polygons non-degenerate, features aligned."""
    units = list(units)
    m = None
    for i, u in enumerate(units):
        if u.id != i:
            raise ValueError(f"unit ids must be dense and ordered from 0; position {i} holds id {u.id}")
        _check_ring(u.id, np.asarray(u.polygon, dtype=float))
        f = np.asarray(u.features)
        if m is None:
            m = f.shape
        elif f.shape != m:
            raise ValueError(f"unit {u.id}: feature length {f.shape} differs from {m}")
    return units


def unit_arrays(units):
    """Centroids ``(n, 2)`` and features ``(n, m)`` as arrays."""
    centroids = np.array([u.centroid for u in units], dtype=float).reshape(-1, 2)
    features = np.array([u.features for u in units], dtype=float)
    if features.ndim == 1:
        features = features.reshape(len(units), -1)
    return centroids, features


class ContiguityGraph:
    """Undirected, loop-free adjacency over unit ids ``0 .. n-1``."""

    __slots__ = ("n", "indptr", "indices", "_lists")

    def __init__(self, n, indptr, indices):
        self.n = int(n)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)
        self._lists = None

    @classmethod
    def from_edges(cls, n, edges):
        """Build from an iterable of ``(i, j)`` pairs; duplicates and loops dropped."""
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(e) and (e.min() < 0 or e.max() >= n):
            raise ValueError("edge endpoint out of range")
        e = e[e[:, 0] != e[:, 1]]
        both = np.concatenate([e, e[:, ::-1]])
        both = np.unique(both, axis=0) if len(both) else both
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, both[:, 0] + 1, 1)
        return cls(n, np.cumsum(indptr), both[:, 1].copy())

    @classmethod
    def from_adjacency(cls, adjacency):
        edges = [(i, j) for i, nbrs in enumerate(adjacency) for j in nbrs]
        return cls.from_edges(len(adjacency), edges)

    def neighbors(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    @property
    def adjacency(self):
        return self.adjacency_lists()

    def adjacency_lists(self):
        """Neighbour lists as plain Python lists (cached)."""
        if self._lists is None:
            idx = self.indices.tolist()
            ptr = self.indptr.tolist()
            self._lists = [idx[ptr[i]:ptr[i + 1]] for i in range(self.n)]
        return self._lists

    def degree(self):
        return np.diff(self.indptr)

    @property
    def n_edges(self):
        return len(self.indices) // 2

    def edges(self):
        """``(E, 2)`` array of edges with ``i < j``, sorted lexicographically."""
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        mask = rows < self.indices
        return np.column_stack([rows[mask], self.indices[mask]])

    def to_sparse(self):
        data = np.ones(len(self.indices), dtype=np.int8)
        return sparse.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def is_connected(self):
        return self.n <= 1 or _cc(self.to_sparse(), directed=False)[0] == 1

    def union(self, other):
        if other.n != self.n:
            raise ValueError("graphs cover different unit counts")
        return ContiguityGraph.from_edges(self.n, np.concatenate([self.edges(), other.edges()]))

    def check(self):
        """Full scan of the structural invariants; raises AssertionError."""
        for i in range(self.n):
            nb = self.neighbors(i)
            assert np.all(np.diff(nb) > 0), f"neighbours of {i} not sorted/unique"
            assert i not in nb, f"self loop at {i}"
            for j in nb:
                assert i in self.neighbors(j), f"asymmetric edge {i}-{j}"

    def write_edgelist(self, path):
        with open(path, "w") as fh:
            fh.write(f"# n={self.n}\n")
            for i, j in self.edges():
                fh.write(f"{i} {j}\n")

    @classmethod
    def read_edgelist(cls, path, n=None):
        edges = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line.startswith("# n="):
                    n = int(line[4:]) if n is None else n
                elif line and not line.startswith("#"):
                    i, j = line.split()
                    edges.append((int(i), int(j)))
        if n is None:
            n = 1 + max((max(e) for e in edges), default=-1)
        return cls.from_edges(n, edges)

    def __eq__(self, other):
        return (
            isinstance(other, ContiguityGraph)
            and self.n == other.n
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )

    def __repr__(self):
        return f"ContiguityGraph(n={self.n}, edges={self.n_edges})"


@dataclass(frozen=True, eq=False)
class Partition:
    """Assignment of every unit to one of ``k`` nonempty regions."""

    labels: np.ndarray
    k: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        labels.setflags(write=False)
        if labels.ndim != 1:
            raise ValueError("labels must be one-dimensional")
        if self.k < 1 and len(labels):
            raise ValueError("k must be positive")
        if len(labels) and (labels.min() < 0 or labels.max() >= self.k):
            raise ValueError(f"labels must lie in 0..{self.k - 1}")
        counts = np.bincount(labels, minlength=self.k)
        if np.any(counts == 0):
            raise ValueError(f"region {int(np.argmin(counts))} is empty")

    @classmethod
    def from_labels(cls, labels):
        """Relabel by order of first appearance so unit 0 is in region 0."""
        labels = np.asarray(labels)
        _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
        rank = np.empty(len(first), dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(len(first))
        return cls(rank[inverse.ravel()], len(first))

    @property
    def n(self):
        return len(self.labels)

    def sizes(self):
        return np.bincount(self.labels, minlength=self.k)

    def regions(self):
        """Member id arrays, one per region, each sorted ascending."""
        order = np.argsort(self.labels, kind="stable")
        return np.split(order, np.cumsum(self.sizes())[:-1])

    def members(self, r):
        return np.flatnonzero(self.labels == r)

    def __eq__(self, other):
        return isinstance(other, Partition) and self.k == other.k and np.array_equal(self.labels, other.labels)

    def same_regions(self, other):
        """True when both partitions group the units identically."""
        return Partition.from_labels(self.labels) == Partition.from_labels(other.labels)

    def __repr__(self):
        return f"Partition(n={self.n}, k={self.k})"


def _snap_tolerance(units):
    allpts = np.concatenate([np.asarray(u.polygon, dtype=float) for u in units])
    diag = float(np.hypot(*np.ptp(allpts, axis=0)))
    return 1e-9 * diag if diag > 0 else 1e-12


def _shapely_polygons(units):
    rings = [np.asarray(u.polygon, dtype=float) for u in units]
    closed = [np.vstack([r, r[:1]]) for r in rings]
    coords = np.concatenate(closed)
    ring_offsets = np.concatenate([[0], np.cumsum([len(c) for c in closed])])
    poly_offsets = np.arange(len(closed) + 1)
    return shapely.from_ragged_array(shapely.GeometryType.POLYGON, coords, (ring_offsets, poly_offsets))


def _touching_pairs(units, eps):
    polys = _shapely_polygons(units)
    tree = shapely.STRtree(polys)
    a, b = tree.query(polys, predicate="dwithin", distance=eps)
    keep = a < b
    return np.column_stack([a[keep], b[keep]])


def build_queen_contiguity(units, eps=None):
    """Edge iff two polygons share at least one boundary point (within ``eps``).

    ``eps`` defaults to 1e-9 of the bounding-box diagonal of all vertices.
    """
    units = validate_units(units)
    n = len(units)
    if n < 2:
        return ContiguityGraph.from_edges(n, [])
    eps = _snap_tolerance(units) if eps is None else eps
    return ContiguityGraph.from_edges(n, _touching_pairs(units, eps))


def _padded_edges(units):
    rings = [np.asarray(u.polygon, dtype=float) for u in units]
    vmax = max(len(r) for r in rings)
    start = np.zeros((len(rings), vmax, 2))
    end = np.zeros((len(rings), vmax, 2))
    valid = np.zeros((len(rings), vmax), dtype=bool)
    for i, r in enumerate(rings):
        v = len(r)
        start[i, :v] = r
        end[i, :v] = np.roll(r, -1, axis=0)
        valid[i, :v] = True
    return start, end, valid


def _shared_length(start, end, valid, pairs, eps, chunk=20000):
    """Total collinear overlap between the boundaries of each polygon pair."""
    out = np.zeros(len(pairs))
    for lo in range(0, len(pairs), chunk):
        p = pairs[lo:lo + chunk]
        a0, a1, va = start[p[:, 0]][:, :, None], end[p[:, 0]][:, :, None], valid[p[:, 0]][:, :, None]
        b0, b1, vb = start[p[:, 1]][:, None], end[p[:, 1]][:, None], valid[p[:, 1]][:, None]
        d = a1 - a0
        length = np.hypot(d[..., 0], d[..., 1])
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            u = d / length[..., None]
        rel0, rel1 = b0 - a0, b1 - a0
        # perpendicular offsets of b's endpoints from a's supporting line
        off0 = np.abs(u[..., 0] * rel0[..., 1] - u[..., 1] * rel0[..., 0])
        off1 = np.abs(u[..., 0] * rel1[..., 1] - u[..., 1] * rel1[..., 0])
        t0 = u[..., 0] * rel0[..., 0] + u[..., 1] * rel0[..., 1]
        t1 = u[..., 0] * rel1[..., 0] + u[..., 1] * rel1[..., 1]
        overlap = np.minimum(length, np.maximum(t0, t1)) - np.maximum(0.0, np.minimum(t0, t1))
        ok = (off0 <= eps) & (off1 <= eps) & va & vb & (length > 0)
        out[lo:lo + chunk] = np.where(ok, np.maximum(overlap, 0.0), 0.0).sum(axis=(1, 2))
    return out


def build_rook_contiguity(units, eps=None):
    """Edge iff two polygons share a boundary segment of positive length.

    Corner-only contact does not count.  Shared length is measured as the
    collinear overlap of boundary edges and must exceed ``1000 * eps``.
    """
    units = validate_units(units)
    n = len(units)
    if n < 2:
        return ContiguityGraph.from_edges(n, [])
    eps = _snap_tolerance(units) if eps is None else eps
    pairs = _touching_pairs(units, eps)
    if len(pairs) == 0:
        return ContiguityGraph.from_edges(n, pairs)
    start, end, valid = _padded_edges(units)
    shared = _shared_length(start, end, valid, pairs, eps)
    return ContiguityGraph.from_edges(n, pairs[shared > 1000 * eps])


def _circumcenters(pts, simplices):
    a, b, c = pts[simplices[:, 0]], pts[simplices[:, 1]], pts[simplices[:, 2]]
    b = b - a
    c = c - a
    d = 2.0 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    bb = (b**2).sum(axis=1)
    cc = (c**2).sum(axis=1)
    # zero-area triangles (collinear hull points) have no finite circumcentre
    flat = np.abs(d) <= 1e-12 * np.maximum(bb, cc)
    d = np.where(flat, 1.0, d)
    ux = (c[:, 1] * bb - b[:, 1] * cc) / d
    uy = (b[:, 0] * cc - c[:, 0] * bb) / d
    return a + np.column_stack([ux, uy]), flat


def _long_edges(pts, simplices):
    """Pairs spanning the middle point of a flat triangle; never Voronoi neighbours."""
    out = set()
    for tri in simplices.tolist():
        p = pts[tri]
        axis = int(np.argmax(p.max(axis=0) - p.min(axis=0)))
        mid = int(np.argsort(p[:, axis])[1])
        a, b = (tri[i] for i in range(3) if i != mid)
        out.add((min(a, b), max(a, b)))
    return out


def _hits_box(p, d, tmax, lo, hi):
    """Vectorised Liang-Barsky test of ``p + t d, 0 <= t <= tmax`` against a box."""
    tmin = np.zeros(len(p))
    tmax = tmax.astype(float).copy()
    inside = np.ones(len(p), dtype=bool)
    for ax in range(2):
        pa, da = p[:, ax], d[:, ax]
        flat = da == 0
        inside &= ~flat | ((pa >= lo[ax]) & (pa <= hi[ax]))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            t1 = (lo[ax] - pa) / da
            t2 = (hi[ax] - pa) / da
        tmin = np.where(flat, tmin, np.maximum(tmin, np.minimum(t1, t2)))
        tmax = np.where(flat, tmax, np.minimum(tmax, np.maximum(t1, t2)))
    return inside & (tmin <= tmax)


def bridge_gaps(units, max_distance=None):
    """Voronoi-cell adjacency of the unit centroids.

    Two units are linked when their Voronoi cells share an edge inside the
    centroid bounding box grown by one nominal cell diameter (the median
    nearest-neighbour spacing).  Adjacency is read off the Delaunay
    triangulation; cocircular ties are resolved by Qhull's deterministic
    triangulation, so e.g. the four corners of a square give 5 edges.

    Parameters
    ----------
    units : sequence of SpatialUnit or array_like, shape (n, 2)
        Units, or their centroids directly.
    max_distance : float, optional
        Drop links whose centroids are farther apart than this.

    Raises
    ------
    DegenerateInputError
        Fewer than 3 centroids, duplicate (or numerically coincident)
        centroids, or all collinear.
    """
    if isinstance(units, np.ndarray):
        pts = np.asarray(units, dtype=float)
    else:
        pts = np.array([u.centroid for u in units], dtype=float).reshape(-1, 2)
    n = len(pts)
    if n < 3:
        raise DegenerateInputError("gap bridging needs at least 3 centroids")
    if len(np.unique(pts, axis=0)) < n:
        raise DegenerateInputError("centroids must be distinct")
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[1] <= 1e-12 * sv[0]:
        raise DegenerateInputError("centroids are collinear")

    tri = Delaunay(pts)
    if len(tri.coplanar):
        raise DegenerateInputError(f"centroid of unit {int(tri.coplanar[0, 0])} is numerically coincident with another")
    simp, nbr = tri.simplices, tri.neighbors
    cc, flat = _circumcenters(pts, simp)
    spacing = float(np.median(cKDTree(pts).query(pts, k=2)[0][:, 1]))
    lo = pts.min(axis=0) - spacing
    hi = pts.max(axis=0) + spacing

    t_idx = np.repeat(np.arange(len(simp)), 3)
    opp = np.tile(np.arange(3), len(simp))
    other = nbr.ravel()
    keep = (other == -1) | (t_idx < other)
    t_idx, opp, other = t_idx[keep], opp[keep], other[keep]
    u = simp[t_idx, (opp + 1) % 3]
    v = simp[t_idx, (opp + 2) % 3]
    # look at every edge from a non-flat side when one exists; a flat side acts like the hull
    swap = flat[t_idx] & (other >= 0)
    swap[swap] = ~flat[other[swap]]
    t_idx, other = np.where(swap, other, t_idx), np.where(swap, t_idx, other)
    other = np.where((other >= 0) & flat[np.maximum(other, 0)], -1, other)
    w = simp[t_idx].sum(axis=1) - u - v

    start = cc[t_idx]
    interior = other >= 0
    direction = np.empty_like(start)
    direction[interior] = cc[other[interior]] - start[interior]
    # hull edges: the Voronoi edge is a ray along the outward edge normal
    hull = ~interior
    ev = pts[v[hull]] - pts[u[hull]]
    normal = np.column_stack([ev[:, 1], -ev[:, 0]])
    to_opp = pts[w[hull]] - pts[u[hull]]
    flip = (normal * to_opp).sum(axis=1) > 0
    normal[flip] *= -1
    direction[hull] = normal
    tmax = np.where(interior, 1.0, np.inf)
    ok = _hits_box(start, direction, tmax, lo, hi)
    # both sides flat: consecutive collinear hull points, whose cells share an outward ray
    ok |= flat[t_idx]
    if flat.any():
        long = _long_edges(pts, simp[flat])
        lo_uv, hi_uv = np.minimum(u, v), np.maximum(u, v)
        ok &= ~np.array([(a, b) in long for a, b in zip(lo_uv.tolist(), hi_uv.tolist())], dtype=bool)

    if max_distance is not None:
        ok &= np.hypot(*(pts[u] - pts[v]).T) <= max_distance
    edges = np.sort(np.column_stack([u[ok], v[ok]]), axis=1)
    return ContiguityGraph.from_edges(n, edges)


def build_graph(units, method="voronoi", **kwargs):
    """Dispatch to ``queen``, ``rook`` or ``voronoi`` (gap-bridging) contiguity."""
    builders = {
        "queen": build_queen_contiguity,
        "rook": build_rook_contiguity,
        "voronoi": bridge_gaps,
    }
    try:
        builder = builders[method]
    except KeyError:
        raise ValueError(f"unknown contiguity method {method!r}; choose from {sorted(builders)}") from None
    return builder(units, **kwargs)


def is_region_connected(graph, members):
    """True iff ``members`` induce a connected subgraph of ``graph``."""
    idx = np.unique(np.fromiter(members, dtype=np.int64) if not isinstance(members, np.ndarray) else members)
    if len(idx) == 0:
        raise ValueError("empty regions are not allowed")
    if idx[0] < 0 or idx[-1] >= graph.n:
        raise ValueError("member id out of range")
    if len(idx) == 1:
        return True
    sub = graph.to_sparse()[idx][:, idx]
    return _cc(sub, directed=False)[0] == 1


def connected_components(graph):
    """Partition of the units into maximal connected subgraphs."""
    if graph.n == 0:
        return Partition(np.empty(0, dtype=np.int64), 0)
    _, labels = _cc(graph.to_sparse(), directed=False)
    return Partition.from_labels(labels)


def load_geojson(path):
    """Read a FeatureCollection of Polygon features.

    Each feature carries properties ``id`` (int) and ``f0 .. f{m-1}``.
    Returns the units sorted by id and the raw property dicts in the
    same order.
    """
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("type") != "FeatureCollection":
        raise ValueError(f"{path}: not a GeoJSON FeatureCollection")
    rows = []
    for feat in doc["features"]:
        geom = feat["geometry"]
        if geom["type"] != "Polygon":
            raise ValueError(f"{path}: only Polygon geometries are supported, got {geom['type']}")
        props = feat.get("properties") or {}
        fkeys = sorted((k for k in props if k[:1] == "f" and k[1:].isdigit()), key=lambda k: int(k[1:]))
        rows.append((int(props["id"]), geom["coordinates"][0], [float(props[k]) for k in fkeys], props))
    rows.sort(key=lambda r: r[0])
    units = [SpatialUnit.from_polygon(uid, ring, feats) for uid, ring, feats, _ in rows]
    return validate_units(units), [r[3] for r in rows]


def read_units(path):
    return load_geojson(path)[0]


def write_units(units, path, properties=None):
    """Write units as a FeatureCollection; ``properties`` adds per-unit keys."""
    feats = []
    for i, u in enumerate(units):
        ring = np.asarray(u.polygon, dtype=float)
        props = {"id": int(u.id)}
        props.update({f"f{j}": float(v) for j, v in enumerate(np.asarray(u.features).ravel())})
        if properties is not None:
            props.update(properties[i])
        feats.append({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [np.vstack([ring, ring[:1]]).tolist()]},
            "properties": props,
        })
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump({"type": "FeatureCollection", "features": feats}, fh)
