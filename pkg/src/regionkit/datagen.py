"""Synthetic hexagon tessellations with spatially autocorrelated features.

Levels double in size: level ``L`` targets ``8000 * 2**L`` cells.  Cells
form a roughly circular blob of pointy-top hexagons, a fraction of which
is carved out in contiguous patches to mimic non-residential land.  Each
feature channel is white noise smoothed by a Gaussian kernel, sampled at
the cell centres and standardised, so nearby cells are correlated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .spatial import ContiguityGraph, SpatialUnit, bridge_gaps, connected_components, write_units

__all__ = [
    "LevelSpec",
    "hex_grid",
    "generate_level",
    "generate_planted",
    "hex_adjacency",
    "feature_field_moran",
    "level_filename",
    "write_level",
]

BASE_UNITS = 8000
# corner offsets of a pointy-top hexagon in half-width / quarter-height units, counter-clockwise
_CORNERS = np.array([(1, 1), (0, 2), (-1, 1), (-1, -1), (0, -2), (1, -1)])
_AXIAL_NEIGHBOURS = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))


@dataclass(frozen=True)
class LevelSpec:
    """Parameters of one synthetic level.

    ``smoothing`` is the Gaussian kernel standard deviation in cell
    spacings; the kernel is truncated at twice that radius.
    """

    level: int = 0
    seed: int = 0
    target_n: int | None = None
    hex_diameter: float = 200.0
    hole_fraction: float = 0.1
    n_features: int = 5
    smoothing: float = 4.0

    def __post_init__(self):
        if not 0 <= self.level <= 10:
            raise ValueError("level must lie in 0..10")
        if not 0 <= self.hole_fraction < 1:
            raise ValueError("hole_fraction must lie in [0, 1)")
        if self.hex_diameter <= 0:
            raise ValueError("hex_diameter must be positive")
        if self.target_n is None:
            object.__setattr__(self, "target_n", BASE_UNITS * 2**self.level)
        if self.target_n < 1:
            raise ValueError("target_n must be positive")


def _hex_geometry(qr, diameter):
    s = diameter / 2.0
    hx = s * math.sqrt(3.0) / 2.0
    hy = s / 2.0
    q, r = qr[:, 0], qr[:, 1]
    # integer multiples of hx / hy: shared corners come out bit-identical
    cx_units = 2 * q + r
    cy_units = 3 * r
    centers = np.column_stack([hx * cx_units, hy * cy_units])
    rings = np.stack(
        [hx * (cx_units[:, None] + _CORNERS[None, :, 0]), hy * (cy_units[:, None] + _CORNERS[None, :, 1])], axis=2
    )
    return centers, rings


def _hex_distance(a, b):
    dq = a[..., 0] - b[..., 0]
    dr = a[..., 1] - b[..., 1]
    return (np.abs(dq) + np.abs(dr) + np.abs(dq + dr)) // 2


def hex_grid(n_cells, diameter=1.0):
    """Axial coordinates of the ``n_cells`` hexes closest to the origin."""
    radius = int(math.ceil(math.sqrt(n_cells / 3.0))) + 2
    q, r = np.meshgrid(np.arange(-radius, radius + 1), np.arange(-radius, radius + 1), indexing="ij")
    qr = np.column_stack([q.ravel(), r.ravel()])
    qr = qr[_hex_distance(qr, np.zeros(2, dtype=int)) <= radius]
    centers, _ = _hex_geometry(qr, diameter)
    d2 = (centers**2).sum(axis=1)
    order = np.lexsort((qr[:, 1], qr[:, 0], np.round(d2 / diameter**2, 9)))
    return qr[order[:n_cells]]


def _carve_holes(qr, n_remove, rng):
    keep = np.ones(len(qr), dtype=bool)
    removed = 0
    while removed < n_remove:
        alive = np.flatnonzero(keep)
        center = qr[alive[rng.integers(len(alive))]]
        radius = int(rng.integers(1, 4))
        hit = alive[_hex_distance(qr[alive], center) <= radius]
        hit = hit[: n_remove - removed]
        keep[hit] = False
        removed += len(hit)
    return qr[keep]


def hex_adjacency(qr):
    """Shared-edge adjacency of hexes given by axial coordinates."""
    index = {(int(a), int(b)): i for i, (a, b) in enumerate(qr.tolist())}
    edges = []
    for i, (a, b) in enumerate(qr.tolist()):
        for da, db in _AXIAL_NEIGHBOURS:
            j = index.get((a + da, b + db))
            if j is not None and i < j:
                edges.append((i, j))
    return ContiguityGraph.from_edges(len(qr), edges)


def _smooth_field(centers, spacing, n_channels, sigma_cells, rng):
    px = spacing / 2.0
    pad = 3 * sigma_cells * spacing
    lo = centers.min(axis=0) - pad
    shape = tuple(np.ceil((centers.max(axis=0) + pad - lo) / px).astype(int) + 1)
    coords = ((centers - lo) / px).T
    out = np.empty((len(centers), n_channels))
    for c in range(n_channels):
        noise = rng.standard_normal(shape)
        field = ndimage.gaussian_filter(noise, sigma=sigma_cells * spacing / px, truncate=2.0, mode="wrap")
        vals = ndimage.map_coordinates(field, coords, order=1)
        out[:, c] = (vals - vals.mean()) / vals.std()
    return out


def feature_field_moran(units, graph):
    """Moran's I of every feature channel under binary contiguity weights.

    Returns an array with one value per channel; a constant channel makes
    the statistic undefined and raises ``ValueError``.
    """
    x = np.array([u.features for u in units], dtype=float) if not isinstance(units, np.ndarray) else units
    x = x.reshape(len(x), -1)
    n = len(x)
    if n < 2:
        raise ValueError("Moran's I needs at least 2 units")
    z = x - x.mean(axis=0)
    denom = (z**2).sum(axis=0)
    if np.any(denom == 0):
        raise ValueError("Moran's I is undefined for a constant field")
    e = graph.edges()
    s0 = 2.0 * len(e)
    if s0 == 0:
        raise ValueError("Moran's I needs at least one neighbour pair")
    num = 2.0 * (z[e[:, 0]] * z[e[:, 1]]).sum(axis=0)
    return n / s0 * num / denom


def _build(spec, attempt):
    rng = np.random.default_rng([spec.seed, spec.level, attempt])
    n_full = int(round(spec.target_n / (1.0 - spec.hole_fraction)))
    qr = hex_grid(n_full, spec.hex_diameter)
    qr = _carve_holes(qr, n_full - spec.target_n, rng)
    centers, rings = _hex_geometry(qr, spec.hex_diameter)
    spacing = spec.hex_diameter * math.sqrt(3.0) / 2.0
    return rng, qr, centers, rings, spacing


def _units(centers, rings, features):
    return [
        SpatialUnit(i, (float(c[0]), float(c[1])), rings[i], features[i])
        for i, c in enumerate(centers)
    ]


def generate_level(spec, min_moran=0.5, attempts=10):
    """Generate the units of one level.

    The layout and fields are a pure function of ``spec``.  A draw is
    rejected (and redrawn from a new sub-seed) when its centroids do not
    form one component under gap bridging or when any channel's Moran's I
    over hex adjacency is at most ``min_moran``.
    """
    for attempt in range(attempts):
        rng, qr, centers, rings, spacing = _build(spec, attempt)
        if len(centers) >= 3 and connected_components(bridge_gaps(centers)).k != 1:
            continue
        feats = _smooth_field(centers, spacing, spec.n_features, spec.smoothing, rng)
        if len(centers) > 1 and np.min(feature_field_moran(feats, hex_adjacency(qr))) <= min_moran:
            continue
        return _units(centers, rings, feats)
    raise RuntimeError(f"could not generate a valid level from {spec} in {attempts} attempts")


def _farthest_points(points, k, rng):
    chosen = [int(rng.integers(len(points)))]
    d = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(k - 1):
        nxt = int(np.argmax(d))
        chosen.append(nxt)
        d = np.minimum(d, ((points - points[nxt]) ** 2).sum(axis=1))
    return chosen


def generate_planted(spec, k=5, separation=3.0, noise=0.5):
    """Level with ``k`` planted, feature-distinct contiguous blobs.

    Blobs grow breadth-first over gap-bridged contiguity from ``k``
    spread-out seed cells.  Blob ``r`` gets mean ``separation * e_r`` (or
    a random direction when ``k`` exceeds the feature count) plus
    ``noise`` times a smooth field.

    Returns
    -------
    units : list of SpatialUnit
    labels : numpy.ndarray
        Planted blob of every unit.
    """
    rng, qr, centers, rings, spacing = _build(spec, 0)
    graph = bridge_gaps(centers)
    adj = graph.adjacency_lists()
    labels = np.full(len(centers), -1, dtype=np.int64)
    frontier = []
    for r, s in enumerate(_farthest_points(centers, k, rng)):
        labels[s] = r
        frontier.append(s)
    head = 0
    while head < len(frontier):
        u = frontier[head]
        head += 1
        for v in adj[u]:
            if labels[v] < 0:
                labels[v] = labels[u]
                frontier.append(v)
    m = spec.n_features
    if k <= m:
        means = separation * np.eye(m)[:k]
    else:
        means = separation * rng.standard_normal((k, m))
    feats = means[labels] + noise * _smooth_field(centers, spacing, m, spec.smoothing, rng)
    return _units(centers, rings, feats), labels


def level_filename(level, seed):
    return f"level_{level}_seed_{seed}.geojson"


def write_level(spec, directory="."):
    """Generate a level and write it as GeoJSON; returns the path."""
    path = Path(directory) / level_filename(spec.level, spec.seed)
    write_units(generate_level(spec), path)
    return path


def spec_for(level, seed=0, **kwargs):
    return replace(LevelSpec(level=level, seed=seed), **kwargs)
