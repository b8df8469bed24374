"""Planar geometry behind the geographic compactness metrics.

Polygons are passed around as ``(v, 2)`` float arrays holding an *open*
ring (the closing vertex is not repeated).  Boolean operations on
arbitrary shapes (dissolve, alpha-shape union, pairwise intersection)
are delegated to shapely; everything else is plain numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy.spatial import Delaunay, cKDTree

__all__ = [
    "RegionShape",
    "signed_area",
    "polygon_area",
    "polygon_perimeter",
    "polygon_centroid",
    "convex_hull",
    "concave_hull",
    "default_alpha",
    "dissolve",
    "polsby_popper",
    "convex_hull_ratio",
    "intersection_area",
    "pairwise_overlap",
    "percent_overlap",
    "shape_to_geojson",
]


def _ring(points):
    ring = np.asarray(points, dtype=float)
    if ring.ndim != 2 or ring.shape[1] != 2:
        raise ValueError(f"expected an (v, 2) vertex array, got shape {ring.shape}")
    if len(ring) > 1 and np.array_equal(ring[0], ring[-1]):
        ring = ring[:-1]
    return ring


def signed_area(ring):
    """Shoelace area, positive for counter-clockwise rings."""
    ring = _ring(ring)
    if len(ring) < 3:
        return 0.0
    x, y = ring[:, 0], ring[:, 1]
    # shift to the first vertex to limit cancellation on large coordinates
    x = x - x[0]
    y = y - y[0]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_area(ring):
    return abs(signed_area(ring))


def polygon_perimeter(ring):
    ring = _ring(ring)
    if len(ring) < 2:
        return 0.0
    return float(np.hypot(*(np.roll(ring, -1, axis=0) - ring).T).sum())


def polygon_centroid(ring):
    """Area centroid of a simple polygon."""
    ring = _ring(ring)
    origin = ring[0]
    x, y = (ring - origin).T
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = cross.sum() / 2.0
    if a == 0.0:
        raise ValueError("centroid of a zero-area polygon is undefined")
    cx = ((x + xn) * cross).sum() / (6.0 * a)
    cy = ((y + yn) * cross).sum() / (6.0 * a)
    return float(cx + origin[0]), float(cy + origin[1])


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points):
    """Convex hull by Andrew's monotone chain.

    Parameters
    ----------
    points : array_like, shape (n, 2)
        At least three points, not all collinear.

    Returns
    -------
    numpy.ndarray
        Hull vertices in counter-clockwise order, open ring, starting at
        the lexicographically smallest point.  Points lying on hull edges
        are dropped.
    """
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) < 3:
        raise ValueError("convex hull needs at least 3 distinct points")
    pts = [tuple(p) for p in pts]
    lower = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        raise ValueError("degenerate hull: input points are collinear")
    extent = np.ptp(hull, axis=0).max()
    if polygon_area(hull) <= 1e-12 * extent * extent:
        raise ValueError("degenerate hull: input points are collinear")
    return hull


def _circumradii(points, simplices):
    a = points[simplices[:, 0]]
    b = points[simplices[:, 1]]
    c = points[simplices[:, 2]]
    la = np.hypot(*(b - c).T)
    lb = np.hypot(*(c - a).T)
    lc = np.hypot(*(a - b).T)
    area2 = np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = la * lb * lc / (2.0 * area2)
    r[area2 == 0] = np.inf
    return r


def _alpha_geometry(points, alpha):
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) < 3:
        raise ValueError("alpha shape needs at least 3 distinct points")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    convex_hull(pts)  # raises on collinear input
    tri = Delaunay(pts)
    keep = tri.simplices[_circumradii(pts, tri.simplices) <= 1.0 / alpha]
    if len(keep) == 0:
        raise ValueError(
            f"alpha={alpha:g} removes every triangle; use a smaller alpha "
            f"(below {1.0 / _circumradii(pts, tri.simplices).min():g})"
        )
    triangles = shapely.polygons(pts[keep])
    geom = shapely.union_all(triangles)
    # outer rings only
    parts = shapely.get_parts(geom)
    return shapely.union_all([shapely.Polygon(shapely.get_exterior_ring(p)) for p in parts])


def concave_hull(points, alpha):
    """Alpha shape of a point set.

    The shape is the union of the Delaunay triangles whose circumradius
    does not exceed ``1 / alpha``.  Holes are discarded; each connected
    piece contributes its outer ring.

    Returns
    -------
    list of numpy.ndarray
        Counter-clockwise outer rings.
    """
    geom = _alpha_geometry(points, alpha)
    return [_exterior(p) for p in shapely.get_parts(geom)]


def _exterior(polygon):
    ring = np.asarray(polygon.exterior.coords)[:-1]
    if signed_area(ring) < 0:
        ring = ring[::-1]
    return ring


def default_alpha(points):
    """``1 / (2 * median nearest-neighbour spacing)`` of the points."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        raise ValueError("need at least 2 points to estimate spacing")
    dist, _ = cKDTree(pts).query(pts, k=2)
    spacing = float(np.median(dist[:, 1]))
    if spacing <= 0:
        raise ValueError("duplicate points: spacing is zero")
    return 1.0 / (2.0 * spacing)


@dataclass(frozen=True)
class RegionShape:
    """Outline of a region.

    ``rings`` are the exterior rings (one per disjoint piece); ``holes``
    are kept only because they contribute to the perimeter.
    """

    rings: list
    area: float
    perimeter: float
    holes: list = field(default_factory=list)

    @property
    def vertices(self):
        return np.concatenate(self.rings) if self.rings else np.empty((0, 2))

    def to_shapely(self):
        polys = [shapely.Polygon(r) for r in self.rings]
        return polys[0] if len(polys) == 1 else shapely.MultiPolygon(polys)

    @classmethod
    def from_ring(cls, ring):
        ring = _ring(ring)
        if signed_area(ring) < 0:
            ring = ring[::-1]
        return cls([ring], polygon_area(ring), polygon_perimeter(ring))


def dissolve(polygons, tolerance=None):
    """Union of the polygons of one region.

    The area is the sum of member areas (members tile the plane without
    overlap); the perimeter is the boundary length of the union, i.e.
    shared internal edges cancel out.  Vertices are snapped to a grid of
    ``tolerance`` (default: the power of ten just below 1e-9 of the
    bounding-box diagonal) so that float noise on shared vertices does
    not leave slivers.
    """
    rings = [_ring(p) for p in polygons]
    if not rings:
        raise ValueError("cannot dissolve an empty region")
    area = float(sum(polygon_area(r) for r in rings))
    if len(rings) == 1:
        shape = RegionShape.from_ring(rings[0])
        return RegionShape(shape.rings, area, shape.perimeter)
    allpts = np.concatenate(rings)
    if tolerance is None:
        diag = float(np.hypot(*np.ptp(allpts, axis=0)))
        # a power of ten keeps round coordinates exact after snapping
        tolerance = 10.0 ** math.floor(math.log10(1e-9 * diag))
    geom = shapely.union_all([shapely.Polygon(r) for r in rings], grid_size=tolerance)
    outer, holes = [], []
    for part in shapely.get_parts(geom):
        if part.geom_type != "Polygon" or part.area == 0:
            continue
        outer.append(_exterior(part))
        holes.extend(np.asarray(h.coords)[:-1] for h in part.interiors)
    perimeter = float(sum(polygon_perimeter(r) for r in outer) + sum(polygon_perimeter(h) for h in holes))
    return RegionShape(outer, area, perimeter, holes)


def polsby_popper(shape):
    """Isoperimetric quotient ``4 pi A / P**2``; 1 for a disk."""
    if shape.perimeter <= 0:
        raise ValueError("Polsby-Popper is undefined for zero perimeter")
    if shape.area <= 0:
        raise ValueError("Polsby-Popper is undefined for zero area")
    return 4.0 * math.pi * shape.area / shape.perimeter**2


def convex_hull_ratio(shape):
    """Region area over the area of its convex hull."""
    if shape.area <= 0:
        raise ValueError("convex hull ratio is undefined for zero area")
    return shape.area / polygon_area(convex_hull(shape.vertices))


def _as_geometry(shape):
    if isinstance(shape, RegionShape):
        return shape.to_shapely()
    if isinstance(shape, shapely.Geometry):
        return shape
    rings = [shape] if np.asarray(shape[0]).ndim == 1 else shape
    polys = [shapely.Polygon(r) for r in rings]
    return polys[0] if len(polys) == 1 else shapely.MultiPolygon(polys)


def intersection_area(a, b):
    """Area of the intersection of two shapes (exact polygon clipping)."""
    ga, gb = _as_geometry(a), _as_geometry(b)
    if not ga.intersects(gb):
        return 0.0
    return float(ga.intersection(gb).area)


def pairwise_overlap(shapes):
    """Mean over ordered pairs ``i != j`` of ``area(s_i & s_j) / area(s_i)``."""
    geoms = [_as_geometry(s) for s in shapes]
    k = len(geoms)
    if k < 2:
        raise ValueError("overlap needs at least two regions")
    areas = np.array([g.area for g in geoms])
    if np.any(areas <= 0):
        raise ValueError(f"region {int(np.argmin(areas))} has a zero-area outline")
    shapely.prepare(geoms)
    total = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            inter = intersection_area(geoms[i], geoms[j])
            total += inter / areas[i] + inter / areas[j]
    return total / (k * k - k)


def percent_overlap(partition, units, alpha=None):
    """Average pairwise overlap of the regions' alpha-shape outlines.

    Each region's outline is the alpha shape of its member centroids.
    ``alpha`` defaults to :func:`default_alpha` of all centroids.
    """
    centroids = np.array([u.centroid for u in units], dtype=float)
    if alpha is None:
        alpha = default_alpha(centroids)
    geoms = []
    for r, members in enumerate(partition.regions()):
        try:
            geoms.append(_alpha_geometry(centroids[members], alpha))
        except ValueError as exc:
            raise ValueError(f"region {r}: {exc}") from None
    return pairwise_overlap(geoms)


def shape_to_geojson(shape):
    """GeoJSON geometry dict (Polygon or MultiPolygon) for a shape."""
    def closed(r):
        r = np.asarray(r)
        return np.vstack([r, r[:1]]).tolist()

    rings = shape.rings if isinstance(shape, RegionShape) else shape
    if len(rings) == 1:
        return {"type": "Polygon", "coordinates": [closed(rings[0])]}
    return {"type": "MultiPolygon", "coordinates": [[closed(r)] for r in rings]}
