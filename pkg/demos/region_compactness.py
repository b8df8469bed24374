"""
Shape of the regions
====================

Dissolve regions into polygons and compare how compact they are.
Polsby-Popper and the convex-hull ratio score each region on its own;
the alpha-shape overlap measures how much the regions' concave hulls
intrude on each other.
"""

import numpy as np

from regionkit import geometry
from regionkit.datagen import LevelSpec, generate_level
from regionkit.harness import contiguity_graph, geographic_report, run_algorithm
from regionkit.objective import minmax_normalize

# %%
# Reference shapes first: a square, a regular hexagon and a fine polygon
# approximating a disk.
square = geometry.dissolve([[(0, 0), (1, 0), (1, 1), (0, 1)]])
hexagon = geometry.dissolve([[(np.cos(k * np.pi / 3), np.sin(k * np.pi / 3)) for k in range(6)]])
t = np.linspace(0, 2 * np.pi, 512, endpoint=False)
disk = geometry.RegionShape.from_ring(np.column_stack([np.cos(t), np.sin(t)]))
for name, shape in [("square", square), ("hexagon", hexagon), ("512-gon", disk)]:
    print(f"{name:8s} PP={geometry.polsby_popper(shape):.4f} hull ratio={geometry.convex_hull_ratio(shape):.4f}")

# %%
# An L-tromino is not convex; its hull adds a triangle of area 1/2.
l_shape = geometry.dissolve([[(0, 0), (1, 0), (1, 1), (0, 1)], [(1, 0), (2, 0), (2, 1), (1, 1)],
                             [(0, 1), (1, 1), (1, 2), (0, 2)]])
print(f"L-tromino area={l_shape.area} perimeter={l_shape.perimeter} hull ratio={geometry.convex_hull_ratio(l_shape):.4f}")

# %%
# Now real partitions of a small synthetic tract.
units = generate_level(LevelSpec(level=0, seed=2, target_n=1200))
graph = contiguity_graph(units)
x = minmax_normalize(np.array([u.features for u in units]))
for name in ("agglomerative", "skater", "azp", "kmeans"):
    part = run_algorithm(name, graph, x, 5, seed=0)
    geo = geographic_report(part, units)
    print(f"{name:14s} PP={geo['polsby_popper']:.3f} hull ratio={geo['convex_hull_ratio']:.3f} "
          f"overlap={geo['percent_overlap']:.3f}")

# %%
# Each region can also be exported as GeoJSON geometry.
members = part.members(0)
print(geometry.shape_to_geojson(geometry.dissolve([units[i].polygon for i in members]))["type"])
