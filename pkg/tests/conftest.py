import math

import numpy as np
import pytest

from regionkit.spatial import ContiguityGraph, SpatialUnit


def square_units(rows, cols, features=None, size=1.0):
    units = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            ring = [(c * size, r * size), ((c + 1) * size, r * size), ((c + 1) * size, (r + 1) * size),
                    (c * size, (r + 1) * size)]
            f = [0.0] if features is None else features[i]
            units.append(SpatialUnit.from_polygon(i, ring, f))
    return units


def hexagon(cx, cy, side=1.0):
    return [(cx + side * math.cos(math.pi / 6 + k * math.pi / 3), cy + side * math.sin(math.pi / 6 + k * math.pi / 3))
            for k in range(6)]


def hex_patch(radius, side=1.0, skip=()):
    """Pointy-top hexes within axial distance ``radius`` of the origin."""
    out = []
    for q in range(-radius, radius + 1):
        for r in range(-radius, radius + 1):
            if abs(q) + abs(r) + abs(q + r) > 2 * radius or (q, r) in skip:
                continue
            cx = side * math.sqrt(3) * (q + r / 2)
            cy = side * 1.5 * r
            out.append(SpatialUnit.from_polygon(len(out), hexagon(cx, cy, side), [0.0]))
    return out


def grid_graph(rows, cols):
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
    return ContiguityGraph.from_edges(rows * cols, edges)


def random_connected_graph(rng, n, extra=0.3):
    """Random spanning tree plus a fraction of extra edges."""
    edges = set()
    order = rng.permutation(n)
    for t in range(1, n):
        u, v = int(order[t]), int(order[rng.integers(t)])
        edges.add((min(u, v), max(u, v)))
    for _ in range(int(extra * n)):
        u, v = (int(a) for a in rng.choice(n, 2, replace=False))
        edges.add((min(u, v), max(u, v)))
    return ContiguityGraph.from_edges(n, sorted(edges))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def level0():
    """Synthetic level 0 (about 8000 units): units, graph and scaled features."""
    from regionkit.datagen import LevelSpec, generate_level
    from regionkit.harness import contiguity_graph
    from regionkit.objective import minmax_normalize

    units = generate_level(LevelSpec(level=0, seed=0))
    graph = contiguity_graph(units)
    x = minmax_normalize(np.array([u.features for u in units]))
    return units, graph, x


# one line per acceptance criterion, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
