"""Procedural base meshes for the benchmark specimens.

Boundary edges are tagged ``bottom``, ``top``, ``left`` and ``right``;
slit faces are tagged ``notch_lower``/``notch_upper`` and the hole boundary
``hole``.
"""

from __future__ import annotations

import numpy as np

from .mesh import HierMesh


def _grid_elements(nx, ny, node_id):
    elems = []
    for j in range(ny):
        for i in range(nx):
            elems.append([node_id(i, j), node_id(i + 1, j), node_id(i + 1, j + 1), node_id(i, j + 1)])
    return elems


def _boundary_tags(nx, ny, node_id):
    return {
        "bottom": [(node_id(i, 0), node_id(i + 1, 0)) for i in range(nx)],
        "top": [(node_id(i, ny), node_id(i + 1, ny)) for i in range(nx)],
        "left": [(node_id(0, j), node_id(0, j + 1)) for j in range(ny)],
        "right": [(node_id(nx, j), node_id(nx, j + 1)) for j in range(ny)],
    }


def rectangle(nx, ny, x0=0.0, x1=1.0, y0=0.0, y1=1.0, max_depth=4) -> HierMesh:
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def node_id(i, j):
        return j * (nx + 1) + i

    return HierMesh.from_arrays(
        nodes, _grid_elements(nx, ny, node_id), _boundary_tags(nx, ny, node_id), max_depth
    )


def notched_square(n=32, notch_length=0.5, size=1.0, max_depth=4) -> HierMesh:
    """Square ``[0, size]^2`` with a horizontal slit from the left edge at mid-height.

    Nodes on the slit (tip excluded) are duplicated; elements above the slit
    use the copies, so the two faces are disconnected.
    """
    if n % 2:
        raise ValueError("notched_square needs an even number of divisions")
    xs = np.linspace(0.0, size, n + 1)
    X, Y = np.meshgrid(xs, xs)
    nodes = [tuple(p) for p in np.column_stack([X.ravel(), Y.ravel()])]
    jm = n // 2
    n_slit = int(round(notch_length / size * n))
    upper = {}
    for i in range(n_slit):
        upper[i] = len(nodes)
        nodes.append((xs[i], xs[jm]))

    def base_id(i, j):
        return j * (n + 1) + i

    elems = []
    for j in range(n):
        for i in range(n):
            c = [base_id(i, j), base_id(i + 1, j), base_id(i + 1, j + 1), base_id(i, j + 1)]
            if j == jm:
                if i in upper:
                    c[0] = upper[i]
                if i + 1 in upper:
                    c[1] = upper[i + 1]
            elems.append(c)

    tags = _boundary_tags(n, n, base_id)
    tags["left"] = [e for e in tags["left"] if e != (base_id(0, jm), base_id(0, jm + 1))]
    if 0 in upper:
        tags["left"].append((upper[0], base_id(0, jm + 1)))

    def up(i):
        return upper.get(i, base_id(i, jm))

    tags["notch_lower"] = [(base_id(i, jm), base_id(i + 1, jm)) for i in range(n_slit)]
    tags["notch_upper"] = [(up(i), up(i + 1)) for i in range(n_slit)]
    return HierMesh.from_arrays(np.array(nodes), elems, tags, max_depth)


def tapered_bar(nx=40, ny=8, length=5.0, w_fixed=0.75, w_loaded=2.0, max_depth=4) -> HierMesh:
    """Trapezoidal bar, clamped end at ``x = 0`` and loaded end at ``x = length``."""
    xs = np.linspace(0.0, length, nx + 1)
    nodes = []
    for j in range(ny + 1):
        for x in xs:
            half = 0.5 * (w_fixed + (w_loaded - w_fixed) * x / length)
            nodes.append((x, -half + 2.0 * half * j / ny))

    def node_id(i, j):
        return j * (nx + 1) + i

    return HierMesh.from_arrays(
        np.array(nodes), _grid_elements(nx, ny, node_id), _boundary_tags(nx, ny, node_id), max_depth
    )


def plate_with_hole(
    n_around=8, n_radial=8, center=(0.6, 0.0), radius=0.2, box=(0.0, 1.0, -0.5, 0.5), max_depth=4
) -> HierMesh:
    """Rectangle with a circular hole, meshed as four blocks of an O-grid.

    Each block spans the sector between two rays from the hole centre to
    adjacent box corners; ``n_around`` elements along the arc, ``n_radial``
    from the circle to the box edge.  The hole boundary is polygonal; nodes
    created on it by refinement are projected onto the circle.
    """
    cx, cy = center
    x0, x1, y0, y1 = box
    corners = [(x1, y1), (x0, y1), (x0, y0), (x1, y0)]
    side_tag = ["top", "left", "bottom", "right"]
    angles = [np.arctan2(y - cy, x - cx) for x, y in corners]
    angles = np.unwrap(angles)

    nodes: list[tuple[float, float]] = []
    index: dict[tuple[int, int], int] = {}
    n_ring = 4 * n_around

    def node(t, r):
        key = (t % n_ring, r)
        if key not in index:
            b, k = divmod(t % n_ring, n_around)
            s = k / n_around
            theta = angles[b] + s * ((angles[(b + 1) % 4] + (2 * np.pi if b == 3 else 0)) - angles[b])
            inner = np.array((cx + radius * np.cos(theta), cy + radius * np.sin(theta)))
            ca, cb = np.array(corners[b]), np.array(corners[(b + 1) % 4])
            outer = ca + s * (cb - ca)
            p = inner + (r / n_radial) * (outer - inner)
            index[key] = len(nodes)
            nodes.append(tuple(p))
        return index[key]

    elems = []
    tags: dict[str, list] = {t: [] for t in side_tag + ["hole"]}
    for t in range(n_ring):
        for r in range(n_radial):
            # counter-clockwise: outward then along increasing angle
            elems.append([node(t + 1, r), node(t, r), node(t, r + 1), node(t + 1, r + 1)])
        tags[side_tag[t // n_around]].append((node(t, n_radial), node(t + 1, n_radial)))
        tags["hole"].append((node(t, 0), node(t + 1, 0)))
    mesh = HierMesh.from_arrays(np.array(nodes), elems, tags, max_depth, circles={"hole": (cx, cy, radius)})
    return mesh
