"""Hierarchical quadrilateral meshes with hanging-node constraints.

Elements are 4-node bilinear quads with counter-clockwise corners.  A
refined element keeps its id, becomes inactive and owns four children::

    c3 --- m23 --- c2
    | ch3  |  ch2  |
    m30 -- cc --- m12
    | ch0  |  ch1  |
    c0 --- m01 --- c1

Refinement only ever appends nodes and elements, so ids of an older
generation remain valid in every finer one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError
from .state import SimState

# Corner positions of each child in the parent reference square.
CHILD_REF_CORNERS = np.array(
    [
        [(-1, -1), (0, -1), (0, 0), (-1, 0)],
        [(0, -1), (1, -1), (1, 0), (0, 0)],
        [(0, 0), (1, 0), (1, 1), (0, 1)],
        [(-1, 0), (0, 0), (0, 1), (-1, 1)],
    ],
    dtype=float,
)
# Which parent edge (if any) contains side i of child k.
CHILD_SIDE_PARENT_EDGE = [
    [0, None, None, 3],
    [0, 1, None, None],
    [None, 1, 2, None],
    [None, None, 2, 3],
]

COMPONENTS = {"x": 0, "y": 1, "phi": 2}


def edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def shape_functions(xi, eta):
    """Bilinear shape functions on the reference square."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return 0.25 * np.stack(
        [(1 - xi) * (1 - eta), (1 + xi) * (1 - eta), (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)],
        axis=-1,
    )


@dataclass
class HierMesh:
    nodes: np.ndarray
    elements: np.ndarray
    level: np.ndarray
    parent: np.ndarray
    children: np.ndarray
    active: np.ndarray
    max_depth: int = 4
    edge_tags: dict[str, set[tuple[int, int]]] = field(default_factory=dict)
    # tag -> (cx, cy, r): new nodes on these boundary edges are projected onto the circle
    circles: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    midpoints: dict[tuple[int, int], int] = field(default_factory=dict)

    @classmethod
    def from_arrays(cls, nodes, elements, edge_tags=None, max_depth=4, circles=None) -> "HierMesh":
        nodes = np.asarray(nodes, dtype=float)
        elements = np.asarray(elements, dtype=np.int64)
        m = len(elements)
        mesh = cls(
            nodes=nodes,
            elements=elements,
            level=np.zeros(m, dtype=np.int64),
            parent=np.full(m, -1, dtype=np.int64),
            children=np.full((m, 4), -1, dtype=np.int64),
            active=np.ones(m, dtype=bool),
            max_depth=max_depth,
            edge_tags={k: {edge_key(*e) for e in v} for k, v in (edge_tags or {}).items()},
            circles=dict(circles or {}),
        )
        area = mesh.signed_areas()
        if np.any(area <= 0):
            bad = np.flatnonzero(area <= 0)[:5]
            raise ConfigurationError(f"elements {bad.tolist()} are not counter-clockwise")
        return mesh

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def active_ids(self) -> np.ndarray:
        return np.flatnonzero(self.active)

    @property
    def n_dofs(self) -> int:
        return 3 * self.n_nodes

    def copy(self) -> "HierMesh":
        return HierMesh(
            nodes=self.nodes.copy(),
            elements=self.elements.copy(),
            level=self.level.copy(),
            parent=self.parent.copy(),
            children=self.children.copy(),
            active=self.active.copy(),
            max_depth=self.max_depth,
            edge_tags={k: set(v) for k, v in self.edge_tags.items()},
            circles=dict(self.circles),
            midpoints=dict(self.midpoints),
        )

    def signed_areas(self, ids=None) -> np.ndarray:
        ids = np.arange(self.n_elements) if ids is None else np.asarray(ids)
        xy = self.nodes[self.elements[ids]]
        x, y = xy[..., 0], xy[..., 1]
        return 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)

    def area(self) -> float:
        return float(self.signed_areas(self.active_ids).sum())

    def tag_nodes(self, tag: str) -> np.ndarray:
        if tag not in self.edge_tags:
            raise ConfigurationError(f"unknown boundary tag {tag!r}")
        nodes = {n for e in self.edge_tags[tag] for n in e}
        return np.array(sorted(nodes), dtype=np.int64)

    def active_edges(self) -> dict[tuple[int, int], list[int]]:
        out: dict[tuple[int, int], list[int]] = {}
        for e in self.active_ids:
            c = self.elements[e]
            for i in range(4):
                out.setdefault(edge_key(c[i], c[(i + 1) % 4]), []).append(int(e))
        return out

    def hanging_nodes(self) -> dict[int, tuple[int, int]]:
        """Map hanging node -> endpoints of the coarse edge it sits on."""
        edges = self.active_edges()
        return {m: key for key, m in self.midpoints.items() if key in edges}

    def is_balanced(self) -> bool:
        """True when edge-adjacent active elements differ by at most one level."""
        edges = self.active_edges()
        for key, m in self.midpoints.items():
            if key not in edges:
                continue
            for half in (edge_key(key[0], m), edge_key(m, key[1])):
                if half not in edges:
                    return False
        return True


def refine_elements(mesh: HierMesh, marked: Iterable[int]) -> HierMesh:
    """Split marked active elements into four, keeping 2:1 edge balance.

    Coarser neighbours are refined first when needed.  Elements already at
    ``max_depth`` are skipped.
    """
    marked = sorted({int(e) for e in marked})
    for e in marked:
        if e < 0 or e >= mesh.n_elements:
            raise ValueError(f"unknown element id {e}")
        if not mesh.active[e]:
            raise ValueError(f"element {e} is not active")
    if not marked:
        return mesh.copy()

    new = mesh.copy()
    nodes = [tuple(p) for p in new.nodes]
    elements = [list(c) for c in new.elements]
    level = list(new.level)
    parent = list(new.parent)
    children = [list(c) for c in new.children]
    active = list(new.active)

    edge_owners: dict[tuple[int, int], list[int]] = {}
    for e, c in enumerate(elements):
        for i in range(4):
            edge_owners.setdefault(edge_key(c[i], c[(i + 1) % 4]), []).append(e)

    tag_lookup: dict[tuple[int, int], list[str]] = {}
    for tag, edges in new.edge_tags.items():
        for k in edges:
            tag_lookup.setdefault(k, []).append(tag)

    def midpoint(a: int, b: int) -> int:
        key = edge_key(a, b)
        m = new.midpoints.get(key)
        if m is not None:
            return m
        p = 0.5 * (np.array(nodes[a]) + np.array(nodes[b]))
        tags = tag_lookup.pop(key, [])
        for tag in tags:
            circle = new.circles.get(tag)
            if circle is not None:
                cx, cy, r = circle
                d = p - (cx, cy)
                p = np.array((cx, cy)) + r * d / np.linalg.norm(d)
        m = len(nodes)
        nodes.append(tuple(p))
        new.midpoints[key] = m
        for tag in tags:
            s = new.edge_tags[tag]
            s.discard(key)
            for half in (edge_key(a, m), edge_key(m, b)):
                s.add(half)
                tag_lookup.setdefault(half, []).append(tag)
        return m

    def split(e: int) -> None:
        c0, c1, c2, c3 = elements[e]
        m01, m12, m23, m30 = midpoint(c0, c1), midpoint(c1, c2), midpoint(c2, c3), midpoint(c3, c0)
        cc = len(nodes)
        nodes.append(tuple(np.mean([nodes[c] for c in (c0, c1, c2, c3)], axis=0)))
        quads = [(c0, m01, cc, m30), (m01, c1, m12, cc), (cc, m12, c2, m23), (m30, cc, m23, c3)]
        ids = []
        for q in quads:
            k = len(elements)
            elements.append(list(q))
            level.append(level[e] + 1)
            parent.append(e)
            children.append([-1] * 4)
            active.append(True)
            for i in range(4):
                edge_owners.setdefault(edge_key(q[i], q[(i + 1) % 4]), []).append(k)
            ids.append(k)
        children[e] = ids
        active[e] = False

    def refine(e: int) -> None:
        if not active[e] or level[e] >= new.max_depth:
            return
        p = parent[e]
        if p >= 0:
            k = children[p].index(e)
            c = elements[e]
            for side in range(4):
                key = edge_key(c[side], c[(side + 1) % 4])
                if len(edge_owners[key]) > 1:
                    continue
                pe = CHILD_SIDE_PARENT_EDGE[k][side]
                if pe is None:
                    continue
                pc = elements[p]
                pkey = edge_key(pc[pe], pc[(pe + 1) % 4])
                for nb in list(edge_owners.get(pkey, ())):
                    if nb != p and active[nb]:
                        refine(nb)
        if active[e]:
            split(e)

    for e in marked:
        refine(e)

    new.nodes = np.array(nodes, dtype=float)
    new.elements = np.array(elements, dtype=np.int64)
    new.level = np.array(level, dtype=np.int64)
    new.parent = np.array(parent, dtype=np.int64)
    new.children = np.array(children, dtype=np.int64)
    new.active = np.array(active, dtype=bool)
    return new


@dataclass(frozen=True)
class DirichletBC:
    """Prescribe ``component`` on every node of boundary ``tag``.

    ``kind`` is ``"fixed"`` (value held constant) or ``"driven"`` (value is
    the unit pattern scaled by the load factor).
    """

    tag: str
    component: str
    kind: str = "fixed"
    value: float | None = None

    def __post_init__(self):
        if self.component not in COMPONENTS:
            raise ConfigurationError(f"unknown component {self.component!r}")
        if self.kind not in ("fixed", "driven"):
            raise ConfigurationError(f"unknown condition kind {self.kind!r}")

    @property
    def prescribed(self) -> float:
        if self.value is not None:
            return float(self.value)
        return 1.0 if self.kind == "driven" else 0.0


FREE, CONSTRAINED, FIXED, DRIVEN = 0, 1, 2, 3


def dof_index(n_nodes: int, node, component: int):
    node = np.asarray(node)
    if component == 2:
        return 2 * n_nodes + node
    return 2 * node + component


@dataclass
class ConstraintMap:
    """Decomposition ``x = T x_f + x_fixed + lam * x_unit`` of the full dof vector."""

    kind: np.ndarray
    free: np.ndarray
    T: sp.csr_matrix
    x_fixed: np.ndarray
    x_unit: np.ndarray
    masters: dict[int, list[tuple[int, float]]]

    @property
    def n_dofs(self) -> int:
        return len(self.kind)

    @property
    def n_free(self) -> int:
        return len(self.free)

    @property
    def driven(self) -> np.ndarray:
        return np.flatnonzero(self.kind == DRIVEN)

    def expand(self, x_free: np.ndarray, lam: float) -> np.ndarray:
        return self.T @ x_free + self.x_fixed + lam * self.x_unit


def build_constraints(mesh: HierMesh, bcs: Sequence[DirichletBC]) -> ConstraintMap:
    n = mesh.n_nodes
    ndof = 3 * n
    kind = np.full(ndof, FREE, dtype=np.int8)
    value = np.zeros(ndof)

    for bc in bcs:
        code = FIXED if bc.kind == "fixed" else DRIVEN
        dofs = dof_index(n, mesh.tag_nodes(bc.tag), COMPONENTS[bc.component])
        for d in dofs:
            if kind[d] == FREE:
                kind[d] = code
                value[d] = bc.prescribed
            elif kind[d] != code or value[d] != bc.prescribed:
                raise ConfigurationError(
                    f"conflicting conditions on dof {d} (boundary {bc.tag!r}, component {bc.component})"
                )

    direct: dict[int, list[tuple[int, float]]] = {}
    for m, (a, b) in mesh.hanging_nodes().items():
        for comp in range(3):
            d = int(dof_index(n, m, comp))
            if kind[d] != FREE:
                raise ConfigurationError(f"hanging dof {d} is also prescribed")
            kind[d] = CONSTRAINED
            direct[d] = [(int(dof_index(n, a, comp)), 0.5), (int(dof_index(n, b, comp)), 0.5)]

    resolved: dict[int, list[tuple[int, float]]] = {}

    def resolve(d: int) -> list[tuple[int, float]]:
        if d in resolved:
            return resolved[d]
        acc: dict[int, float] = {}
        for master, w in direct[d]:
            terms = resolve(master) if kind[master] == CONSTRAINED else [(master, 1.0)]
            for t, wt in terms:
                acc[t] = acc.get(t, 0.0) + w * wt
        resolved[d] = sorted(acc.items())
        return resolved[d]

    for d in direct:
        resolve(d)

    free = np.flatnonzero(kind == FREE)
    col = np.full(ndof, -1, dtype=np.int64)
    col[free] = np.arange(len(free))
    rows, cols, vals = list(free), list(col[free]), [1.0] * len(free)
    x_fixed = np.where(kind == FIXED, value, 0.0)
    x_unit = np.where(kind == DRIVEN, value, 0.0)
    for d, terms in resolved.items():
        for master, w in terms:
            if kind[master] == FREE:
                rows.append(d)
                cols.append(col[master])
                vals.append(w)
            elif kind[master] == FIXED:
                x_fixed[d] += w * value[master]
            else:
                x_unit[d] += w * value[master]
    T = sp.csr_matrix((vals, (rows, cols)), shape=(ndof, len(free)))
    return ConstraintMap(kind, free, T, x_fixed, x_unit, resolved)


def _check_refinement(old: HierMesh, new: HierMesh) -> None:
    ok = (
        new.n_nodes >= old.n_nodes
        and new.n_elements >= old.n_elements
        and np.array_equal(new.nodes[: old.n_nodes], old.nodes)
        and np.array_equal(new.elements[: old.n_elements], old.elements)
    )
    if ok:
        gone = old.active & ~new.active[: old.n_elements]
        ok = bool(np.all(new.children[: old.n_elements][gone] >= 0))
        # every element created since must descend from an old active element
        born = np.arange(old.n_elements, new.n_elements)
        ok = ok and bool(np.all(new.parent[born] < old.n_elements)) and bool(
            np.all(old.active[new.parent[born]])
        )
    if not ok:
        raise ValueError("meshes are not related by a single refinement pass")


def transfer_fields(old: HierMesh, new: HierMesh, x: np.ndarray, H: np.ndarray):
    """Carry a full dof vector and Gauss-point history onto a refined mesh."""
    _check_refinement(old, new)
    n_old, n_new = old.n_nodes, new.n_nodes
    u = x[: 2 * n_old].reshape(-1, 2)
    phi = x[2 * n_old :]
    u_new = np.zeros((n_new, 2))
    phi_new = np.zeros(n_new)
    u_new[:n_old] = u
    phi_new[:n_old] = phi
    H_new = np.zeros((new.n_elements, 4))
    H_new[: old.n_elements] = H

    refined = np.flatnonzero(old.active & ~new.active[: old.n_elements])
    for p in refined:
        corners = old.elements[p]
        for k, child in enumerate(new.children[p]):
            H_new[child, :] = H[p, k]
            for ref, node in zip(CHILD_REF_CORNERS[k], new.elements[child]):
                if node >= n_old:
                    N = shape_functions(*ref)
                    u_new[node] = N @ u[corners]
                    phi_new[node] = N @ phi[corners]
    phi_new[n_old:] = np.clip(phi_new[n_old:], 0.0, 1.0)
    return np.concatenate([u_new.ravel(), phi_new]), H_new


def transfer_state(old: HierMesh, new: HierMesh, state: SimState) -> SimState:
    """Interpolate nodal fields and inject history onto the refined mesh."""
    x, H = transfer_fields(old, new, state.x, state.H)
    x_n, H_n = transfer_fields(old, new, state.x_n, state.H_n)
    return SimState(x=x, lam=state.lam, H=H, x_n=x_n, lam_n=state.lam_n, H_n=H_n)
