import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pff import geometry
from pff.errors import ConfigurationError
from pff.mesh import (
    CONSTRAINED,
    DRIVEN,
    FIXED,
    DirichletBC,
    HierMesh,
    build_constraints,
    refine_elements,
    shape_functions,
    transfer_fields,
)


def test_shape_functions_partition_of_unity():
    for xi, eta in [(-1, -1), (0.3, -0.7), (1, 1), (0, 0)]:
        N = shape_functions(xi, eta)
        assert N.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(shape_functions(-1, -1), [1, 0, 0, 0])
    np.testing.assert_allclose(shape_functions(1, 1), [0, 0, 1, 0])


def test_clockwise_element_rejected():
    nodes = [(0, 0), (1, 0), (1, 1), (0, 1)]
    with pytest.raises(ConfigurationError):
        HierMesh.from_arrays(nodes, [[0, 3, 2, 1]])


def test_rectangle_basics():
    m = geometry.rectangle(4, 3, 0.0, 2.0, 0.0, 1.5)
    assert m.n_nodes == 20 and m.n_elements == 12
    assert m.area() == pytest.approx(3.0)
    assert len(m.tag_nodes("left")) == 4
    assert m.hanging_nodes() == {}


def test_single_refinement_creates_two_hanging_nodes():
    m = geometry.rectangle(2, 2)
    r = refine_elements(m, [0])
    assert r.active.sum() == 7
    assert r.n_nodes == m.n_nodes + 5
    assert len(r.hanging_nodes()) == 2
    assert r.area() == pytest.approx(1.0)
    assert r.is_balanced()
    assert np.all(r.level[r.children[0]] == 1)
    assert not r.active[0]


def test_refinement_does_not_modify_input():
    m = geometry.rectangle(2, 2)
    before = m.copy()
    refine_elements(m, [0])
    assert np.array_equal(m.active, before.active) and m.n_nodes == before.n_nodes


def test_refinement_errors():
    m = geometry.rectangle(2, 2)
    with pytest.raises(ValueError):
        refine_elements(m, [99])
    r = refine_elements(m, [0])
    with pytest.raises(ValueError):
        refine_elements(r, [0])  # no longer active


def test_max_depth_is_respected():
    m = geometry.rectangle(1, 1, max_depth=1)
    r = refine_elements(m, [0])
    rr = refine_elements(r, r.active_ids)
    assert rr.n_elements == r.n_elements
    assert rr.level.max() == 1


def test_balance_is_enforced_recursively():
    m = geometry.rectangle(4, 4, max_depth=4)
    r = m
    for _ in range(3):
        # keep refining the element touching the origin
        ids = r.active_ids
        corner = ids[np.argmin(np.linalg.norm(r.nodes[r.elements[ids]].mean(axis=1), axis=1))]
        r = refine_elements(r, [corner])
        assert r.is_balanced()
    assert r.level.max() == 3
    assert r.area() == pytest.approx(1.0)


@given(st.lists(st.integers(0, 10_000), min_size=1, max_size=6))
@settings(max_examples=25, deadline=None)
def test_random_refinement_stays_balanced_and_conforming(picks):
    m = geometry.rectangle(3, 3, max_depth=3)
    for p in picks:
        ids = m.active_ids
        m = refine_elements(m, [ids[p % len(ids)]])
        assert m.is_balanced()
        assert m.area() == pytest.approx(1.0, rel=1e-12)
        assert np.all(m.signed_areas(m.active_ids) > 0)


def test_boundary_tags_follow_refinement():
    m = geometry.rectangle(2, 2)
    r = refine_elements(m, [0])
    left = r.tag_nodes("left")
    assert len(left) == 4  # three original plus one midpoint
    assert np.allclose(r.nodes[left, 0], 0.0)


def test_unknown_tag():
    with pytest.raises(ConfigurationError):
        geometry.rectangle(1, 1).tag_nodes("nowhere")


def test_notched_square_slit_is_open():
    m = geometry.notched_square(8, 0.5)
    lower, upper = m.tag_nodes("notch_lower"), m.tag_nodes("notch_upper")
    assert len(lower) == len(upper) == 5
    # tip shared, the rest duplicated at identical coordinates
    assert len(set(lower) & set(upper)) == 1
    assert np.allclose(np.sort(m.nodes[lower, 0]), np.sort(m.nodes[upper, 0]))
    assert np.allclose(m.nodes[upper, 1], 0.5)
    assert m.area() == pytest.approx(1.0)
    # elements above and below the slit share no node except at the tip
    below = set(m.elements[3 * 8 + 0])
    above = set(m.elements[4 * 8 + 0])
    assert not below & above


def test_notched_square_requires_even_division():
    with pytest.raises(ValueError):
        geometry.notched_square(7)


def test_tapered_bar_geometry():
    m = geometry.tapered_bar(10, 2)
    assert m.area() == pytest.approx(5.0 * (0.75 + 2.0) / 2)
    right = m.tag_nodes("right")
    assert np.ptp(m.nodes[right, 1]) == pytest.approx(2.0)
    assert np.ptp(m.nodes[m.tag_nodes("left"), 1]) == pytest.approx(0.75)


def test_plate_with_hole_refinement_snaps_to_circle():
    m = geometry.plate_with_hole(4, 2, max_depth=3)
    hole = m.tag_nodes("hole")
    centre = np.array([0.6, 0.0])
    assert np.allclose(np.linalg.norm(m.nodes[hole] - centre, axis=1), 0.2)
    ring = [e for e in m.active_ids if set(m.elements[e]) & set(hole)]
    r = refine_elements(m, ring)
    hole = r.tag_nodes("hole")
    assert len(hole) == 2 * len(m.tag_nodes("hole"))
    assert np.allclose(np.linalg.norm(r.nodes[hole] - centre, axis=1), 0.2)
    assert np.all(r.signed_areas(r.active_ids) > 0)
    # polygonal hole shrinks as vertices are added on the circle
    assert r.area() < m.area()
    assert r.area() > 1.0 - np.pi * 0.2**2


def test_constraints_classify_dofs():
    m = refine_elements(geometry.rectangle(2, 2), [0])
    cm = build_constraints(m, [DirichletBC("bottom", "y"), DirichletBC("top", "y", "driven")])
    n = m.n_nodes
    for node in m.tag_nodes("bottom"):
        assert cm.kind[2 * node + 1] == FIXED
    for node in m.tag_nodes("top"):
        assert cm.kind[2 * node + 1] == DRIVEN
    hanging = m.hanging_nodes()
    for node in hanging:
        assert cm.kind[2 * node] == CONSTRAINED and cm.kind[2 * n + node] == CONSTRAINED
    assert cm.n_free == cm.n_dofs - np.count_nonzero(cm.kind != 0)


def test_hanging_nodes_interpolate_linear_fields():
    m = refine_elements(geometry.rectangle(3, 3), [4])
    m = refine_elements(m, [m.children[4][0]])
    cm = build_constraints(m, [])
    x, y = m.nodes[:, 0], m.nodes[:, 1]
    exact = np.concatenate([np.column_stack([1 + 2 * x - y, 3 * y + 0.5 * x]).ravel(), 0.2 + x * y * 0 + 0.3 * x])
    full = cm.expand(exact[cm.free], 0.0)
    np.testing.assert_allclose(full, exact, atol=1e-14)
    assert len(m.hanging_nodes()) > 0


def test_conflicting_conditions_rejected():
    m = geometry.rectangle(2, 2)
    with pytest.raises(ConfigurationError):
        build_constraints(m, [DirichletBC("left", "x"), DirichletBC("bottom", "x", "driven")])


def test_prescribed_hanging_dof_rejected():
    m = refine_elements(geometry.rectangle(2, 1), [0])
    # the hanging midpoint of the interior vertical edge is not on a boundary,
    # so tag it artificially
    (h, (a, b)), = m.hanging_nodes().items()
    m.edge_tags["bad"] = {(min(a, h), max(a, h))}
    with pytest.raises(ConfigurationError):
        build_constraints(m, [DirichletBC("bad", "x")])


def test_bc_validation():
    with pytest.raises(ConfigurationError):
        DirichletBC("left", "z")
    with pytest.raises(ConfigurationError):
        DirichletBC("left", "x", "pinned")


def test_transfer_is_exact_for_linear_fields_and_injects_history():
    m = geometry.rectangle(2, 2)
    n = m.n_nodes
    x, y = m.nodes[:, 0], m.nodes[:, 1]
    field = np.concatenate([np.column_stack([x + 2 * y, -y]).ravel(), 0.1 + 0.5 * x])
    H = np.arange(m.n_elements * 4, dtype=float).reshape(-1, 4)
    r = refine_elements(m, [0, 3])
    xn, Hn = transfer_fields(m, r, field, H)
    X, Y = r.nodes[:, 0], r.nodes[:, 1]
    expect = np.concatenate([np.column_stack([X + 2 * Y, -Y]).ravel(), 0.1 + 0.5 * X])
    np.testing.assert_allclose(xn, expect, atol=1e-14)
    for p in (0, 3):
        for k, c in enumerate(r.children[p]):
            assert np.all(Hn[c] == H[p, k])
    np.testing.assert_array_equal(Hn[: m.n_elements], H)
    assert r.n_nodes > n


def test_transfer_clamps_interpolated_phase():
    m = geometry.rectangle(1, 1)
    x = np.zeros(3 * m.n_nodes)
    x[2 * m.n_nodes :] = [1.0, 1.0, 1.0, 1.0]
    r = refine_elements(m, [0])
    xn, _ = transfer_fields(m, r, x, np.zeros((1, 4)))
    assert np.all(xn[2 * r.n_nodes :] <= 1.0)


def test_transfer_rejects_unrelated_meshes():
    a = geometry.rectangle(2, 2)
    b = geometry.rectangle(3, 3)
    with pytest.raises(ValueError):
        transfer_fields(a, b, np.zeros(3 * a.n_nodes), np.zeros((a.n_elements, 4)))
