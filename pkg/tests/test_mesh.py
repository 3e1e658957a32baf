import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from femnn import fem
from femnn.mesh import (
    UNIT_SQUARE, ConfigurationError, Rect, StructureError, build_mesh, build_patches,
    load_mesh_json, refine, save_mesh_json,
)
from oracles import brute_force_multiplicity


def enumerate_nodes(nx, ny):
    return sum(1 for _ in range(nx + 1) for _ in range(ny + 1))


@pytest.mark.parametrize(
    "rect, nx, ny, nodes, cells, h",
    [
        (UNIT_SQUARE, 8, 8, 81, 64, 2.0 ** -3),
        (UNIT_SQUARE, 1, 1, 4, 1, 1.0),
        (Rect(0, 2, 0, 1), 16, 8, 153, 128, 1 / 8),
    ],
)
def test_build_mesh_counts(rect, nx, ny, nodes, cells, h):
    m = build_mesh(rect, nx, ny)
    assert m.n_nodes == len(m.nodes) == nodes == enumerate_nodes(nx, ny)
    assert m.n_cells == len(m.cells) == cells
    assert m.h == h


def test_non_square_cells_rejected():
    with pytest.raises(ConfigurationError):
        build_mesh(UNIT_SQUARE, 4, 8)
    with pytest.raises(ConfigurationError):
        build_mesh(UNIT_SQUARE, 0, 0)
    with pytest.raises(ConfigurationError):
        Rect(1, 0, 0, 1)


def test_boundary_mask_exactly_on_boundary():
    m = build_mesh(Rect(0, 2, 0, 1), 16, 8)
    x, y = m.nodes.T
    on = np.isclose(x, 0) | np.isclose(x, 2) | np.isclose(y, 0) | np.isclose(y, 1)
    np.testing.assert_array_equal(m.boundary_mask, on)


def test_cells_counterclockwise_squares():
    m = build_mesh(UNIT_SQUARE, 4, 4)
    corners = m.nodes[m.cells]  # (cells, 4, 2)
    d = corners - corners[:, :1]
    np.testing.assert_allclose(d[:, 1:], np.broadcast_to([[m.h, 0], [m.h, m.h], [0, m.h]], d[:, 1:].shape),
                               atol=1e-15)


def test_refine():
    m = build_mesh(UNIT_SQUARE, 8, 8)
    r = refine(m)
    assert (r.nx, r.ny, r.h, r.level) == (16, 16, 2.0 ** -4, 1)
    rr = refine(m, 2)
    assert rr.n_nodes == 1089 == enumerate_nodes(32, 32)
    target = np.array([0.25, 0.5])
    assert any((m.nodes == target).all(axis=1))
    assert any((r.nodes == target).all(axis=1))
    # every coarse coordinate pair reappears bit-identically
    fine_set = {tuple(p) for p in rr.nodes}
    assert all(tuple(p) in fine_set for p in m.nodes)


def test_deterministic_construction():
    a = build_mesh(Rect(0, 2, 0, 1), 16, 8)
    b = build_mesh(Rect(0, 2, 0, 1), 16, 8)
    assert a.nodes.tobytes() == b.nodes.tobytes()
    assert a.cells.tobytes() == b.cells.tobytes()


@pytest.mark.parametrize("k, per_patch", [(1, 9), (2, 25), (3, 81)])
def test_patch_counts(k, per_patch):
    coarse = build_mesh(UNIT_SQUARE, 8, 8)
    ps = build_patches(coarse, refine(coarse, k))
    assert len(ps) == 64
    assert ps.refine_steps == k
    assert ps.fine_nodes.shape == (64, per_patch)
    assert all(len(p.coarse_node_ids) == 4 for p in ps.patches)
    assert all(len(p.fine_cell_ids) == 4 ** k for p in ps.patches)


def test_patch_geometry_and_ordering():
    coarse = build_mesh(UNIT_SQUARE, 4, 4)
    fine = refine(coarse, 2)
    ps = build_patches(coarse, fine)
    ref = fine.nodes[ps.patches[0].fine_node_ids]
    for p in ps.patches:
        cell = coarse.nodes[coarse.cells[p.coarse_cell_id]]
        sw = cell[0]
        # coarse corners in (SW, SE, NW, NE) order
        np.testing.assert_allclose(coarse.nodes[p.coarse_node_ids],
                                   sw + coarse.h * np.array([[0, 0], [1, 0], [0, 1], [1, 1]]))
        # same layout after translation, row-major (x fastest)
        xy = fine.nodes[p.fine_node_ids]
        np.testing.assert_allclose(xy - sw, ref - ref[0], atol=1e-15)
        assert np.all(np.diff(xy[:5, 0]) > 0)
        # fine cells lie inside the coarse cell
        centers = fine.nodes[fine.cells[p.fine_cell_ids]].mean(axis=1)
        assert np.all((centers > cell.min(0)) & (centers < cell.max(0)))


def test_multiplicity_matches_brute_force():
    coarse = build_mesh(Rect(0, 2, 0, 1), 4, 2)
    fine = refine(coarse, 2)
    ps = build_patches(coarse, fine)
    np.testing.assert_array_equal(ps.multiplicity, brute_force_multiplicity(coarse, fine))
    # interior coarse-edge node has 2 patches, interior coarse vertex has 4
    assert ps.multiplicity[fine.node_id(4, 2)] == 2
    assert ps.multiplicity[fine.node_id(4, 4)] == 4
    assert ps.multiplicity[fine.node_id(1, 1)] == 1


@pytest.mark.parametrize("k", [1, 2, 3])
def test_partition_of_unity_multiplicity(k):
    coarse = build_mesh(UNIT_SQUARE, 4, 4)
    ps = build_patches(coarse, refine(coarse, k))
    total = np.zeros(ps.fine.n_nodes)
    for p in ps.patches:
        total[p.fine_node_ids] += 1.0 / ps.multiplicity[p.fine_node_ids]
    np.testing.assert_allclose(total, 1.0, rtol=0, atol=1e-15)


def test_non_nested_meshes_rejected():
    coarse = build_mesh(UNIT_SQUARE, 8, 8)
    with pytest.raises(StructureError):
        build_patches(coarse, build_mesh(UNIT_SQUARE, 12, 12))
    with pytest.raises(StructureError):
        build_patches(coarse, build_mesh(Rect(0, 2, 0, 1), 32, 16))
    with pytest.raises(StructureError):
        build_patches(coarse, coarse)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31), k=st.integers(1, 3))
def test_nestedness_q1_reproduced(seed, k):
    rng = np.random.default_rng(seed)
    coarse = build_mesh(Rect(0, 2, 0, 1), 4, 2)
    fine = refine(coarse, k)
    u = rng.standard_normal(coarse.n_nodes)
    uf = fem.transfer(coarse, u, fine)
    pts = rng.uniform([0, 0], [2, 1], size=(200, 2))
    np.testing.assert_allclose(fem.evaluate(fine, uf, *pts.T), fem.evaluate(coarse, u, *pts.T),
                               rtol=0, atol=1e-12)


def test_mesh_json_roundtrip(tmp_path):
    m = build_mesh(Rect(0, 2, 0, 1), 4, 2)
    save_mesh_json(m, tmp_path / "m.json")
    back = load_mesh_json(tmp_path / "m.json")
    assert back.nodes.tobytes() == m.nodes.tobytes()
    np.testing.assert_array_equal(back.boundary_mask, m.boundary_mask)
