"""Quadtree mesh construction, refinement, balance, and constraints."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from axlandau import (
    DomainSpec,
    Species,
    adapt_for_species,
    cartesian_mesh,
    mesh_stats,
    refine,
    write_vtk,
)


def leaf_rects(mesh):
    """Leaf bounding boxes in physical coordinates."""
    lo = mesh.origins
    hi = mesh.origins + mesh.sizes
    return lo, hi


def test_cartesian_counts(domain):
    m = cartesian_mesh(domain, 4, 8)
    assert m.n_cells == 32
    assert m.n_nodes == (2 * 4 + 1) * (2 * 8 + 1)
    assert not m.hanging
    assert m.n_free == m.n_nodes
    # prolongation is the identity when nothing is constrained
    assert np.array_equal(m.prolongation.toarray(), np.eye(m.n_nodes))


def test_cell_node_coordinates(domain):
    m = cartesian_mesh(domain, 2, 3)
    # local ordering is z-major: i = 3*kz + kr, offsets at 0, 1/2, 1 of the cell
    for e in range(m.n_cells):
        x0, y0 = m.origins[e]
        hx, hy = m.sizes[e]
        for kz in range(3):
            for kr in range(3):
                node = m.cell_nodes[e, 3 * kz + kr]
                assert np.allclose(
                    m.nodes[node], [x0 + 0.5 * kr * hx, y0 + 0.5 * kz * hy]
                )


def test_cells_tile_domain(domain):
    for m in (cartesian_mesh(domain, 2, 2), refine(cartesian_mesh(domain, 2, 2), [0])):
        area = float(np.prod(m.sizes, axis=1).sum())
        assert np.isclose(area, domain.L * 2 * domain.L)


def test_refine_single_cell(domain):
    m = refine(cartesian_mesh(domain, 2, 2), [0])
    assert m.n_cells == 3 + 4
    assert m.hanging  # fine/coarse interface creates constrained nodes
    assert m.n_free + len(m.hanging) == m.n_nodes
    for node, (masters, weights) in m.hanging.items():
        assert np.isclose(np.sum(weights), 1.0)
        # masters are free nodes (no constraint chains)
        for mast in masters:
            assert mast not in m.hanging


def test_hanging_interpolation_reproduces_quadratics(domain):
    """Constrained edge nodes must reproduce the coarse side's Q2 trace."""
    m = refine(cartesian_mesh(domain, 2, 2), [0])

    def q(r, z):
        return 1.0 + 2.0 * r - z + 0.5 * r * r + 0.25 * z * z - 0.3 * r * z

    free_vals = q(m.nodes[m.free_nodes, 0], m.nodes[m.free_nodes, 1])
    nodal = m.prolongation @ free_vals
    assert np.allclose(nodal, q(m.nodes[:, 0], m.nodes[:, 1]), atol=1e-13)


def _edge_adjacent_levels(mesh):
    """Pairs of levels of leaves sharing an edge segment (brute force)."""
    lo, hi = leaf_rects(mesh)
    out = []
    n = mesh.n_cells
    for a in range(n):
        for b in range(a + 1, n):
            # touching along r (vertical edge) with overlapping z extent
            touch_r = np.isclose(hi[a, 0], lo[b, 0]) or np.isclose(hi[b, 0], lo[a, 0])
            touch_z = np.isclose(hi[a, 1], lo[b, 1]) or np.isclose(hi[b, 1], lo[a, 1])
            ov_z = min(hi[a, 1], hi[b, 1]) - max(lo[a, 1], lo[b, 1])
            ov_r = min(hi[a, 0], hi[b, 0]) - max(lo[a, 0], lo[b, 0])
            if (touch_r and ov_z > 1e-12) or (touch_z and ov_r > 1e-12):
                out.append((int(mesh.cells[a, 0]), int(mesh.cells[b, 0])))
    return out


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=10_000), min_size=1, max_size=6))
def test_two_one_balance_under_random_refinement(marks):
    domain = DomainSpec()
    m = cartesian_mesh(domain, 2, 4)
    for mark in marks:
        m = refine(m, [mark % m.n_cells])
    for la, lb in _edge_adjacent_levels(m):
        assert abs(la - lb) <= 1


def test_refine_is_deterministic(domain):
    a = refine(refine(cartesian_mesh(domain, 4, 8), [0, 5, 7]), [2, 11])
    b = refine(refine(cartesian_mesh(domain, 4, 8), [0, 5, 7]), [2, 11])
    assert np.array_equal(a.cells, b.cells)
    assert np.array_equal(a.nodes, b.nodes)
    assert np.array_equal(a.cell_nodes, b.cell_nodes)
    assert sorted(a.hanging) == sorted(b.hanging)


def test_adapted_benchmark_mesh_size(domain):
    """Electron-adapted benchmark mesh lands near the nominal ~176 cells."""
    sp = [Species("e", 1.0, -1.0, 0.2)]
    m = adapt_for_species(domain, sp, levels=2, base=(4, 8))
    assert 158 <= m.n_cells <= 194  # 176 +/- 10%
    assert m.n_cells == 170  # regression pin for this implementation


def test_adapt_refines_around_species(domain):
    cold = [Species("i", 4.0, 1.0, 0.02)]
    m = adapt_for_species(domain, cold, levels=3, base=(4, 8))
    # finest cells should cluster at the (0, 0) peak of the cold species
    finest = m.cells[:, 0] == m.cells[:, 0].max()
    centers = m.origins[finest] + 0.5 * m.sizes[finest]
    assert np.all(np.hypot(centers[:, 0], centers[:, 1]) < 0.5)


def test_write_vtk(tmp_path, domain):
    m = refine(cartesian_mesh(domain, 2, 2), [1])
    path = tmp_path / "mesh.vtk"
    write_vtk(m, path, point_data={"val": np.arange(m.n_nodes, dtype=float)})
    text = path.read_text().splitlines()
    assert text[0].startswith("# vtk DataFile")
    assert any(line.startswith(f"POINTS {m.n_nodes}") for line in text)
    assert any(line.startswith(f"CELLS {m.n_cells}") for line in text)
    types = text[text.index("CELL_TYPES %d" % m.n_cells) + 1 :][: m.n_cells]
    assert all(t == "9" for t in types)
    assert "SCALARS val double 1" in text


def test_mesh_stats_mentions_counts(domain):
    m = cartesian_mesh(domain, 4, 8)
    s = mesh_stats(m)
    assert "leaf cells: 32" in s


def test_domain_validation():
    with pytest.raises(ValueError):
        DomainSpec(L=-1.0)
