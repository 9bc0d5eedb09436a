import numpy as np
import pytest

from mchom.grid import (
    build_coarse_partition,
    build_extended_region,
    build_fine_mesh,
    build_oversampled_region,
    oversampling_layers,
)


def test_smallest_mesh():
    mesh = build_fine_mesh(1, 1)
    assert mesh.n_nodes == 4
    assert mesh.n_triangles == 2
    assert abs(mesh.areas.sum() - 1.0) < 1e-12


def test_counting_formula():
    mesh = build_fine_mesh(2, 2)
    assert mesh.n_nodes == 9
    assert mesh.n_triangles == 8


def test_paper_grid_counts():
    mesh = build_fine_mesh(400, 400)
    assert mesh.n_nodes == 160801
    assert mesh.n_triangles == 320000
    assert abs(mesh.areas.sum() - 1.0) < 1e-12


def test_positive_areas_and_boundary():
    mesh = build_fine_mesh(7, 3)
    assert np.all(mesh.areas > 0)
    bd = mesh.boundary_nodes
    x, y = mesh.nodes[bd, 0], mesh.nodes[bd, 1]
    on_edge = (x == 0) | (x == 1) | (y == 0) | (y == 1)
    assert on_edge.all()
    assert len(bd) == 2 * (7 + 3)


@pytest.mark.parametrize("nx,ny", [(0, 3), (3, 0), (-1, 5)])
def test_invalid_mesh_counts(nx, ny):
    with pytest.raises(ValueError):
        build_fine_mesh(nx, ny)


def test_partition_h20():
    mesh = build_fine_mesh(400, 400)
    part = build_coarse_partition(mesh, 20)
    assert part.n_blocks == 400
    assert all(len(part.block_tris[b]) == 800 for b in range(400))
    areas = [part.block_area(b) for b in (0, 57, 399)]
    assert np.allclose(areas, part.H**2, atol=1e-12)


def test_partition_h40():
    mesh = build_fine_mesh(400, 400)
    part = build_coarse_partition(mesh, 40)
    assert part.n_blocks == 1600
    assert all(len(part.block_tris[b]) == 200 for b in range(1600))


def test_partition_block_equals_cell_pair():
    mesh = build_fine_mesh(4, 4)
    part = build_coarse_partition(mesh, 4)
    assert all(len(part.block_tris[b]) == 2 for b in range(16))


def test_partition_covers_all_elements():
    mesh = build_fine_mesh(16, 16)
    part = build_coarse_partition(mesh, 4)
    total = sum(len(part.block_tris[b]) for b in range(part.n_blocks))
    assert total == mesh.n_triangles
    seen = np.concatenate([part.block_tris[b] for b in range(part.n_blocks)])
    assert np.array_equal(np.sort(seen), np.arange(mesh.n_triangles))


def test_partition_rejects_non_divisor():
    mesh = build_fine_mesh(10, 10)
    with pytest.raises(ValueError):
        build_coarse_partition(mesh, 3)


def test_oversampling_layer_formula():
    assert oversampling_layers(1 / 20) == 6
    assert oversampling_layers(1 / 40) == 8
    assert oversampling_layers(np.exp(-2.0)) == 4


@pytest.mark.parametrize("H", [0.0, 1.0, -0.5, 2.0])
def test_oversampling_layer_domain(H):
    with pytest.raises(ValueError):
        oversampling_layers(H)


def test_region_zero_layers():
    mesh = build_fine_mesh(8, 8)
    part = build_coarse_partition(mesh, 4)
    reg = build_oversampled_region(part, 5, 0)
    assert reg.n_members == 1
    assert reg.p0 == 0
    assert np.array_equal(np.sort(reg.tri_global), np.sort(part.block_tris[5]))


def test_region_interior_count():
    mesh = build_fine_mesh(16, 16)
    part = build_coarse_partition(mesh, 8)
    reg = build_oversampled_region(part, 3 * 8 + 3, 2)
    assert reg.n_members == 25
    assert reg.member_blocks[reg.p0] == 3 * 8 + 3


def test_region_corner_clipping():
    mesh = build_fine_mesh(40, 40)
    part = build_coarse_partition(mesh, 20)
    reg = build_oversampled_region(part, 0, 6)
    # independent enumeration of the clipped neighborhood
    expected = {
        by * 20 + bx
        for bx in range(20)
        for by in range(20)
        if abs(bx - 0) <= 6 and abs(by - 0) <= 6
    }
    assert set(reg.member_blocks.tolist()) == expected
    assert reg.n_members == 49


def test_region_sliding_window():
    mesh = build_fine_mesh(32, 32)
    part = build_coarse_partition(mesh, 16)
    l = 2
    a = build_oversampled_region(part, 8 * 16 + 7, l)
    b = build_oversampled_region(part, 8 * 16 + 8, l)
    sa, sb = set(a.member_blocks.tolist()), set(b.member_blocks.tolist())
    assert len(sa ^ sb) == 2 * (2 * l + 1)


def test_region_index_maps_are_injective():
    mesh = build_fine_mesh(16, 16)
    part = build_coarse_partition(mesh, 8)
    reg = build_oversampled_region(part, 9, 2)
    assert len(np.unique(reg.tri_global)) == reg.local.n_triangles
    assert len(np.unique(reg.node_global)) == reg.local.n_nodes
    # coordinates of mapped nodes agree with the global mesh
    assert np.allclose(mesh.nodes[reg.node_global], reg.local.nodes)


def test_extended_region_full_size_everywhere():
    mesh = build_fine_mesh(16, 16)
    part = build_coarse_partition(mesh, 8)
    for block in (0, 7, 9, 63):
        reg = build_extended_region(part, block, 2)
        assert reg.n_members == 25
        assert reg.member_blocks[reg.p0] == block


def test_extended_region_matches_clipped_on_interior():
    mesh = build_fine_mesh(16, 16)
    part = build_coarse_partition(mesh, 8)
    a = build_oversampled_region(part, 3 * 8 + 4, 2)
    b = build_extended_region(part, 3 * 8 + 4, 2)
    assert np.array_equal(a.tri_global, b.tri_global)
    assert np.array_equal(a.tri_member, b.tri_member)


def test_extended_region_wraps_coefficient_lookup():
    mesh = build_fine_mesh(16, 16)
    part = build_coarse_partition(mesh, 8)
    reg = build_extended_region(part, 0, 1)
    assert reg.tri_global.min() >= 0
    assert reg.tri_global.max() < mesh.n_triangles
    center = reg.center_tris
    assert np.array_equal(
        np.sort(reg.tri_global[center]), np.sort(part.block_tris[0])
    )


def test_block_nodes_shape():
    mesh = build_fine_mesh(12, 12)
    part = build_coarse_partition(mesh, 4)
    nodes = part.block_nodes(5)
    assert len(nodes) == 16
    xy = mesh.nodes[nodes]
    bx, by = part.block_index(5)
    assert xy[:, 0].min() == pytest.approx(bx * part.H)
    assert xy[:, 0].max() == pytest.approx((bx + 1) * part.H)
