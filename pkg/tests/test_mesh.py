import numpy as np
import pytest

from chemoflow.mesh import (EAST, NORTH, SOUTH, WEST, BoundaryTag,
                            CircleObstacle, GridSpec, Mesh, RectObstacle,
                            build_grid, neighbors)

_OPP = {WEST: EAST, EAST: WEST, SOUTH: NORTH, NORTH: SOUTH}


def unit_mesh(n=8):
    return build_grid(GridSpec(nx=n, ny=n, lx=1.0, ly=1.0))


def channel_mesh():
    spec = GridSpec(nx=128, ny=64, lx=10.0, ly=4.0,
                    obstacles=(RectObstacle(2.5, 3.125, 0.0, 2.25),
                               RectObstacle(5.625, 6.25, 1.75, 4.0)))
    return build_grid(spec)


def test_unit_grid_geometry():
    m = unit_mesh(8)
    assert m.dx == pytest.approx(0.125)
    assert m.dy == pytest.approx(0.125)
    assert m.cell_area == pytest.approx(0.125 * 0.125)
    assert m.n_cells == 64
    assert m.cell_id.shape == (8, 8)
    # row-major ids, x fastest
    assert m.cell_id[0, 0] == 0
    assert m.cell_id[1, 0] == 1
    assert m.cell_id[0, 1] == 8


def test_cell_centers():
    m = unit_mesh(4)
    k = m.cell_id[2, 1]
    assert m.cell_x[k] == pytest.approx(0.625)
    assert m.cell_y[k] == pytest.approx(0.375)


def test_neighbor_symmetry():
    m = channel_mesh()
    for d in (WEST, EAST, SOUTH, NORTH):
        has = m.neighbor[:, d] >= 0
        fwd = m.neighbor[has, d]
        back = m.neighbor[fwd, _OPP[d]]
        assert np.array_equal(back, np.nonzero(has)[0])


def test_transmissibility_uniform_grid():
    m = build_grid(GridSpec(nx=10, ny=5, lx=2.0, ly=1.0))
    tau = m.transmissibility
    # tau = |sigma| / distance: dy/dx horizontally, dx/dy vertically
    assert tau[WEST] == pytest.approx(m.dy / m.dx)
    assert tau[EAST] == pytest.approx(m.dy / m.dx)
    assert tau[SOUTH] == pytest.approx(m.dx / m.dy)
    assert tau[NORTH] == pytest.approx(m.dx / m.dy)


def test_outer_boundary_tags():
    m = unit_mesh(4)
    left = m.cell_id[0, 2]
    right = m.cell_id[3, 2]
    bottom = m.cell_id[2, 0]
    top = m.cell_id[2, 3]
    assert m.boundary_tag[left, WEST] == BoundaryTag.INLET
    assert m.boundary_tag[right, EAST] == BoundaryTag.OUTLET
    assert m.boundary_tag[bottom, SOUTH] == BoundaryTag.WALL_BOTTOM
    assert m.boundary_tag[top, NORTH] == BoundaryTag.WALL_TOP
    interior = m.cell_id[1, 1]
    assert (m.boundary_tag[interior] == -1).all()


def test_channel_obstacles_staircase_exact():
    m = channel_mesh()
    # both rectangles have edges on grid lines: 8 x 36 cells each
    assert m.solid.sum() == 2 * 8 * 36
    assert m.n_cells == 128 * 64 - 576
    # solid block location: first obstacle spans ix 32..39, iy 0..35
    assert m.solid[32:40, 0:36].all()
    assert not m.solid[31, 0:36].any()
    assert not m.solid[40, 0:36].any()
    # cells beside a solid block carry its tag
    beside = m.cell_id[31, 10]
    assert m.boundary_tag[beside, EAST] == BoundaryTag.OBSTACLE_1
    above = m.cell_id[35, 36]
    assert m.boundary_tag[above, SOUTH] == BoundaryTag.OBSTACLE_1
    second = m.cell_id[72, 27]
    assert m.boundary_tag[second, NORTH] == BoundaryTag.OBSTACLE_2


def test_circle_obstacle_rasterized_by_center():
    spec = GridSpec(nx=16, ny=16, lx=1.0, ly=1.0,
                    obstacles=(CircleObstacle(0.5, 0.5, 0.2),))
    m = build_grid(spec)
    centers_inside = ((m.spec.obstacles[0].contains(
        (np.arange(16)[:, None] + 0.5) / 16.0,
        (np.arange(16)[None, :] + 0.5) / 16.0))).sum()
    assert m.solid.sum() == centers_inside
    assert m.n_cells == 256 - centers_inside


def test_scatter_gather_roundtrip():
    m = channel_mesh()
    rng = np.random.default_rng(3)
    vals = rng.standard_normal(m.n_cells)
    grid = m.scatter(vals, fill=-7.0)
    assert grid.shape == (64, 128)
    assert np.array_equal(m.gather(grid), vals)
    # solid cells got the fill value
    assert grid[m.solid.T].min() == -7.0
    assert grid[m.solid.T].max() == -7.0


def test_faces_of_matches_flat_arrays():
    m = channel_mesh()
    k = m.cell_id[31, 10]
    faces = m.faces_of(k)
    assert len(faces) == 4
    for f, d in zip(faces, range(4)):
        assert f.owner == k
        assert f.neighbor == m.neighbor[k, d]
        assert f.tag == m.boundary_tag[k, d]


def test_neighbors_helper_skips_boundary_faces():
    m = unit_mesh(4)
    corner = m.cell_id[0, 0]
    inner = m.cell_id[1, 1]
    assert len(neighbors(m, corner)) == 2
    assert len(neighbors(m, inner)) == 4


def test_degenerate_obstacle_rejected():
    with pytest.raises(ValueError):
        build_grid(GridSpec(nx=8, ny=8, lx=1.0, ly=1.0,
                            obstacles=(RectObstacle(0.5, 0.2, 0.0, 1.0),)))
