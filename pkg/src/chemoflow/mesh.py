"""Uniform rectangular finite-volume meshes with optional solid obstacles.

The mesh covers an axis-aligned rectangle with nx * ny equal cells. Solid
regions (at most two, rectangular or circular) are rasterized by cell
center: a cell is entirely fluid or entirely solid. Fluid cells get
contiguous ids in row-major order (x fastest); connectivity is stored in
flat per-cell arrays so assembly kernels never touch Python objects.

Outer boundary sides are tagged by position (left=inlet, right=outlet,
bottom/top=walls). Solvers that run without a fluid treat every outer
boundary as a no-flux wall regardless of tag.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

# direction indices used throughout assembly: west, east, south, north
WEST, EAST, SOUTH, NORTH = 0, 1, 2, 3
DIRECTIONS = (WEST, EAST, SOUTH, NORTH)
_DIR_STEPS = ((-1, 0), (1, 0), (0, -1), (0, 1))
_OPPOSITE = (EAST, WEST, NORTH, SOUTH)


class BoundaryTag(IntEnum):
    WALL_BOTTOM = 1
    OUTLET = 2
    WALL_TOP = 3
    INLET = 4
    OBSTACLE_1 = 5
    OBSTACLE_2 = 6


_SIDE_TAGS = {
    WEST: BoundaryTag.INLET,
    EAST: BoundaryTag.OUTLET,
    SOUTH: BoundaryTag.WALL_BOTTOM,
    NORTH: BoundaryTag.WALL_TOP,
}


@dataclass(frozen=True)
class RectObstacle:
    x0: float
    x1: float
    y0: float
    y1: float

    def contains(self, x, y):
        return (x > self.x0) & (x < self.x1) & (y > self.y0) & (y < self.y1)


@dataclass(frozen=True)
class CircleObstacle:
    cx: float
    cy: float
    radius: float

    def contains(self, x, y):
        return (x - self.cx) ** 2 + (y - self.cy) ** 2 < self.radius**2


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    lx: float
    ly: float
    origin: tuple[float, float] = (0.0, 0.0)
    obstacles: tuple = ()


@dataclass(frozen=True)
class Face:
    """One control-volume face seen from its owner cell."""

    owner: int
    neighbor: int          # fluid cell id, or -1 for a boundary face
    tag: int               # BoundaryTag value for boundary faces, -1 inside
    measure: float         # |sigma|
    distance: float        # center-to-center (interior) or center-to-face
    normal: tuple[float, float]


@dataclass
class Mesh:
    spec: GridSpec
    dx: float
    dy: float
    cell_area: float
    n_cells: int
    # (nx, ny) int32, fluid cell id or -1 for solid
    cell_id: np.ndarray
    # per fluid cell
    cell_ix: np.ndarray
    cell_iy: np.ndarray
    cell_x: np.ndarray
    cell_y: np.ndarray
    # per fluid cell and direction (W,E,S,N): neighbor id or -1
    neighbor: np.ndarray
    # per fluid cell and direction: BoundaryTag value, or -1 for interior faces
    boundary_tag: np.ndarray
    solid: np.ndarray = field(repr=False, default=None)

    # face measure and center distance per direction (uniform grid)
    @property
    def face_measure(self):
        return np.array([self.dy, self.dy, self.dx, self.dx])

    @property
    def face_distance(self):
        return np.array([self.dx, self.dx, self.dy, self.dy])

    @property
    def transmissibility(self):
        """|sigma| / d_KL per direction for interior faces."""
        return self.face_measure / self.face_distance

    @property
    def fluid_area(self):
        return self.n_cells * self.cell_area

    def faces_of(self, k):
        """All four faces of fluid cell k, in W,E,S,N order."""
        meas = self.face_measure
        dist = self.face_distance
        normals = ((-1.0, 0.0), (1.0, 0.0), (0.0, -1.0), (0.0, 1.0))
        out = []
        for d in DIRECTIONS:
            nb = int(self.neighbor[k, d])
            tag = int(self.boundary_tag[k, d])
            # interior face distance is center-to-center; boundary faces sit
            # half a cell away from the center
            dd = dist[d] if nb >= 0 else 0.5 * dist[d]
            out.append(Face(k, nb, tag, float(meas[d]), float(dd), normals[d]))
        return out

    def boundary_measure(self, tags=None):
        """Total measure of boundary faces, optionally restricted to tags."""
        meas = self.face_measure
        total = 0.0
        for d in DIRECTIONS:
            sel = self.boundary_tag[:, d] >= 0
            if tags is not None:
                sel &= np.isin(self.boundary_tag[:, d], np.asarray(tags, dtype=int))
            total += meas[d] * np.count_nonzero(sel)
        return total

    def scatter(self, values, fill=0.0):
        """Flat per-cell array -> (ny, nx) grid (solid cells get `fill`)."""
        grid = np.full((self.spec.ny, self.spec.nx), fill, dtype=float)
        grid[self.cell_iy, self.cell_ix] = values
        return grid

    def gather(self, grid):
        """(ny, nx) grid -> flat per-cell array over fluid cells."""
        return np.ascontiguousarray(grid[self.cell_iy, self.cell_ix], dtype=float)


def neighbors(mesh, k):
    """List of (neighbor_id, Face) pairs over the interior faces of cell k."""
    return [(f.neighbor, f) for f in mesh.faces_of(k) if f.neighbor >= 0]


def build_grid(spec):
    """Construct a Mesh from a GridSpec.

    Raises ValueError for degenerate cells, more than two obstacles,
    obstacles reaching outside the domain, or a fully solid domain.
    """
    if spec.nx < 1 or spec.ny < 1:
        raise ValueError(f"grid must have at least 1x1 cells, got {spec.nx}x{spec.ny}")
    if not (spec.lx > 0.0 and spec.ly > 0.0):
        raise ValueError(f"domain edges must be positive, got lx={spec.lx} ly={spec.ly}")
    if len(spec.obstacles) > 2:
        raise ValueError("at most two obstacles are supported")

    ox, oy = spec.origin
    dx = spec.lx / spec.nx
    dy = spec.ly / spec.ny
    xs = ox + (np.arange(spec.nx) + 0.5) * dx
    ys = oy + (np.arange(spec.ny) + 0.5) * dy
    cx, cy = np.meshgrid(xs, ys, indexing="ij")  # (nx, ny)

    for obs in spec.obstacles:
        if isinstance(obs, RectObstacle):
            if not (obs.x1 > obs.x0 and obs.y1 > obs.y0):
                raise ValueError(f"degenerate obstacle {obs}")
            inside = (obs.x0 >= ox and obs.x1 <= ox + spec.lx
                      and obs.y0 >= oy and obs.y1 <= oy + spec.ly)
        elif isinstance(obs, CircleObstacle):
            if not obs.radius > 0.0:
                raise ValueError(f"degenerate obstacle {obs}")
            inside = (obs.cx - obs.radius >= ox and obs.cx + obs.radius <= ox + spec.lx
                      and obs.cy - obs.radius >= oy and obs.cy + obs.radius <= oy + spec.ly)
        else:
            raise ValueError(f"unknown obstacle type {type(obs).__name__}")
        if not inside:
            raise ValueError(f"obstacle {obs} reaches outside the domain")

    solid = np.zeros((spec.nx, spec.ny), dtype=bool)
    owner = np.full((spec.nx, spec.ny), -1, dtype=np.int32)  # obstacle index per solid cell
    for idx, obs in enumerate(spec.obstacles):
        mask = obs.contains(cx, cy) & ~solid
        solid |= mask
        owner[mask] = idx

    n_cells = int(np.count_nonzero(~solid))
    if n_cells == 0:
        raise ValueError("obstacles cover every cell; no fluid region left")

    cell_id = np.full((spec.nx, spec.ny), -1, dtype=np.int32)
    # row-major ids: j outer, i inner
    jj, ii = np.nonzero(~solid.T)
    cell_id[ii, jj] = np.arange(n_cells, dtype=np.int32)
    cell_ix = ii.astype(np.int32)
    cell_iy = jj.astype(np.int32)

    cell_x = ox + (cell_ix + 0.5) * dx
    cell_y = oy + (cell_iy + 0.5) * dy

    neighbor = np.full((n_cells, 4), -1, dtype=np.int32)
    boundary_tag = np.full((n_cells, 4), -1, dtype=np.int32)
    nx, ny = spec.nx, spec.ny
    for d, (si, sj) in zip(DIRECTIONS, _DIR_STEPS):
        ni = cell_ix + si
        nj = cell_iy + sj
        off_domain = (ni < 0) | (ni >= nx) | (nj < 0) | (nj >= ny)
        boundary_tag[off_domain, d] = int(_SIDE_TAGS[d])
        inside = ~off_domain
        nid = cell_id[ni[inside], nj[inside]]
        neighbor[inside, d] = nid
        # faces against a solid cell carry the obstacle's tag
        blocked = np.where(inside)[0][nid < 0]
        if blocked.size:
            obs_idx = owner[cell_ix[blocked] + si, cell_iy[blocked] + sj]
            boundary_tag[blocked, d] = int(BoundaryTag.OBSTACLE_1) + obs_idx

    return Mesh(
        spec=spec,
        dx=dx,
        dy=dy,
        cell_area=dx * dy,
        n_cells=n_cells,
        cell_id=cell_id,
        cell_ix=cell_ix,
        cell_iy=cell_iy,
        cell_x=cell_x,
        cell_y=cell_y,
        neighbor=neighbor,
        boundary_tag=boundary_tag,
        solid=solid,
    )
