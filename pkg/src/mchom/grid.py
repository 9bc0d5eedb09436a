"""Structured triangulations, coarse partitions, and oversampled regions."""

import math

import numpy as np

__all__ = [
    "StructuredMesh",
    "CoarsePartition",
    "OversampledRegion",
    "build_fine_mesh",
    "build_coarse_partition",
    "oversampling_layers",
    "build_oversampled_region",
    "build_extended_region",
]


class StructuredMesh:
    """Uniform triangulation of an axis-aligned rectangle.

    Every grid cell is split into two triangles along its bottom-left to
    top-right diagonal, so cell c owns triangles 2c (lower right) and
    2c+1 (upper left), both counterclockwise.  Nodes are numbered
    row-major: node(ix, iy) = iy*(nx+1) + ix, and cells likewise with
    cell(ix, iy) = iy*nx + ix.
    """

    def __init__(self, nx, ny, origin=(0.0, 0.0), extent=(1.0, 1.0)):
        if nx < 1 or ny < 1:
            raise ValueError(f"cell counts must be positive, got nx={nx}, ny={ny}")
        self.nx = int(nx)
        self.ny = int(ny)
        self.origin = (float(origin[0]), float(origin[1]))
        self.extent = (float(extent[0]), float(extent[1]))
        self.hx = self.extent[0] / self.nx
        self.hy = self.extent[1] / self.ny

        xs = self.origin[0] + self.hx * np.arange(self.nx + 1)
        ys = self.origin[1] + self.hy * np.arange(self.ny + 1)
        gx, gy = np.meshgrid(xs, ys, indexing="xy")
        self.nodes = np.column_stack([gx.ravel(), gy.ravel()])

        ix, iy = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="xy")
        bl = (iy * (self.nx + 1) + ix).ravel()
        br = bl + 1
        tl = bl + (self.nx + 1)
        tr = tl + 1
        tris = np.empty((2 * self.nx * self.ny, 3), dtype=np.int64)
        tris[0::2] = np.column_stack([bl, br, tr])
        tris[1::2] = np.column_stack([bl, tr, tl])
        self.triangles = tris

        v = self.nodes[tris]
        d = (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1]) - (
            v[:, 2, 0] - v[:, 0, 0]
        ) * (v[:, 1, 1] - v[:, 0, 1])
        self.areas = 0.5 * d

        nix, niy = np.meshgrid(
            np.arange(self.nx + 1), np.arange(self.ny + 1), indexing="xy"
        )
        on_bd = (nix == 0) | (nix == self.nx) | (niy == 0) | (niy == self.ny)
        self.boundary_nodes = np.flatnonzero(on_bd.ravel())

        self._barycenters = None

    @property
    def n_nodes(self):
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_triangles(self):
        return 2 * self.nx * self.ny

    @property
    def barycenters(self):
        """Per-triangle centroid coordinates, shape (n_triangles, 2)."""
        if self._barycenters is None:
            self._barycenters = self.nodes[self.triangles].mean(axis=1)
        return self._barycenters

    def node_id(self, ix, iy):
        return iy * (self.nx + 1) + ix

    def cell_id(self, ix, iy):
        return iy * self.nx + ix

    def cell_of_triangle(self, t):
        return np.asarray(t) // 2


def build_fine_mesh(nx: int, ny: int) -> StructuredMesh:
    """Conforming triangulation of the unit square with nx-by-ny cells."""
    return StructuredMesh(nx, ny)


class CoarsePartition:
    """Partition of a structured mesh into M-by-M square coarse blocks.

    Blocks are numbered row-major like cells: block(bx, by) = by*M + bx.
    The coarse triangulation splits each block into two triangles with
    the same diagonal convention as the fine mesh.
    """

    def __init__(self, mesh: StructuredMesh, M: int):
        if M < 1:
            raise ValueError(f"block count must be positive, got M={M}")
        if mesh.nx % M or mesh.ny % M:
            raise ValueError(
                f"M={M} does not divide the fine cell counts ({mesh.nx}, {mesh.ny})"
            )
        self.mesh = mesh
        self.M = int(M)
        self.H = 1.0 / M
        self.cells_per_block_x = mesh.nx // M
        self.cells_per_block_y = mesh.ny // M

        cell = np.arange(mesh.nx * mesh.ny)
        bx = (cell % mesh.nx) // self.cells_per_block_x
        by = (cell // mesh.nx) // self.cells_per_block_y
        cell_block = by * M + bx
        self.tri_block = np.repeat(cell_block, 2)

        order = np.argsort(self.tri_block, kind="stable")
        counts = np.bincount(self.tri_block, minlength=M * M)
        self.block_tris = np.split(order, np.cumsum(counts)[:-1])

        self.coarse_mesh = StructuredMesh(M, M)

    @property
    def n_blocks(self):
        return self.M * self.M

    def block_index(self, b):
        return b % self.M, b // self.M

    def block_nodes(self, b):
        """Global fine-node ids of the closed block (edges included)."""
        bx, by = self.block_index(b)
        sx, sy = self.cells_per_block_x, self.cells_per_block_y
        ix = np.arange(bx * sx, (bx + 1) * sx + 1)
        iy = np.arange(by * sy, (by + 1) * sy + 1)
        gx, gy = np.meshgrid(ix, iy, indexing="xy")
        return (gy * (self.mesh.nx + 1) + gx).ravel()

    def block_area(self, b):
        return float(np.sum(self.mesh.areas[self.block_tris[b]]))

    def block_submesh(self, b) -> StructuredMesh:
        """Local triangulation of block b in global coordinates."""
        bx, by = self.block_index(b)
        sx, sy = self.cells_per_block_x, self.cells_per_block_y
        origin = (bx * sx * self.mesh.hx, by * sy * self.mesh.hy)
        extent = (sx * self.mesh.hx, sy * self.mesh.hy)
        return StructuredMesh(sx, sy, origin=origin, extent=extent)


def build_coarse_partition(mesh: StructuredMesh, M: int) -> CoarsePartition:
    return CoarsePartition(mesh, M)


def oversampling_layers(H: float) -> int:
    """Number of padding layers for a coarse size H, ceil(-2*ln(H))."""
    if not 0.0 < H < 1.0:
        raise ValueError(f"coarse size must lie in (0, 1), got H={H}")
    return int(math.ceil(-2.0 * math.log(H)))


class OversampledRegion:
    """A coarse block padded by l layers of neighbors.

    With clip=True (the default) the member blocks form the (2l+1)x(2l+1)
    axis-aligned neighborhood of the center block intersected with the
    block grid; the center block is member p0.  With clip=False the
    window keeps its full size near the domain boundary and the medium is
    continued periodically, so the coefficient lookup map tri_global
    wraps around (and node_global is unavailable).  The region carries
    its own local triangulation in global coordinates together with
    index maps back to the global fine mesh.
    """

    def __init__(self, part: CoarsePartition, block: int, layers: int, clip=True):
        if not 0 <= block < part.n_blocks:
            raise ValueError(f"block id {block} out of range")
        if layers < 0:
            raise ValueError(f"layer count must be nonnegative, got {layers}")
        self.partition = part
        self.center_block = int(block)
        self.layers = int(layers)
        self.clipped = bool(clip)

        M = part.M
        bx, by = part.block_index(block)
        if clip:
            self.bx_lo = max(bx - layers, 0)
            self.bx_hi = min(bx + layers, M - 1)
            self.by_lo = max(by - layers, 0)
            self.by_hi = min(by + layers, M - 1)
        else:
            self.bx_lo, self.bx_hi = bx - layers, bx + layers
            self.by_lo, self.by_hi = by - layers, by + layers
        mbx, mby = np.meshgrid(
            np.arange(self.bx_lo, self.bx_hi + 1),
            np.arange(self.by_lo, self.by_hi + 1),
            indexing="xy",
        )
        self.member_blocks = ((mby % M) * M + (mbx % M)).ravel()
        wx = self.bx_hi - self.bx_lo + 1
        self.p0 = int((by - self.by_lo) * wx + (bx - self.bx_lo))

        mesh = part.mesh
        sx, sy = part.cells_per_block_x, part.cells_per_block_y
        self.cx_lo = self.bx_lo * sx
        self.cy_lo = self.by_lo * sy
        ncx = wx * sx
        ncy = (self.by_hi - self.by_lo + 1) * sy
        origin = (self.cx_lo * mesh.hx, self.cy_lo * mesh.hy)
        self.local = StructuredMesh(
            ncx, ncy, origin=origin, extent=(ncx * mesh.hx, ncy * mesh.hy)
        )

        lc = np.arange(ncx * ncy)
        gx = self.cx_lo + lc % ncx
        gy = self.cy_lo + lc // ncx
        gcell = (gy % mesh.ny) * mesh.nx + (gx % mesh.nx)
        tg = np.empty(2 * ncx * ncy, dtype=np.int64)
        tg[0::2] = 2 * gcell
        tg[1::2] = 2 * gcell + 1
        self.tri_global = tg

        pbx = np.floor_divide(gx, sx) - self.bx_lo
        pby = np.floor_divide(gy, sy) - self.by_lo
        pcell = pby * wx + pbx
        self.tri_member = np.repeat(pcell, 2)

        if clip:
            lix, liy = np.meshgrid(
                np.arange(ncx + 1), np.arange(ncy + 1), indexing="xy"
            )
            self.node_global = (
                (self.cy_lo + liy) * (mesh.nx + 1) + (self.cx_lo + lix)
            ).ravel()
        else:
            self.node_global = None

    @property
    def n_members(self):
        return len(self.member_blocks)

    @property
    def center_tris(self):
        """Local triangle ids of the center block."""
        return np.flatnonzero(self.tri_member == self.p0)

    def center_submesh(self) -> StructuredMesh:
        return self.partition.block_submesh(self.center_block)

    def center_node_map(self):
        """Local node ids of the region that lie on the center block,
        ordered to match :meth:`center_submesh` numbering."""
        part = self.partition
        bx, by = part.block_index(self.center_block)
        sx, sy = part.cells_per_block_x, part.cells_per_block_y
        ox = bx * sx - self.cx_lo
        oy = by * sy - self.cy_lo
        lix, liy = np.meshgrid(np.arange(sx + 1), np.arange(sy + 1), indexing="xy")
        return ((oy + liy) * (self.local.nx + 1) + (ox + lix)).ravel()


def build_oversampled_region(part, block, layers) -> OversampledRegion:
    """Neighborhood window clipped to the domain."""
    return OversampledRegion(part, block, layers, clip=True)


def build_extended_region(part, block, layers) -> OversampledRegion:
    """Full-size window with the medium continued periodically past the
    domain boundary; keeps the cell problems of near-boundary blocks free
    of artificial wall effects."""
    return OversampledRegion(part, block, layers, clip=False)
