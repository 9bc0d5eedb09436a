"""Constrained cell problems on oversampled regions.

Two basis families are computed per coarse block and continuum i by
minimizing the weighted Dirichlet energy over the oversampled region
with natural boundary conditions:

* average kind: the mean over continuum j of every member cell is
  prescribed to delta_ij;
* gradient kind (direction m): the prescribed means are the centered
  first moments delta_ij * mean_j(x_m - c_mj), with c_mj chosen so the
  moment vanishes on the center cell.

Both kinds share one saddle-point factorization per region, so a whole
family costs a single factorization plus 3N triangular solves.
"""

import hashlib
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fem
from .grid import OversampledRegion, build_extended_region, build_oversampled_region

log = logging.getLogger("mchom.cells")

__all__ = [
    "DegenerateContinuumError",
    "CellBasis",
    "CellFamily",
    "continuum_areas",
    "centroid",
    "centroid_table",
    "solve_cell_family",
    "solve_average_cell",
    "solve_gradient_cell",
    "solve_all_blocks",
]


class DegenerateContinuumError(RuntimeError):
    """A continuum is absent from some member cell, so the constraint
    set of the cell problem is rank deficient by construction."""


@dataclass
class CellBasis:
    """One cell-problem solution restricted to the center cell.

    values covers the full oversampled region only when the family was
    solved with keep_region_values=True; rve_values always holds the
    restriction to the center cell in its local node numbering.
    multipliers[p, j] is the Lagrange multiplier of the (cell p,
    continuum j) constraint in the weak identity of the minimizer.
    """

    block: int
    continuum: int
    kind: str
    direction: object
    rve_values: np.ndarray
    multipliers: np.ndarray
    constraint_residual: float
    energy: float
    values: object = None


class CellFamily:
    """All cell bases of one block: N average + 2N gradient solutions."""

    def __init__(self, block, n_continua, bases, centroids):
        self.block = block
        self.n_continua = n_continua
        self.bases = bases
        self.centroids = centroids

    def average(self, i) -> CellBasis:
        return self.bases[("average", i, None)]

    def gradient(self, i, m) -> CellBasis:
        return self.bases[("gradient", i, m)]

    def all_bases(self):
        return list(self.bases.values())


def continuum_areas(region: OversampledRegion, medium):
    """Area of each continuum within each member cell, shape (P, N)."""
    areas = region.local.areas
    labels = medium.labels[region.tri_global]
    N = medium.n_continua
    flat = region.tri_member * N + (labels - 1)
    return np.bincount(flat, weights=areas, minlength=region.n_members * N).reshape(
        region.n_members, N
    )


def centroid(region: OversampledRegion, medium, j: int, m: int) -> float:
    """Coordinate c_mj of continuum j's centroid in the center cell."""
    table = centroid_table(region, medium)
    return float(table[j - 1, m])


def centroid_table(region: OversampledRegion, medium):
    """Per-continuum centroids of the center cell, shape (N, 2)."""
    return block_centroids(region.partition, medium, region.center_block)


def block_centroids(part, medium, block):
    gtris = part.block_tris[block]
    labels = medium.labels[gtris]
    areas = part.mesh.areas[gtris]
    bary = part.mesh.barycenters[gtris]
    N = medium.n_continua
    table = np.empty((N, 2))
    for j in range(1, N + 1):
        mask = labels == j
        a = areas[mask].sum()
        if a <= 0:
            raise DegenerateContinuumError(
                f"continuum {j} empty in the center cell of block {block}"
            )
        table[j - 1] = (areas[mask, None] * bary[mask]).sum(axis=0) / a
    return table


def _constraint_matrix(region, medium):
    """Row (p*N + j-1): normalized average of the trial function over
    continuum j of member cell p."""
    local = region.local
    labels = medium.labels[region.tri_global]
    N = medium.n_continua
    areas_pj = continuum_areas(region, medium)
    if np.any(areas_pj <= 0):
        p, j = np.argwhere(areas_pj <= 0)[0]
        raise DegenerateContinuumError(
            f"continuum {j + 1} empty in member cell p={p} of block "
            f"{region.center_block} (layers={region.layers})"
        )
    rows = np.repeat(region.tri_member * N + (labels - 1), 3)
    cols = local.triangles.ravel()
    vals = np.repeat(local.areas / 3.0, 3)
    C = sp.coo_matrix(
        (vals, (rows, cols)), shape=(region.n_members * N, local.n_nodes)
    ).tocsr()
    C.sum_duplicates()
    scale = sp.diags(1.0 / areas_pj.ravel())
    return scale @ C, areas_pj


def _moment_targets(region, medium, centroids):
    """Normalized centered first moments per (p, j, m), shape (P, N, 2)."""
    local = region.local
    labels = medium.labels[region.tri_global]
    N = medium.n_continua
    areas_pj = continuum_areas(region, medium)
    out = np.empty((region.n_members, N, 2))
    for m in range(2):
        w = local.areas * local.barycenters[:, m]
        flat = region.tri_member * N + (labels - 1)
        s = np.bincount(flat, weights=w, minlength=region.n_members * N).reshape(
            region.n_members, N
        )
        out[:, :, m] = s / areas_pj - centroids[None, :, m]
    return out


def _rhs_columns(region, medium, centroids, n_continua):
    """Constraint targets for the 3N bases, as columns keyed in order
    [avg_1..avg_N, grad_{1,x}, grad_{1,y}, ..., grad_{N,y}]."""
    P, N = region.n_members, n_continua
    moments = _moment_targets(region, medium, centroids)
    cols = []
    keys = []
    for i in range(1, N + 1):
        g = np.zeros((P, N))
        g[:, i - 1] = 1.0
        cols.append(g.ravel())
        keys.append(("average", i, None))
    for i in range(1, N + 1):
        for m in range(2):
            g = np.zeros((P, N))
            g[:, i - 1] = moments[:, i - 1, m]
            cols.append(g.ravel())
            keys.append(("gradient", i, m))
    return np.column_stack(cols), keys


def solve_cell_family(
    region: OversampledRegion, medium, keep_region_values=False
) -> CellFamily:
    """Solve every cell problem of one block with a shared factorization."""
    N = medium.n_continua
    kappa = medium.values[region.tri_global]
    A = fem.assemble_stiffness(region.local, kappa)
    C, _ = _constraint_matrix(region, medium)
    centroids = centroid_table(region, medium)
    G, keys = _rhs_columns(region, medium, centroids, N)

    labels = [
        f"(block {region.center_block}, cell p={p}, continuum {j + 1})"
        for p in range(region.n_members)
        for j in range(N)
    ]
    try:
        fac = fem.SaddleFactorization(A, C, constraint_labels=labels)
        U, L = fac.solve(G)
    except fem.ConstraintDegeneracyError as exc:
        raise DegenerateContinuumError(str(exc)) from exc

    rve_nodes = region.center_node_map()
    feas = np.abs(C @ U - G).max(axis=0)
    energy = np.einsum("nk,nk->k", U, A @ U)

    bases = {}
    for col, key in enumerate(keys):
        kind, i, m = key
        bases[key] = CellBasis(
            block=region.center_block,
            continuum=i,
            kind=kind,
            direction=m,
            rve_values=U[rve_nodes, col].copy(),
            multipliers=-L[:, col].reshape(region.n_members, N).copy(),
            constraint_residual=float(feas[col]),
            energy=float(energy[col]),
            values=U[:, col].copy() if keep_region_values else None,
        )
    return CellFamily(region.center_block, N, bases, centroids)


def solve_average_cell(region, medium, i, keep_region_values=True) -> CellBasis:
    return solve_cell_family(region, medium, keep_region_values).average(i)


def solve_gradient_cell(region, medium, i, m, keep_region_values=True) -> CellBasis:
    return solve_cell_family(region, medium, keep_region_values).gradient(i, m)


def _family_fingerprint(region, medium):
    """Content hash identifying the local problem up to translation;
    translated copies have identical solutions in local numbering."""
    h = hashlib.sha256()
    part = region.partition
    bx, by = part.block_index(region.center_block)
    meta = np.array(
        [
            region.local.nx,
            region.local.ny,
            part.cells_per_block_x,
            part.cells_per_block_y,
            bx * part.cells_per_block_x - region.cx_lo,
            by * part.cells_per_block_y - region.cy_lo,
            medium.n_continua,
        ],
        dtype=np.int64,
    )
    h.update(meta.tobytes())
    h.update(medium.labels[region.tri_global].tobytes())
    h.update(medium.values[region.tri_global].tobytes())
    return h.digest()


_POOL_CTX = {}


def _pool_init(part, medium, layers, builder):
    _POOL_CTX["part"] = part
    _POOL_CTX["medium"] = medium
    _POOL_CTX["layers"] = layers
    _POOL_CTX["builder"] = builder


def _pool_solve(block):
    region = _POOL_CTX["builder"](_POOL_CTX["part"], block, _POOL_CTX["layers"])
    return block, solve_cell_family(region, _POOL_CTX["medium"])


def _rekey_family(family, block, part, medium):
    bases = {
        key: CellBasis(
            block=block,
            continuum=b.continuum,
            kind=b.kind,
            direction=b.direction,
            rve_values=b.rve_values,
            multipliers=b.multipliers,
            constraint_residual=b.constraint_residual,
            energy=b.energy,
        )
        for key, b in family.bases.items()
    }
    return CellFamily(block, family.n_continua, bases,
                      block_centroids(part, medium, block))


def solve_all_blocks(
    part, medium, layers, jobs=1, reuse_identical=True, boundary="extend"
):
    """Solve the cell families of every coarse block.

    boundary="extend" (default) keeps full-size windows near the domain
    boundary by continuing the medium periodically; "clip" restricts the
    windows to the domain instead, which flattens the gradient bases of
    wall-adjacent blocks.  Identical local problems (periodic media make
    translated regions bit-identical) are solved once and shared when
    reuse_identical is set; jobs > 1 distributes the distinct solves
    over processes.
    """
    if boundary not in ("extend", "clip"):
        raise ValueError(f"boundary must be 'extend' or 'clip', got {boundary!r}")
    builder = build_extended_region if boundary == "extend" else build_oversampled_region

    blocks = np.arange(part.n_blocks)
    key_of = {}
    rep_blocks = []
    seen = set()
    for b in blocks:
        if reuse_identical:
            region = builder(part, b, layers)
            key = _family_fingerprint(region, medium)
        else:
            key = int(b)
        key_of[int(b)] = key
        if key not in seen:
            seen.add(key)
            rep_blocks.append(int(b))

    log.info(
        "cell problems: %d blocks, %d distinct, jobs=%d",
        len(blocks),
        len(rep_blocks),
        jobs,
    )
    solved = {}
    if jobs > 1 and len(rep_blocks) > 1:
        workers = min(jobs, os.cpu_count() or 1, len(rep_blocks))
        with ProcessPoolExecutor(
            max_workers=workers,
            initializer=_pool_init,
            initargs=(part, medium, layers, builder),
        ) as pool:
            for block, family in pool.map(_pool_solve, rep_blocks, chunksize=4):
                solved[key_of[block]] = family
    else:
        for block in rep_blocks:
            solved[key_of[block]] = solve_cell_family(builder(part, block, layers), medium)
            if (block + 1) % 50 == 0:
                log.debug("solved cells for %d blocks", block + 1)

    return {
        int(b): (
            solved[key_of[int(b)]]
            if solved[key_of[int(b)]].block == b
            else _rekey_family(solved[key_of[int(b)]], int(b), part, medium)
        )
        for b in blocks
    }
