"""Effective coarse-block quantities from cell-problem solutions.

Per block the raw tensors are integrals over the center cell R of the
basis families phi_i (average kind) and phi_i^m (gradient kind):

    C[j,i]        = int_R phi_i phi_j
    C_p[p,j,i]    = int_R phi_i phi_j psi_p
    B[j,i]        = int_R k grad phi_i . grad phi_j
    B_m[m,j,i]    = int_R k grad phi_i^m . grad phi_j
    B_mn[m,n,j,i] = int_R k grad phi_i^m . grad phi_j^n

Scaled versions divide by |R| with eps-power factors matching the
magnitude of each family (eps is the coarse block size).  Load moments
are f_j = (1/|R|) int_R f phi_j.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import fem

log = logging.getLogger("mchom.upscale")

__all__ = [
    "EffectiveBlock",
    "effective_block",
    "upscale_all",
    "load_moments",
    "write_effective_blocks",
    "read_effective_blocks",
    "ZeroOrderBlock",
    "zero_order_constants",
    "zero_order_all",
    "zero_order_tensors",
]


@dataclass
class EffectiveBlock:
    """Scaled and raw effective tensors of one coarse block."""

    block: int
    n_continua: int
    eps: float
    rve_area: float
    C: np.ndarray
    C_p: np.ndarray
    B: np.ndarray
    B_m: np.ndarray
    B_mn: np.ndarray
    static_moments: np.ndarray = None
    load_pts: np.ndarray = field(default=None, repr=False)
    load_w: np.ndarray = field(default=None, repr=False)

    @property
    def C_hat(self):
        return self.C / self.rve_area

    @property
    def C_p_hat(self):
        return self.C_p / self.rve_area

    @property
    def B_hat(self):
        return self.eps**2 / self.rve_area * self.B

    @property
    def B_m_hat(self):
        return self.eps / self.rve_area * self.B_m

    @property
    def B_mn_hat(self):
        return self.B_mn / self.rve_area

    def moments(self, f, t=None):
        """Load moments f_j with f evaluated at element barycenters."""
        if self.load_pts is None:
            raise ValueError(
                "block carries tensors only (read from file); load moments "
                "need the element geometry"
            )
        vals = f(self.load_pts) if t is None else f(self.load_pts, t)
        return self.load_w @ np.asarray(vals, dtype=float) / self.rve_area


def effective_block(part, medium, family, eps=None) -> EffectiveBlock:
    """Integrate one block's cell bases into effective tensors."""
    b = family.block
    N = family.n_continua
    rve = part.block_submesh(b)
    gtris = part.block_tris[b]
    kappa = medium.values[gtris]
    labels = medium.labels[gtris]

    K = fem.assemble_stiffness(rve, kappa)
    Mfull = fem.assemble_weighted_mass(rve)

    avg = np.column_stack([family.average(i).rve_values for i in range(1, N + 1)])
    grad = [
        np.column_stack([family.gradient(i, m).rve_values for i in range(1, N + 1)])
        for m in range(2)
    ]

    C = avg.T @ (Mfull @ avg)
    C_p = np.stack(
        [
            avg.T
            @ (fem.assemble_weighted_mass(rve, (labels == p).astype(float)) @ avg)
            for p in range(1, N + 1)
        ]
    )
    Kavg = K @ avg
    B = avg.T @ Kavg
    B_m = np.stack([grad[m].T @ Kavg for m in range(2)]).transpose(0, 2, 1)
    B_mn = np.stack(
        [np.stack([grad[n].T @ (K @ grad[m]) for n in range(2)]) for m in range(2)]
    )

    area = float(rve.areas.sum())
    w = ((rve.areas / 3.0)[:, None] * avg[rve.triangles].sum(axis=1)).T
    return EffectiveBlock(
        block=b,
        n_continua=N,
        eps=part.H if eps is None else eps,
        rve_area=area,
        C=C,
        C_p=C_p,
        B=B,
        B_m=B_m,
        B_mn=B_mn,
        load_pts=part.mesh.barycenters[gtris].copy(),
        load_w=w,
    )


def upscale_all(part, medium, families, eps=None):
    """Effective tensors for every block; families maps block -> CellFamily."""
    out = {
        b: effective_block(part, medium, families[b], eps=eps)
        for b in range(part.n_blocks)
    }
    log.info("upscaled %d blocks", len(out))
    return out


def load_moments(blocks, f, t=None):
    """Per-block load moments stacked in block order, shape (n_blocks, N)."""
    return np.vstack([blocks[b].moments(f, t) for b in sorted(blocks)])


def write_effective_blocks(path, blocks, M, layers, source=None):
    """Columnar text export: one row per block, tensors row-major.

    When a (static) source is given its load moments are stored so a
    coarse solve can run from this file alone.
    """
    ids = sorted(blocks)
    first = blocks[ids[0]]
    N = first.n_continua
    with open(path, "w") as fh:
        fh.write("# mchom effective-blocks v1\n")
        fh.write(
            "# columns: block C[N*N] C_p[N*N*N] B[N*N] B_m[2*N*N] "
            "B_mn[2*2*N*N] F[N]\n"
        )
        fh.write(f"{M} {N} {layers} {first.eps:.17g} {first.rve_area:.17g}\n")
        for b in ids:
            e = blocks[b]
            if source is not None:
                fj = e.moments(source)
            elif e.static_moments is not None:
                fj = e.static_moments
            else:
                fj = np.zeros(N)
            row = np.concatenate(
                [e.C.ravel(), e.C_p.ravel(), e.B.ravel(), e.B_m.ravel(),
                 e.B_mn.ravel(), fj]
            )
            fh.write(" ".join([str(b)] + [f"{x:.17g}" for x in row]) + "\n")


def read_effective_blocks(path):
    """Read the columnar export; blocks carry tensors and static moments."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    head = lines[0].split()
    M, N, layers = int(head[0]), int(head[1]), int(head[2])
    eps, area = float(head[3]), float(head[4])
    sizes = [N * N, N * N * N, N * N, 2 * N * N, 4 * N * N, N]
    out = {}
    for ln in lines[1:]:
        cols = ln.split()
        b = int(cols[0])
        vals = np.array([float(x) for x in cols[1:]])
        if vals.size != sum(sizes):
            raise ValueError(f"malformed effective-block row for block {b}")
        C, C_p, B, B_m, B_mn, fj = np.split(vals, np.cumsum(sizes)[:-1])
        out[b] = EffectiveBlock(
            block=b,
            n_continua=N,
            eps=eps,
            rve_area=area,
            C=C.reshape(N, N),
            C_p=C_p.reshape(N, N, N),
            B=B.reshape(N, N),
            B_m=B_m.reshape(2, N, N),
            B_mn=B_mn.reshape(2, 2, N, N),
            static_moments=fj,
        )
    return out, {"M": M, "N": N, "layers": layers}


@dataclass
class ZeroOrderBlock:
    """Constants of the decoupled reaction-only coarse model of one block.

    With phi_i = c[i] * psi_i / A the model reads
        gamma[i] * d^(alpha_i) U_i + beta[i] * U_i = b_i.
    """

    block: int
    c: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    load: np.ndarray = None


def zero_order_constants(part, medium, block, source=None) -> ZeroOrderBlock:
    """Closed-form constants of one block for a positive scalar field A."""
    gtris = part.block_tris[block]
    A = medium.values[gtris]
    labels = medium.labels[gtris]
    areas = part.mesh.areas[gtris]
    N = medium.n_continua

    c = np.empty(N)
    gamma = np.empty(N)
    beta = np.empty(N)
    load = np.empty(N) if source is not None else None
    if source is not None:
        fvals = np.asarray(source(part.mesh.barycenters[gtris]), dtype=float)
    for j in range(1, N + 1):
        mask = labels == j
        if not mask.any():
            raise ValueError(f"continuum {j} empty in block {block}")
        area_j = areas[mask].sum()
        c[j - 1] = area_j / np.sum(areas[mask] / A[mask])
        gamma[j - 1] = c[j - 1] ** 2 * np.sum(areas[mask] / A[mask] ** 2)
        beta[j - 1] = c[j - 1] * area_j
        if source is not None:
            load[j - 1] = c[j - 1] * np.sum(areas[mask] * fvals[mask] / A[mask])
    return ZeroOrderBlock(block=block, c=c, gamma=gamma, beta=beta, load=load)


def zero_order_all(part, medium, source=None):
    return {
        b: zero_order_constants(part, medium, b, source=source)
        for b in range(part.n_blocks)
    }


def zero_order_tensors(part, medium, block):
    """Full coupling tensors gamma[i,j,k] and beta[i,j] of one block,
    accumulated from explicit indicator products; off-diagonal entries
    vanish because the indicators are disjoint."""
    gtris = part.block_tris[block]
    A = medium.values[gtris]
    labels = medium.labels[gtris]
    areas = part.mesh.areas[gtris]
    N = medium.n_continua
    zb = zero_order_constants(part, medium, block)

    psi = np.stack([(labels == p).astype(float) for p in range(1, N + 1)])
    gamma = np.einsum("ie,je,ke,e->ijk", psi, psi, psi, areas / A**2)
    gamma *= (zb.c[:, None] * zb.c[None, :])[:, :, None]
    beta = np.einsum("ie,je,e->ij", psi, psi, areas / A) * (
        zb.c[:, None] * zb.c[None, :]
    )
    return gamma, beta
