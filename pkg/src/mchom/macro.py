"""Coarse multicontinuum solvers.

The unknowns are N nodal fields on the coarse triangulation stacked as
one vector (continuum i occupies the slice i*Nc:(i+1)*Nc).  Per coarse
block the operators use the block's effective tensors as elementwise
constants:

* mass blocks from C_hat (or per-order C_p_hat when orders differ),
* diffusion from the anisotropic, continuum-coupling B_mn_hat,
* reaction (continuum exchange) from B_hat / eps^2,
* load from the per-block moments f_j.

Time stepping reuses the fractional kernel of the fine solver.
"""

import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .caputo import CaputoScheme, FractionalHistory, history_term
from .caputo import normalize_orders
from .fine import snapshot_steps

log = logging.getLogger("mchom.macro")

__all__ = [
    "MacroOperators",
    "MacroTrajectory",
    "assemble_macro_operators",
    "macro_initial_conditions",
    "run_macro",
    "run_zero_order",
]


class MacroTrajectory:
    """Per-continuum coarse nodal snapshots keyed by time."""

    def __init__(self, part, n_continua, tau, orders):
        self.partition = part
        self.n_continua = n_continua
        self.tau = tau
        self.orders = tuple(orders)
        self.times = []
        self.fields = {}

    def store(self, t, U):
        t = round(float(t), 12)
        self.times.append(t)
        self.fields[t] = U.copy()

    def __getitem__(self, t):
        return self.fields[round(float(t), 12)]


class MacroOperators:
    """Assembled coarse operators plus boundary bookkeeping."""

    def __init__(self, part, n_continua, masses, stiffness, load_map, keep,
                 load_fine=None, load_points=None):
        self.partition = part
        self.n_continua = n_continua
        self.masses = masses
        self.stiffness = stiffness
        self.load_map = load_map
        self.keep = keep
        self.load_fine = load_fine
        self.load_points = load_points
        self.n_dofs = n_continua * part.coarse_mesh.n_nodes

    def load_vector(self, moments):
        """Blockwise-constant load from per-block moments, shape (nb, N)."""
        return self.load_map @ np.asarray(moments, dtype=float).T.ravel()

    def load_vector_galerkin(self, f, t=None):
        """Consistent load of f against the basis-weighted coarse test
        functions, integrated element by element on the fine grid."""
        if self.load_fine is None:
            raise ValueError("operators were assembled without fine load data")
        vals = f(self.load_points) if t is None else f(self.load_points, t)
        return self.load_fine @ np.asarray(vals, dtype=float)


def assemble_macro_operators(part, eff, bc, orders) -> MacroOperators:
    """Build mass (per order if mixed), diffusion+reaction, and load maps."""
    if bc not in ("dirichlet0", "neumann0"):
        raise ValueError(f"unsupported boundary condition {bc!r}")
    cm = part.coarse_mesh
    nb = part.n_blocks
    first = eff[0]
    N = first.n_continua
    orders = normalize_orders(orders, N)
    Nc = cm.n_nodes
    ndof = N * Nc

    g, area = fem.p1_gradients(cm.nodes, cm.triangles)
    local_mass = area[:, None, None] * fem._LOCAL_MASS[None, :, :]
    tri_block = np.repeat(np.arange(nb), 2)  # coarse tri 2b, 2b+1 sit in block b

    for b in range(nb):
        e = eff[b]
        if _tensor_asym(e.B_hat) > 1e-10 or _tensor_asym_mn(e.B_mn_hat) > 1e-10:
            raise ValueError(f"effective tensors of block {b} are not symmetric")

    Chat = np.stack([eff[b].C_hat for b in range(nb)])
    Cphat = np.stack([eff[b].C_p_hat for b in range(nb)])
    Bhat = np.stack([eff[b].B_hat for b in range(nb)])
    Bmnhat = np.stack([eff[b].B_mn_hat for b in range(nb)])
    eps = first.eps

    def scatter(blockwise_local):
        """blockwise_local: (T, N, N, 3, 3) triangle contributions."""
        tri = cm.triangles
        rows = []
        cols = []
        vals = []
        for j in range(N):
            for i in range(N):
                r = (j * Nc + np.repeat(tri, 3, axis=1)).ravel()
                c = (i * Nc + np.tile(tri, (1, 3))).ravel()
                rows.append(r)
                cols.append(c)
                vals.append(blockwise_local[:, j, i].ravel())
        A = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(ndof, ndof),
        ).tocsr()
        A.sum_duplicates()
        return A

    def mass_from(tensor_per_block):
        t = tensor_per_block[tri_block]  # (T, N, N)
        return scatter(t[:, :, :, None, None] * local_mass[:, None, None, :, :])

    # diffusion: area * B_mn_hat[m,n,j,i] * d_m(trial basis) * d_n(test basis)
    diff_local = np.einsum(
        "t,tmnji,tbm,tan->tjiab", area, Bmnhat[tri_block], g, g
    )
    react_local = (
        Bhat[tri_block][:, :, :, None, None] / eps**2 * local_mass[:, None, None]
    )
    stiffness = scatter(diff_local + react_local)

    if len(orders) == 1:
        masses = [mass_from(Chat)]
    else:
        masses = [mass_from(Cphat[:, p]) for p in range(N)]

    # load map: ndof x (N*nb); column (j, b) spreads f_j(b) over block b's nodes
    tri = cm.triangles
    lr, lc, lv = [], [], []
    for j in range(N):
        lr.append((j * Nc + tri.ravel()))
        lc.append(np.repeat(j * nb + tri_block, 3))
        lv.append(np.repeat(area / 3.0, 3))
    load_map = sp.coo_matrix(
        (np.concatenate(lv), (np.concatenate(lr), np.concatenate(lc))),
        shape=(ndof, N * nb),
    ).tocsr()

    load_fine, load_points = _fine_load_map(part, eff, N, Nc)

    if bc == "dirichlet0":
        bd = cm.boundary_nodes
        drop = np.concatenate([i * Nc + bd for i in range(N)])
        keep = np.setdiff1d(np.arange(ndof), drop)
    else:
        keep = np.arange(ndof)
    return MacroOperators(
        part, N, masses, stiffness, load_map, keep, load_fine, load_points
    )


def _fine_load_map(part, eff, N, Nc):
    """Sparse map from f values at fine barycenters to the coarse load.

    Entry ((j, a), e) = area_e * mean(phi_j on e) * V_a(barycenter_e),
    so the homogeneous case (phi_j == 1) reproduces the plain coarse
    load assembled with fine-element quadrature.  Unavailable for
    blocks read from file (no element geometry).
    """
    if any(eff[b].load_pts is None for b in eff):
        return None, None
    M = part.M
    H = part.H
    rows, cols, vals = [], [], []
    pts_all = []
    offset = 0
    for b in range(part.n_blocks):
        e = eff[b]
        pts = e.load_pts
        ne = len(pts)
        bx, by = part.block_index(b)
        u = pts[:, 0] / H - bx
        v = pts[:, 1] / H - by
        bl = by * (M + 1) + bx
        lower = u >= v
        verts = np.where(
            lower[:, None],
            np.array([[bl, bl + 1, bl + M + 2]]),
            np.array([[bl, bl + M + 2, bl + M + 1]]),
        )
        bary = np.where(
            lower[:, None],
            np.column_stack([1.0 - u, u - v, v]),
            np.column_stack([1.0 - v, u, v - u]),
        )
        for j in range(N):
            rows.append((j * Nc + verts).ravel())
            cols.append(np.repeat(offset + np.arange(ne), 3))
            vals.append((e.load_w[j][:, None] * bary).ravel())
        pts_all.append(pts)
        offset += ne
    load_fine = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(N * Nc, offset),
    ).tocsr()
    return load_fine, np.vstack(pts_all)


def _tensor_asym(T):
    top = np.abs(T - T.T).max()
    ref = np.abs(T).max()
    return top / ref if ref > 0 else top


def _tensor_asym_mn(Tmn):
    # bilinear-form symmetry couples the direction and continuum swaps
    top = np.abs(Tmn - Tmn.transpose(1, 0, 3, 2)).max()
    ref = np.abs(Tmn).max()
    return top / ref if ref > 0 else top


def macro_initial_conditions(part, medium, u0_fine=None, psi_fine=None):
    """Continuum-wise coarse nodal fields from fine initial data.

    Block values are masked cell averages; nodal values average the
    adjacent blocks of each coarse node.
    """
    from .metrics import block_continuum_average

    cm = part.coarse_mesh
    N = medium.n_continua
    Nc = cm.n_nodes
    out = []
    for fld in (u0_fine, psi_fine):
        U = np.zeros((N, Nc))
        if fld is not None:
            for i in range(1, N + 1):
                avg, valid = block_continuum_average(fld, part, medium, i)
                if not valid.all():
                    raise ValueError(
                        f"continuum {i} missing from some block; cannot average"
                    )
                U[i - 1] = _blocks_to_nodes(part, avg)
        out.append(U)
    return out[0], out[1]


def _blocks_to_nodes(part, block_values):
    """Average the up-to-four blocks adjacent to each coarse node."""
    M = part.M
    vals = np.asarray(block_values, dtype=float).reshape(M, M)  # [by, bx]
    acc = np.zeros((M + 1, M + 1))
    cnt = np.zeros((M + 1, M + 1))
    for dy in (0, 1):
        for dx in (0, 1):
            acc[dy : dy + M, dx : dx + M] += vals
            cnt[dy : dy + M, dx : dx + M] += 1.0
    return (acc / cnt).ravel()


def run_macro(
    part,
    eff,
    *,
    orders,
    tau,
    n_steps,
    source=None,
    moments=None,
    bc="dirichlet0",
    snapshots=(),
    U0=None,
    Psi0=None,
) -> MacroTrajectory:
    """March the coarse model and snapshot the stacked continuum fields.

    The load comes from exactly one of: source, a callable f(points, t)
    integrated consistently against the basis-weighted test functions;
    or moments, per-block values of shape (n_blocks, N) (or a callable
    t -> that shape) spread blockwise-constant.  U0 and Psi0 are (N, Nc)
    initial value and velocity fields (zero when omitted).
    """
    if (source is None) == (moments is None):
        raise ValueError("pass exactly one of source= or moments=")
    first = eff[0]
    N = first.n_continua
    orders = normalize_orders(orders, N)
    ops = assemble_macro_operators(part, eff, bc, orders)
    keep = ops.keep
    Nc = part.coarse_mesh.n_nodes

    psi_full = np.zeros(ops.n_dofs) if Psi0 is None else Psi0.ravel()
    schemes = [
        CaputoScheme.create(a, tau, n_steps, psi=psi_full[keep]) for a in orders
    ]
    masses = [M[keep][:, keep] for M in ops.masses]
    K = ops.stiffness[keep][:, keep]

    lhs = 0.5 * K
    rhs_mat = -0.5 * K
    for s, M in zip(schemes, masses):
        c = s.sigma * s.a[0] / tau
        lhs = lhs + c * M
        rhs_mat = rhs_mat + c * M
    lu = spla.splu(lhs.tocsc())

    if source is not None:
        load = lambda t: ops.load_vector_galerkin(source, t)
    elif callable(moments):
        load = lambda t: ops.load_vector(moments(t))
    else:
        F_static = ops.load_vector(moments)
        load = lambda t: F_static

    u_full = np.zeros(ops.n_dofs) if U0 is None else U0.ravel().astype(float).copy()
    if bc == "dirichlet0":
        mask = np.ones(ops.n_dofs, dtype=bool)
        mask[keep] = False
        u_full[mask] = 0.0
    u = u_full[keep]

    traj = MacroTrajectory(part, N, tau, orders)
    steps = snapshot_steps(snapshots, tau, n_steps)
    traj.store(0.0, _embed_macro(u, keep, N, Nc))

    history = FractionalHistory()
    for step in range(1, n_steps + 1):
        t_mid = (step - 0.5) * tau
        rhs = rhs_mat @ u
        for s, M in zip(schemes, masses):
            rhs = rhs + s.sigma * (M @ history_term(s, history, step))
        rhs = rhs + load(t_mid)[keep]
        u_new = lu.solve(rhs)
        history.push((u_new - u) / tau)
        u = u_new
        if step in steps:
            traj.store(steps[step], _embed_macro(u, keep, N, Nc))
    return traj


def _embed_macro(u, keep, N, Nc):
    full = np.zeros(N * Nc)
    full[keep] = u
    return full.reshape(N, Nc)


def run_zero_order(zero_blocks, *, orders, tau, n_steps, u0=None, v0=None):
    """March the decoupled per-block reaction equations.

    Returns an array of shape (n_steps + 1, n_blocks, N); block b,
    continuum i obeys gamma*d^(alpha_i) U + beta*U = load with the
    block's constants.
    """
    from .caputo import solve_scalar_ode

    ids = sorted(zero_blocks)
    nb = len(ids)
    N = len(zero_blocks[ids[0]].gamma)
    orders = normalize_orders(orders, N)
    if len(orders) == 1:
        orders = orders * N

    gamma = np.array([zero_blocks[b].gamma for b in ids])
    beta = np.array([zero_blocks[b].beta for b in ids])
    load = np.array([zero_blocks[b].load for b in ids])
    if np.any([zero_blocks[b].load is None for b in ids]):
        raise ValueError("zero-order blocks need load moments; pass a source")

    out = np.empty((n_steps + 1, nb, N))
    for i in range(N):
        u0_i = np.zeros(nb) if u0 is None else u0[:, i]
        v0_i = np.zeros(nb) if v0 is None else v0[:, i]
        g = gamma[:, i]
        traj = solve_scalar_ode(
            [(1.0, orders[i])],
            beta[:, i] / g,
            lambda t, i=i, g=g: load[:, i] / g,
            u0_i,
            v0_i,
            tau,
            n_steps,
        )
        out[:, :, i] = traj
    return out
