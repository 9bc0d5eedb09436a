"""Reference transient solver on the fine triangulation.

One linear solve per step: the stiffness acts on the midpoint average
(u^n + u^{n-1})/2 and the fractional derivative couples per-continuum
weighted mass matrices when the orders differ between continua.
"""

import logging

import numpy as np
import scipy.sparse.linalg as spla

from . import fem
from .caputo import CaputoScheme, FractionalHistory, history_term, normalize_orders

log = logging.getLogger("mchom.fine")

__all__ = ["FineTrajectory", "run_fine", "snapshot_steps"]


class FineTrajectory:
    """Nodal snapshots of a transient run keyed by time."""

    def __init__(self, mesh, tau, orders):
        self.mesh = mesh
        self.tau = tau
        self.orders = tuple(orders)
        self.times = []
        self.fields = {}

    def store(self, t, u):
        t = round(float(t), 12)
        self.times.append(t)
        self.fields[t] = u.copy()

    def __getitem__(self, t):
        return self.fields[round(float(t), 12)]


def snapshot_steps(snapshots, tau, n_steps):
    """Map requested times to step indices, rejecting off-grid requests."""
    steps = {}
    for t in snapshots:
        k = int(round(t / tau))
        if k < 0 or k > n_steps or abs(k * tau - t) > 1e-9:
            raise ValueError(
                f"snapshot time {t} is not a multiple of tau={tau} within [0, T]"
            )
        steps[k] = t
    return steps


def run_fine(
    mesh,
    medium,
    *,
    orders,
    tau,
    n_steps,
    source,
    u0=None,
    velocity=None,
    bc="dirichlet0",
    snapshots=(),
):
    """March the transient problem and return the stored snapshots.

    orders: one derivative order, or one per continuum (equal values
    collapse to the single-order path).  source is f(points, t) at element
    barycenters; u0 and velocity are nodal-coordinate callables or None
    for zero.  bc is "dirichlet0" or "neumann0".
    """
    if bc not in ("dirichlet0", "neumann0"):
        raise ValueError(f"unsupported boundary condition {bc!r}")
    orders = normalize_orders(orders, medium.n_continua)

    n = mesh.n_nodes
    if bc == "dirichlet0":
        keep = np.setdiff1d(np.arange(n), mesh.boundary_nodes)
    else:
        keep = np.arange(n)

    K = fem.assemble_stiffness(mesh, medium.values)[keep][:, keep]
    if len(orders) == 1:
        masses = [fem.assemble_weighted_mass(mesh)[keep][:, keep]]
    else:
        masses = [
            fem.assemble_weighted_mass(mesh, medium.characteristic(p))[keep][:, keep]
            for p in range(1, medium.n_continua + 1)
        ]

    psi = np.zeros(n) if velocity is None else np.asarray(velocity(mesh.nodes), float)
    schemes = [
        CaputoScheme.create(alpha, tau, n_steps, psi=psi[keep]) for alpha in orders
    ]

    lhs = 0.5 * K
    rhs_mat = -0.5 * K
    for s, M in zip(schemes, masses):
        c = s.sigma * s.a[0] / tau
        lhs = lhs + c * M
        rhs_mat = rhs_mat + c * M
    lu = spla.splu(lhs.tocsc())

    u_full = np.zeros(n) if u0 is None else np.asarray(u0(mesh.nodes), float)
    if bc == "dirichlet0":
        u_full[mesh.boundary_nodes] = 0.0
    u = u_full[keep]

    traj = FineTrajectory(mesh, tau, orders)
    steps = snapshot_steps(snapshots, tau, n_steps)
    traj.store(0.0, _embed(u, keep, n))

    history = FractionalHistory()
    for step in range(1, n_steps + 1):
        t_mid = (step - 0.5) * tau
        rhs = rhs_mat @ u
        for s, M in zip(schemes, masses):
            rhs = rhs + s.sigma * (M @ history_term(s, history, step))
        rhs = rhs + fem.assemble_load(mesh, source, t=t_mid)[keep]
        u_new = lu.solve(rhs)
        history.push((u_new - u) / tau)
        u = u_new
        if step in steps:
            traj.store(steps[step], _embed(u, keep, n))
        if step % 10 == 0:
            log.debug("fine step %d/%d", step, n_steps)
    return traj


def _embed(u, keep, n):
    full = np.zeros(n)
    full[keep] = u
    return full
