"""P1 finite element assembly and sparse linear solvers.

Assembled operators are scipy CSR matrices over the full node set of the
given triangulation; element subsets restrict the integration domain, not
the matrix dimension.  Solvers are direct (SuperLU) with residual checks.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SolveError",
    "ConstraintDegeneracyError",
    "p1_gradients",
    "assemble_stiffness",
    "assemble_weighted_mass",
    "assemble_load",
    "apply_dirichlet",
    "solve_spd",
    "solve_saddle",
    "max_asymmetry",
]

_LOCAL_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


class SolveError(RuntimeError):
    """A linear solve failed to meet its residual contract."""


class ConstraintDegeneracyError(RuntimeError):
    """Equality constraints are rank deficient or inconsistent."""


def p1_gradients(nodes, triangles):
    """Constant gradients of the three nodal basis functions per triangle.

    Returns (grads, areas) with grads of shape (T, 3, 2).
    """
    v = nodes[triangles]
    d = (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1]) - (
        v[:, 2, 0] - v[:, 0, 0]
    ) * (v[:, 1, 1] - v[:, 0, 1])
    if np.any(d <= 0):
        raise ValueError("triangulation contains non-positively oriented triangles")
    g = np.empty((len(triangles), 3, 2))
    g[:, 0, 0] = v[:, 1, 1] - v[:, 2, 1]
    g[:, 0, 1] = v[:, 2, 0] - v[:, 1, 0]
    g[:, 1, 0] = v[:, 2, 1] - v[:, 0, 1]
    g[:, 1, 1] = v[:, 0, 0] - v[:, 2, 0]
    g[:, 2, 0] = v[:, 0, 1] - v[:, 1, 1]
    g[:, 2, 1] = v[:, 1, 0] - v[:, 0, 0]
    g /= d[:, None, None]
    return g, 0.5 * d


def _scatter(local, triangles, n_nodes):
    rows = np.repeat(triangles, 3, axis=1).ravel()
    cols = np.tile(triangles, (1, 3)).ravel()
    mat = sp.coo_matrix(
        (local.ravel(), (rows, cols)), shape=(n_nodes, n_nodes)
    ).tocsr()
    mat.sum_duplicates()
    return mat


def _select(mesh, values, tris):
    values = np.asarray(values, dtype=float)
    if values.ndim == 0:
        return np.full(len(tris), float(values))
    if values.shape != (mesh.n_triangles,):
        raise ValueError("per-element data must match the mesh triangle count")
    return values[tris]


def _tri_subset(mesh, tris):
    if tris is None:
        return np.arange(mesh.n_triangles)
    tris = np.asarray(tris, dtype=np.int64)
    if tris.size == 0:
        raise ValueError("empty element subset")
    return tris


def assemble_stiffness(mesh, coefficient, tris=None):
    """Matrix of the weighted gradient form over the chosen elements.

    The coefficient is per-element (or scalar) and must be positive on
    the subset.  The result is symmetric positive semidefinite with the
    constants in its kernel when no boundary conditions are applied.
    """
    tris = _tri_subset(mesh, tris)
    kap = _select(mesh, coefficient, tris)
    if np.any(kap <= 0):
        raise ValueError("stiffness coefficient must be positive on the subset")
    tri = mesh.triangles[tris]
    g, area = p1_gradients(mesh.nodes, tri)
    local = np.einsum("t,tid,tjd->tij", kap * area, g, g)
    return _scatter(local, tri, mesh.n_nodes)


def assemble_weighted_mass(mesh, weight=None, tris=None):
    """Matrix of the weighted L2 form; weight per-element, nonnegative."""
    tris = _tri_subset(mesh, tris)
    w = np.ones(len(tris)) if weight is None else _select(mesh, weight, tris)
    if np.any(w < 0):
        raise ValueError("mass weight must be nonnegative")
    tri = mesh.triangles[tris]
    scale = w * mesh.areas[tris]
    local = scale[:, None, None] * _LOCAL_MASS[None, :, :]
    return _scatter(local, tri, mesh.n_nodes)


def assemble_load(mesh, f, tris=None, t=None):
    """Right-hand-side vector of f against the nodal basis.

    f is a callable on point arrays (optionally with a time argument) or a
    per-element value array; elements are integrated with the one-point
    barycenter rule.
    """
    tris = _tri_subset(mesh, tris)
    if callable(f):
        pts = mesh.barycenters[tris]
        vals = f(pts) if t is None else f(pts, t)
        vals = np.asarray(vals, dtype=float)
    else:
        vals = _select(mesh, f, tris)
    contrib = vals * mesh.areas[tris] / 3.0
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, mesh.triangles[tris].ravel(), np.repeat(contrib, 3))
    return out


def apply_dirichlet(A, b, nodes, values=0.0):
    """Eliminate Dirichlet rows/columns symmetrically.

    Returns modified copies (A', b') of the same size with unit diagonal
    on the constrained nodes; the solve of the modified system reproduces
    the prescribed values exactly.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    vals = np.broadcast_to(np.asarray(values, dtype=float), nodes.shape)
    A = A.tocsr(copy=True)
    b = np.array(b, dtype=float, copy=True)

    lift = np.zeros(A.shape[0])
    lift[nodes] = vals
    b -= A @ lift
    b[nodes] = vals

    mask = np.zeros(A.shape[0], dtype=bool)
    mask[nodes] = True
    coo = A.tocoo()
    keep = ~(mask[coo.row] | mask[coo.col])
    diag = sp.coo_matrix(
        (np.ones(len(nodes)), (nodes, nodes)), shape=A.shape
    )
    A2 = sp.coo_matrix(
        (coo.data[keep], (coo.row[keep], coo.col[keep])), shape=A.shape
    )
    return (A2 + diag).tocsr(), b


def _check_residual(A, x, b, tol, what):
    r = A @ x - b
    scale = np.linalg.norm(b)
    rel = np.linalg.norm(r) / scale if scale > 0 else np.linalg.norm(r)
    if not np.isfinite(rel) or rel > tol:
        raise SolveError(f"{what} residual {rel:.3e} exceeds {tol:.1e}")


def solve_spd(A, b, tol=1e-10):
    """Direct solve of a symmetric positive definite sparse system."""
    b = np.asarray(b, dtype=float)
    try:
        lu = spla.splu(A.tocsc())
        x = lu.solve(b)
        x += lu.solve(b - A @ x)
    except RuntimeError as exc:
        raise SolveError(f"factorization failed: {exc}") from exc
    _check_residual(A, x, b, tol, "SPD solve")
    return x


class SaddleFactorization:
    """Factorization of [[A, C^T], [C, 0]] reusable over right-hand sides."""

    def __init__(self, A, C, constraint_labels=None):
        C = sp.csr_matrix(C)
        self.n = A.shape[0]
        self.m = C.shape[0]
        self.A = A.tocsr()
        self.C = C
        self.labels = constraint_labels
        row_norm = np.abs(C).sum(axis=1).A1 if hasattr(np.abs(C).sum(axis=1), "A1") \
            else np.asarray(np.abs(C).sum(axis=1)).ravel()
        if np.any(row_norm == 0):
            raise ConstraintDegeneracyError(
                f"zero constraint row: {self._name(int(np.argmin(row_norm)))}"
            )
        K = sp.bmat([[self.A, C.T], [C, None]], format="csc")
        try:
            self.lu = spla.splu(K)
        except RuntimeError as exc:
            raise ConstraintDegeneracyError(
                f"saddle factorization failed (rank-deficient constraints?): {exc}"
            ) from exc
        self.K = K

    def _name(self, i):
        if self.labels is not None:
            return self.labels[i]
        return f"row {i}"

    def solve(self, g, ctol=1e-10, stol=1e-8):
        """Minimize the A-energy subject to C u = g; returns (u, lambda).

        g may hold several right-hand sides as columns.
        """
        g = np.asarray(g, dtype=float)
        single = g.ndim == 1
        G = g[:, None] if single else g
        B = np.vstack([np.zeros((self.n, G.shape[1])), G])
        X = self.lu.solve(B)
        X += self.lu.solve(B - self.K @ X)
        U, L = X[: self.n], X[self.n :]

        feas = self.C @ U - G
        bad = np.abs(feas).max(axis=1)
        lim = ctol * max(1.0, np.abs(G).max(initial=0.0))
        if not np.all(np.isfinite(X)):
            raise ConstraintDegeneracyError(
                "saddle solve produced non-finite values (degenerate constraints?)"
            )
        if bad.max(initial=0.0) > lim:
            i = int(np.argmax(bad))
            raise SolveError(
                f"constraint residual {bad[i]:.3e} exceeds {lim:.1e} "
                f"at {self._name(i)}"
            )
        stat = self.A @ U + self.C.T @ L
        scale = max(
            np.abs(self.A @ U).max(initial=0.0),
            np.abs(self.C.T @ L).max(initial=0.0),
            1e-300,
        )
        if np.abs(stat).max(initial=0.0) > stol * scale:
            raise SolveError(
                f"stationarity residual {np.abs(stat).max():.3e} "
                f"exceeds {stol:.1e} relative"
            )
        if single:
            return U[:, 0], L[:, 0]
        return U, L


def solve_saddle(A, C, g, constraint_labels=None):
    """One-shot constrained minimization of ``0.5 u^T A u`` s.t. ``C u = g``."""
    return SaddleFactorization(A, C, constraint_labels).solve(g)


def max_asymmetry(A):
    """max |A - A^T| relative to max |A|; zero for exactly symmetric input."""
    d = (A - A.T).tocoo()
    top = np.abs(d.data).max(initial=0.0)
    ref = np.abs(A.tocoo().data).max(initial=0.0)
    return top / ref if ref > 0 else top
