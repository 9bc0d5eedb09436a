import numpy as np
import pytest
import scipy.sparse as sp

from mchom import fem
from mchom.grid import build_fine_mesh


class TriPatch:
    """Minimal triangulation container for hand-built element tests."""

    def __init__(self, nodes, triangles):
        self.nodes = np.asarray(nodes, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        v = self.nodes[self.triangles]
        d = (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1]) - (
            v[:, 2, 0] - v[:, 0, 0]
        ) * (v[:, 1, 1] - v[:, 0, 1])
        self.areas = 0.5 * d
        self.barycenters = v.mean(axis=1)
        self.n_nodes = len(self.nodes)
        self.n_triangles = len(self.triangles)


REFERENCE = TriPatch([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])


def test_reference_triangle_stiffness():
    K = fem.assemble_stiffness(REFERENCE, 1.0).toarray()
    expected = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])
    assert np.allclose(K, expected, atol=1e-14)


def test_reference_triangle_mass():
    M = fem.assemble_weighted_mass(REFERENCE).toarray()
    assert np.allclose(M, 0.5 / 12.0 * np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]))


def test_stiffness_rows_sum_to_zero():
    mesh = build_fine_mesh(1, 1)
    K = fem.assemble_stiffness(mesh, 1.0)
    assert np.abs(K @ np.ones(mesh.n_nodes)).max() < 1e-14


def test_stiffness_linearity_in_coefficient():
    mesh = build_fine_mesh(5, 4)
    kappa = 1.0 + np.arange(mesh.n_triangles, dtype=float) / mesh.n_triangles
    K1 = fem.assemble_stiffness(mesh, kappa)
    K3 = fem.assemble_stiffness(mesh, 3.0 * kappa)
    assert np.abs((3.0 * K1 - K3).data).max() < 1e-13


def test_stiffness_rejects_nonpositive_coefficient():
    mesh = build_fine_mesh(2, 2)
    with pytest.raises(ValueError):
        fem.assemble_stiffness(mesh, 0.0)


def test_empty_subset_rejected():
    mesh = build_fine_mesh(2, 2)
    with pytest.raises(ValueError, match="empty"):
        fem.assemble_stiffness(mesh, 1.0, tris=np.array([], dtype=int))


def test_mass_conservation():
    mesh = build_fine_mesh(6, 6)
    M = fem.assemble_weighted_mass(mesh)
    assert M.sum() == pytest.approx(1.0, abs=1e-12)


def test_weighted_mass_measures_subdomain():
    mesh = build_fine_mesh(8, 8)
    w = (mesh.barycenters[:, 0] < 0.5).astype(float)
    M = fem.assemble_weighted_mass(mesh, w)
    assert M.sum() == pytest.approx(0.5, abs=1e-12)


def test_negative_weight_rejected():
    mesh = build_fine_mesh(2, 2)
    with pytest.raises(ValueError):
        fem.assemble_weighted_mass(mesh, -np.ones(mesh.n_triangles))


def test_load_zero_and_constant():
    mesh = build_fine_mesh(5, 5)
    assert np.all(fem.assemble_load(mesh, lambda p: np.zeros(len(p))) == 0)
    total = fem.assemble_load(mesh, lambda p: np.ones(len(p))).sum()
    assert total == pytest.approx(1.0, abs=1e-12)


def test_load_gaussian_matches_dense_quadrature():
    mesh = build_fine_mesh(400, 400)
    g = lambda p: np.exp(-40 * ((p[:, 0] - 0.5) ** 2 + (p[:, 1] - 0.5) ** 2))
    total = fem.assemble_load(mesh, g).sum()
    n = 1600
    xs = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(xs, xs)
    dense = np.exp(-40 * ((X - 0.5) ** 2 + (Y - 0.5) ** 2)).mean()
    assert total == pytest.approx(dense, abs=1e-8)


def test_dirichlet_zero_boundary_laplace():
    mesh = build_fine_mesh(6, 6)
    K = fem.assemble_stiffness(mesh, 1.0)
    b = np.zeros(mesh.n_nodes)
    A2, b2 = fem.apply_dirichlet(K, b, mesh.boundary_nodes, 0.0)
    assert np.abs(fem.solve_spd(A2, b2)).max() < 1e-12


def test_dirichlet_constant_boundary():
    mesh = build_fine_mesh(6, 6)
    K = fem.assemble_stiffness(mesh, 1.0)
    b = np.zeros(mesh.n_nodes)
    A2, b2 = fem.apply_dirichlet(K, b, mesh.boundary_nodes, 1.0)
    u = fem.solve_spd(A2, b2)
    assert np.abs(u - 1.0).max() < 1e-12


def test_dirichlet_linear_solution():
    # u = 0 on the left edge, u = 1 on the right, natural elsewhere
    mesh = build_fine_mesh(8, 8)
    K = fem.assemble_stiffness(mesh, 1.0)
    b = np.zeros(mesh.n_nodes)
    left = np.flatnonzero(mesh.nodes[:, 0] == 0.0)
    right = np.flatnonzero(mesh.nodes[:, 0] == 1.0)
    nodes = np.concatenate([left, right])
    values = np.concatenate([np.zeros(len(left)), np.ones(len(right))])
    A2, b2 = fem.apply_dirichlet(K, b, nodes, values)
    u = fem.solve_spd(A2, b2)
    assert np.abs(u - mesh.nodes[:, 0]).max() < 1e-10


def test_galerkin_energy_of_linear_field():
    mesh = build_fine_mesh(6, 6)
    kappa = np.where(mesh.barycenters[:, 1] < 0.5, 2.0, 5.0)
    K = fem.assemble_stiffness(mesh, kappa)
    u = mesh.nodes[:, 0]
    energy = u @ (K @ u)
    assert energy == pytest.approx((kappa * mesh.areas).sum(), abs=1e-10)


def test_solve_spd_identity():
    A = sp.identity(4, format="csr")
    b = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.allclose(fem.solve_spd(A, b), b)


def test_solve_spd_diagonal():
    A = sp.diags([2.0, 4.0]).tocsr()
    assert np.allclose(fem.solve_spd(A, np.array([2.0, 4.0])), [1.0, 1.0])


def test_solve_spd_recovers_constructed_solution():
    rng = np.random.default_rng(7)
    H = rng.standard_normal((50, 50))
    A = sp.csr_matrix(H @ H.T + 50 * np.eye(50))
    x_true = rng.standard_normal(50)
    x = fem.solve_spd(A, A @ x_true)
    assert np.abs(x - x_true).max() < 1e-9


def test_saddle_uniform_constraint():
    n = 6
    A = sp.identity(n, format="csr")
    C = sp.csr_matrix(np.ones((1, n)))
    u, lam = fem.solve_saddle(A, C, np.array([float(n)]))
    assert np.allclose(u, 1.0, atol=1e-12)
    assert lam[0] == pytest.approx(-1.0, abs=1e-12)


def test_saddle_inactive_constraints_zero_multiplier():
    rng = np.random.default_rng(3)
    H = rng.standard_normal((5, 5))
    A = sp.csr_matrix(H @ H.T + 5 * np.eye(5))
    C = sp.csr_matrix(rng.standard_normal((2, 5)))
    u, lam = fem.solve_saddle(A, C, np.zeros(2))
    assert np.abs(u).max() < 1e-12
    assert np.abs(lam).max() < 1e-12


def test_saddle_matches_dense_kkt():
    rng = np.random.default_rng(11)
    for _ in range(5):
        n, m = 7, 3
        H = rng.standard_normal((n, n))
        A = H @ H.T + n * np.eye(n)
        C = rng.standard_normal((m, n))
        g = rng.standard_normal(m)
        K = np.block([[A, C.T], [C, np.zeros((m, m))]])
        ref = np.linalg.solve(K, np.concatenate([np.zeros(n), g]))
        u, lam = fem.solve_saddle(sp.csr_matrix(A), sp.csr_matrix(C), g)
        assert np.abs(u - ref[:n]).max() < 1e-10
        assert np.abs(lam - ref[n:]).max() < 1e-10


def test_saddle_multiple_rhs():
    rng = np.random.default_rng(13)
    H = rng.standard_normal((6, 6))
    A = sp.csr_matrix(H @ H.T + 6 * np.eye(6))
    C = sp.csr_matrix(rng.standard_normal((2, 6)))
    G = rng.standard_normal((2, 3))
    U, L = fem.solve_saddle(A, C, G)
    for k in range(3):
        u, lam = fem.solve_saddle(A, C, G[:, k])
        assert np.allclose(U[:, k], u)
        assert np.allclose(L[:, k], lam)


def test_saddle_zero_row_raises():
    A = sp.identity(4, format="csr")
    C = sp.csr_matrix(np.zeros((1, 4)))
    with pytest.raises(fem.ConstraintDegeneracyError):
        fem.solve_saddle(A, C, np.array([1.0]))


def test_saddle_rank_deficient_raises():
    A = sp.identity(4, format="csr")
    row = np.ones((1, 4))
    C = sp.csr_matrix(np.vstack([row, row]))
    with pytest.raises((fem.ConstraintDegeneracyError, fem.SolveError)):
        fem.solve_saddle(A, C, np.array([1.0, 2.0]))


def test_assembled_matrices_symmetric():
    mesh = build_fine_mesh(5, 7)
    kappa = 1.0 + mesh.barycenters[:, 0]
    assert fem.max_asymmetry(fem.assemble_stiffness(mesh, kappa)) == 0.0
    assert fem.max_asymmetry(fem.assemble_weighted_mass(mesh, kappa)) == 0.0
