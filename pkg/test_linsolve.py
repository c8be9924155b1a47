import numpy as np
import pytest

from nematic.models.experiment import SolverSettings
from nematic.models.mesh import ScalarGridField, axis_eigenvalues, build_mesh, sine_mode
from nematic.models.qtensor import QTensorField, frobenius_weights
from nematic.services.solver_service import CoupledOperator, HelmholtzOperator, SolverService
from nematic.utils.errors import MeshError, SolverError


def helmholtz_matrix(mesh, alpha, L):
    """alpha I - L Δ_h 的 Kronecker 构造，与算子实现无关"""
    n = mesh.M - 1
    T = (np.diag(-2.0 * np.ones(n)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)) / mesh.h ** 2
    eye = np.eye(n)
    lap = np.zeros((n ** mesh.dim, n ** mesh.dim))
    for axis in range(mesh.dim):
        term = np.ones((1, 1))
        for k in range(mesh.dim):
            term = np.kron(term, T if k == axis else eye)
        lap += term
    return alpha * np.eye(n ** mesh.dim) - L * lap


def test_helmholtz_trivial_cases(mesh2d):
    op = HelmholtzOperator(3.0, 0.1, mesh2d)
    zero = SolverService.solve_helmholtz_dst(op, ScalarGridField.zeros(mesh2d))
    assert np.all(zero.values == 0.0)
    with pytest.raises(MeshError):
        HelmholtzOperator(0.0, 0.1, mesh2d)
    with pytest.raises(MeshError):
        HelmholtzOperator(1.0, -0.1, mesh2d)


def test_helmholtz_eigenfunction(mesh2d):
    alpha, L = 5.0, 0.02
    mode = sine_mode(mesh2d, (3, 2))
    lam = axis_eigenvalues(mesh2d.M, mesh2d.h)
    rhs = ScalarGridField(mesh2d, (alpha - L * (lam[2] + lam[1])) * mode.values)
    U = SolverService.solve_helmholtz_dst(HelmholtzOperator(alpha, L, mesh2d), rhs)
    np.testing.assert_allclose(U.values, mode.values, atol=1e-12)


@pytest.mark.parametrize('dim, M', [(2, 8), (3, 6)])
def test_helmholtz_matches_dense_lu(dim, M, rng):
    mesh = build_mesh(dim, M, 1.0)
    op = HelmholtzOperator(12.0, 0.05, mesh)
    matrix = helmholtz_matrix(mesh, op.alpha, op.L)
    np.testing.assert_allclose(SolverService.assemble_dense(op), matrix, atol=1e-10)
    for _ in range(20):
        rhs = ScalarGridField.from_interior(mesh, rng.standard_normal(mesh.interior_shape))
        U = SolverService.solve_helmholtz_dst(op, rhs)
        expected = SolverService.dense_oracle(op, rhs.interior_values.ravel())
        np.testing.assert_allclose(U.interior_values.ravel(), expected, atol=1e-10)
        assert U.boundary_max() == 0.0
        residual = np.linalg.norm(matrix @ U.interior_values.ravel() - rhs.interior_values.ravel())
        assert residual <= 1e-11 * np.linalg.norm(rhs.interior_values)


@pytest.mark.parametrize('alpha, L, M', [(1.0, 1e-3, 8), (10.0, 0.1, 8), (0.5, 1.0, 6), (100.0, 4.5e-3, 10),
                                         (2.0, 1e-2, 16)])
def test_helmholtz_inverse_is_nonnegative_contraction(alpha, L, M):
    """G^{-1} 逐元素非负，且 ||G^{-1}||_inf <= 1/alpha"""
    mesh = build_mesh(2, M, 1.0)
    matrix = SolverService.assemble_dense(HelmholtzOperator(alpha, L, mesh))
    assert np.all(matrix.sum(axis=1) >= alpha - 1e-12 * alpha)
    inverse = np.linalg.inv(matrix)
    assert inverse.min() >= -1e-13
    assert np.abs(inverse).sum(axis=1).max() <= 1.0 / alpha + 1e-12


def test_componentwise_norm_inequality(rng):
    """非负矩阵 A：sqrt(sum (A phi)^2) <= A sqrt(sum phi^2) 逐分量成立"""
    for _ in range(100):
        n, count = rng.integers(2, 12), rng.integers(1, 7)
        A = rng.uniform(0.0, 1.0, (n, n))
        phi = rng.standard_normal((count, n))
        lhs = np.sqrt(np.sum((phi @ A.T) ** 2, axis=0))
        rhs = A @ np.sqrt(np.sum(phi ** 2, axis=0))
        assert np.all(lhs <= rhs + 1e-12)


def test_dense_oracle_identity_and_size_guard(mesh2d, rng):
    op = HelmholtzOperator(1.0, 0.0, mesh2d)
    rhs = rng.standard_normal(op.n_unknowns)
    np.testing.assert_allclose(SolverService.dense_oracle(op, rhs), rhs, atol=1e-15)
    with pytest.raises(MeshError):
        SolverService.assemble_dense(HelmholtzOperator(1.0, 1.0, build_mesh(2, 200, 1.0)))


@pytest.mark.parametrize('dim, M', [(2, 8), (3, 6)])
def test_coupled_operator_is_weighted_symmetric(dim, M):
    """Frobenius 权重下耦合算子对称"""
    mesh = build_mesh(dim, M, 1.0)
    op = CoupledOperator(4.0, 1e-2, 5e-3, mesh)
    matrix = SolverService.assemble_dense(op)
    npts = np.prod(mesh.interior_shape)
    scale = np.repeat(np.sqrt(frobenius_weights(dim)), npts)
    scaled = scale[:, None] * matrix / scale[None, :]
    np.testing.assert_allclose(scaled, scaled.T, atol=1e-10 * np.abs(scaled).max())


def test_coupled_without_cross_term_is_componentwise_dst(mesh2d, make_symmetric):
    rhs = make_symmetric(mesh2d)
    op = CoupledOperator(6.0, 0.03, 0.0, mesh2d)
    Q = SolverService.solve_coupled_krylov(op, rhs)
    helmholtz = HelmholtzOperator(6.0, 0.03, mesh2d)
    for n, (i, j) in enumerate(Q.pairs):
        U = SolverService.solve_helmholtz_dst(helmholtz, rhs.component(i, j))
        np.testing.assert_allclose(Q.components[n], U.values, atol=1e-11)


def test_coupled_zero_rhs(mesh2d):
    op = CoupledOperator(6.0, 0.03, 0.02, mesh2d)
    Q = SolverService.solve_coupled_krylov(op, QTensorField.zeros(mesh2d))
    assert np.all(Q.components == 0.0)


@pytest.mark.parametrize('dim, M', [(2, 8), (3, 6)])
def test_coupled_krylov_matches_dense_oracle(dim, M, make_symmetric):
    mesh = build_mesh(dim, M, 1.0)
    op = CoupledOperator(10.0, 1e-2, 1e-2, mesh)
    rhs = make_symmetric(mesh)
    Q = SolverService.solve_coupled_krylov(op, rhs, tol=1e-13)
    interior = (slice(None),) + mesh.interior
    expected = SolverService.dense_oracle(op, rhs.components[interior].ravel())
    np.testing.assert_allclose(Q.components[interior].ravel(), expected, atol=1e-10)
    np.testing.assert_array_equal(Q.with_zero_boundary().components, Q.components)


def test_coupled_krylov_preconditioned_by_exact_dst_inverse(make_symmetric):
    """α−L1Δ 的条件数约为 100；预条件后 L23/L1 = 0.01 时几步即收敛"""
    mesh = build_mesh(2, 16, 1.0)
    op = CoupledOperator(1.0, 1.0, 1e-2, mesh)
    rhs = make_symmetric(mesh)
    Q = SolverService.solve_coupled_krylov(op, rhs, tol=1e-10, max_iter=12)
    interior = (slice(None),) + mesh.interior
    expected = SolverService.dense_oracle(op, rhs.components[interior].ravel())
    np.testing.assert_allclose(Q.components[interior].ravel(), expected, rtol=1e-7, atol=1e-9)


def test_coupled_krylov_reports_nonconvergence(mesh2d, make_symmetric):
    op = CoupledOperator(1.0, 1.0, 1.0, mesh2d)
    with pytest.raises(SolverError) as excinfo:
        SolverService.solve_coupled_krylov(op, make_symmetric(mesh2d), tol=1e-15, max_iter=1)
    assert excinfo.value.iterations == 1
    assert excinfo.value.residual > 1e-15
    assert excinfo.value.exit_code == 3


@pytest.mark.parametrize('L23', [0.0, 2e-2])
def test_solve_implicit_backends_agree(L23, mesh2d, make_symmetric):
    rhs = make_symmetric(mesh2d)
    auto = SolverService.solve_implicit(rhs, 8.0, 1e-2, L23, SolverSettings(tol=1e-13))
    dense = SolverService.solve_implicit(rhs, 8.0, 1e-2, L23, SolverSettings(backend='dense'))
    np.testing.assert_allclose(auto.components, dense.components, atol=1e-10)
