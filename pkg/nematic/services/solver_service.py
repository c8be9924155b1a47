"""Implicit solvers for the shifted systems of the time integrators.

Flattened vectors (``matvec``, ``dense_oracle``) hold interior nodes only, in
C order; for tensor operators the component axis comes first.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, cg

from config import current_config
from nematic.models.mesh import Mesh, dirichlet_spectrum
from nematic.models.qtensor import QTensorField, component_index, component_pairs, frobenius_weights
from nematic.services.bulk_service import trace_values
from nematic.services.mesh_service import cross_derivative_values, laplacian_values
from nematic.utils.errors import MeshError, SolverError

logger = logging.getLogger(__name__)


@lru_cache(maxsize=8)
def _spectrum(mesh):
    spectrum = dirichlet_spectrum(mesh)
    return spectrum, spectrum.kron_sum()


def _interior(mesh):
    return (Ellipsis,) + mesh.interior


def _dst_solve(values, alpha, L, mesh):
    """(alpha I - L Δ_h) u = values，前置轴逐个独立求解"""
    spectrum, lam = _spectrum(mesh)
    coefficients = spectrum.forward(values[_interior(mesh)])
    coefficients /= alpha - L * lam
    out = np.zeros_like(values)
    out[_interior(mesh)] = spectrum.inverse(coefficients)
    return out


def _traceless(components, dim):
    projected = components.copy()
    trace = trace_values(components, dim)
    for i in range(dim):
        projected[component_index(dim, i, i)] -= trace / dim
    return projected


@dataclass(frozen=True)
class HelmholtzOperator:
    """alpha I - L Δ_h"""
    alpha: float
    L: float
    mesh: Mesh

    def __post_init__(self):
        if not self.alpha > 0:
            raise MeshError(f"Helmholtz shift alpha must be > 0, got {self.alpha}")
        if self.L < 0:
            raise MeshError(f"diffusion weight L must be >= 0, got {self.L}")

    @property
    def n_unknowns(self):
        return math.prod(self.mesh.interior_shape)

    def apply_values(self, values):
        return self.alpha * values - self.L * laplacian_values(values, self.mesh.dim, self.mesh.h)

    def matvec(self, x):
        values = self.mesh.zeros()
        values[self.mesh.interior] = np.reshape(x, self.mesh.interior_shape)
        return self.apply_values(values)[self.mesh.interior].ravel()


@dataclass(frozen=True)
class CoupledOperator:
    """alpha I - L1 Δ_h - L23 D^c_h，作用于对称张量场

    交叉导数项作用在无迹投影上，使算子在 Frobenius 内积下对称；
    对无迹场与原算子一致。
    """
    alpha: float
    L1: float
    L23: float
    mesh: Mesh

    def __post_init__(self):
        if not self.alpha > 0:
            raise MeshError(f"shift alpha must be > 0, got {self.alpha}")

    @property
    def dim(self):
        return self.mesh.dim

    @property
    def ncomp(self):
        return len(component_pairs(self.dim))

    @property
    def n_unknowns(self):
        return self.ncomp * math.prod(self.mesh.interior_shape)

    def apply_values(self, components):
        out = self.alpha * components - self.L1 * laplacian_values(components, self.dim, self.mesh.h)
        if self.L23 != 0.0:
            out -= self.L23 * cross_derivative_values(_traceless(components, self.dim), self.dim, self.mesh.h)
        return out

    def apply(self, Q):
        return QTensorField(Q.mesh, self.apply_values(Q.components))

    def matvec(self, x):
        components = np.zeros((self.ncomp,) + self.mesh.shape)
        components[_interior(self.mesh)] = np.reshape(x, (self.ncomp,) + self.mesh.interior_shape)
        return self.apply_values(components)[_interior(self.mesh)].ravel()


class SolverService:
    @staticmethod
    def solve_helmholtz_dst(op, rhs):
        """DST 对角化求解 (alpha I - L Δ_h) U = rhs"""
        values = _dst_solve(rhs.values, op.alpha, op.L, op.mesh)
        if current_config.DEBUG:
            residual = np.linalg.norm(op.apply_values(values) - rhs.values)
            scale = np.linalg.norm(rhs.values)
            if residual > 1e-11 * scale:
                logger.warning(f"DST solve residual {residual:.3e} exceeds 1e-11 * ||rhs|| = {1e-11 * scale:.3e}")
        return type(rhs)(rhs.mesh, values)

    @staticmethod
    def solve_coupled_krylov(op, rhs, tol=None, max_iter=None):
        """预条件共轭梯度求解耦合张量系统

        未知量按 Frobenius 权重缩放（非对角分量乘 sqrt2），预条件子为 L1 部分的 DST 精确逆。
        """
        tol = current_config.KRYLOV_TOL if tol is None else tol
        if not tol > 0:
            raise MeshError(f"Krylov tolerance must be > 0, got {tol}")
        mesh = op.mesh
        if op.L23 == 0.0:
            return QTensorField(mesh, _dst_solve(rhs.components, op.alpha, op.L1, mesh))

        n = op.n_unknowns
        if max_iter is None:
            max_iter = int(math.ceil(current_config.KRYLOV_MAXITER_FACTOR * math.sqrt(n)))
        shape = (op.ncomp,) + mesh.interior_shape
        scale = np.sqrt(frobenius_weights(op.dim)).reshape((-1,) + (1,) * op.dim)

        def to_vector(components):
            return (components[_interior(mesh)] * scale).ravel()

        def from_vector(y):
            components = np.zeros((op.ncomp,) + mesh.shape)
            components[_interior(mesh)] = np.reshape(y, shape) / scale
            return components

        A = LinearOperator((n, n), matvec=lambda y: to_vector(op.apply_values(from_vector(y))), dtype=float)
        P = LinearOperator((n, n), matvec=lambda y: to_vector(_dst_solve(from_vector(y), op.alpha, op.L1, mesh)),
                           dtype=float)
        b = to_vector(rhs.components)

        iterations = 0

        def count(_):
            nonlocal iterations
            iterations += 1

        x, info = cg(A, b, rtol=tol, atol=0.0, maxiter=max_iter, M=P, callback=count)
        b_norm = np.linalg.norm(b)
        residual = np.linalg.norm(b - A.matvec(x)) / b_norm if b_norm > 0 else 0.0
        if info != 0:
            logger.error(f"CG stopped after {iterations} iterations with relative residual {residual:.3e}")
            raise SolverError("Krylov solve did not converge", residual=residual, iterations=iterations)
        logger.debug(f"CG converged in {iterations} iterations (relative residual {residual:.3e})")
        return QTensorField(mesh, from_vector(x))

    @staticmethod
    def assemble_dense(op):
        """逐列作用单位向量组装稠密矩阵"""
        n = op.n_unknowns
        if n > current_config.DENSE_ORACLE_MAX_UNKNOWNS:
            raise MeshError(f"dense assembly limited to {current_config.DENSE_ORACLE_MAX_UNKNOWNS} unknowns, got {n}")
        matrix = np.empty((n, n))
        unit = np.zeros(n)
        for k in range(n):
            unit[k] = 1.0
            matrix[:, k] = op.matvec(unit)
            unit[k] = 0.0
        return matrix

    @staticmethod
    def dense_oracle(op, rhs):
        """组装后用选主元 LU 求解，仅用于小网格"""
        matrix = SolverService.assemble_dense(op)
        return linalg.lu_solve(linalg.lu_factor(matrix), np.asarray(rhs, dtype=float))

    @staticmethod
    def solve_implicit(rhs, alpha, L1, L23, settings):
        """时间格式中的隐式求解入口"""
        mesh = rhs.mesh
        if settings.backend == 'dense':
            op = CoupledOperator(alpha, L1, L23, mesh)
            x = SolverService.dense_oracle(op, rhs.components[_interior(mesh)].ravel())
            components = np.zeros_like(rhs.components)
            components[_interior(mesh)] = x.reshape((op.ncomp,) + mesh.interior_shape)
            return QTensorField(mesh, components)
        if L23 == 0.0:
            return QTensorField(mesh, _dst_solve(rhs.components, alpha, L1, mesh))
        return SolverService.solve_coupled_krylov(CoupledOperator(alpha, L1, L23, mesh), rhs,
                                                  tol=settings.tol, max_iter=settings.max_iter)
