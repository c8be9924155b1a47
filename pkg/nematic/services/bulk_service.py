import math

import numpy as np

from nematic.models.mesh import ScalarGridField
from nematic.models.qtensor import QTensorField, component_index, component_pairs, frobenius_weights
from nematic.services.mesh_service import divergence_values, grad_norm_sq_values
from nematic.utils.errors import ConfigError

SQRT6 = math.sqrt(6.0)


def _weights_like(components, dim):
    """把分量权重广播到 components 的形状"""
    return frobenius_weights(dim).reshape((-1,) + (1,) * (components.ndim - 1))


def square_values(components, dim):
    """(Q^2) 的唯一分量，逐节点"""
    out = np.zeros_like(components)
    for n, (i, j) in enumerate(component_pairs(dim)):
        for k in range(dim):
            out[n] += components[component_index(dim, i, k)] * components[component_index(dim, k, j)]
    return out


def trace_sq_values(components, dim):
    """tr(Q^2) = |Q|_F^2"""
    return np.sum(_weights_like(components, dim) * components ** 2, axis=0)


def trace_values(components, dim):
    return sum(components[component_index(dim, i, i)] for i in range(dim))


def bulk_force_values(components, params, dim):
    """f(Q) = -aQ + b(Q^2 - tr(Q^2) I/d) - c tr(Q^2) Q，前置轴为分量"""
    q2 = square_values(components, dim)
    tr2 = trace_sq_values(components, dim)
    out = -params.a * components - params.c * tr2 * components
    if params.b != 0.0:
        out = out + params.b * q2
        for i in range(dim):
            out[component_index(dim, i, i)] -= params.b * tr2 / dim
    return out


def bulk_density_values(components, params, dim):
    q2 = square_values(components, dim)
    tr2 = trace_sq_values(components, dim)
    tr3 = np.sum(_weights_like(components, dim) * q2 * components, axis=0)
    return 0.5 * params.a * tr2 - params.b / 3.0 * tr3 + 0.25 * params.c * tr2 ** 2


def eigen_gap_values(components, dim, shift):
    """Q + shift*I 最大两个特征值之差"""
    if dim == 2:
        q11 = components[component_index(2, 0, 0)]
        q12 = components[component_index(2, 0, 1)]
        q22 = components[component_index(2, 1, 1)]
        return np.sqrt((q11 - q22) ** 2 + 4.0 * q12 ** 2)
    matrices = _node_matrices(components, dim) + shift * np.eye(dim)
    eigenvalues = np.linalg.eigvalsh(matrices)
    return eigenvalues[..., -1] - eigenvalues[..., -2]


def _node_matrices(components, dim):
    """(ncomp,) + grid -> grid + (d, d)"""
    full = np.empty((dim, dim) + components.shape[1:])
    for n, (i, j) in enumerate(component_pairs(dim)):
        full[i, j] = components[n]
        full[j, i] = components[n]
    return np.moveaxis(full, (0, 1), (-2, -1))


def round_up_2sig(value):
    """向上取两位有效数字"""
    if value <= 0:
        return 0.0
    exponent = math.floor(math.log10(value)) - 1
    scale = 10.0 ** exponent
    return math.ceil(value / scale - 1e-9) * scale


class BulkService:
    @staticmethod
    def bulk_force(Q, params):
        """体能量非线性项 f(Q)"""
        return QTensorField(Q.mesh, bulk_force_values(Q.components, params, Q.dim))

    @staticmethod
    def bulk_energy(Q, params):
        """E_1h[Q] = h^d * 内部节点体能量密度之和"""
        mesh = Q.mesh
        density = bulk_density_values(Q.components[(slice(None),) + mesh.interior], params, Q.dim)
        return float(np.sum(density) * mesh.cell_volume)

    @staticmethod
    def elastic_energy(Q, params, laplacian_form=False):
        """弹性能

        laplacian_form=True 时按 MBP 格式的空间算子计算 (L/2)||grad Q||^2，
        L = L1 + (L2+L3)/2。
        """
        mesh = Q.mesh
        grad_sq = grad_norm_sq_values(Q.components, Q.dim, mesh.h)
        grad_term = float(np.sum(Q.weights * grad_sq))
        if laplacian_form:
            return 0.5 * params.L * grad_term
        energy = 0.5 * params.L1 * grad_term
        if params.L23 != 0.0:
            w = divergence_values(Q.components, Q.dim, mesh.h)
            energy += params.L23 * float(np.sum(w[(slice(None),) + mesh.interior] ** 2) * mesh.cell_volume)
        return energy

    @staticmethod
    def total_energy(Q, s, params, laplacian_form=False):
        """E_h[Q, s] = E_el[Q] + s"""
        return BulkService.elastic_energy(Q, params, laplacian_form) + s

    @staticmethod
    def trace_field(Q):
        return ScalarGridField(Q.mesh, trace_values(Q.components, Q.dim))

    @staticmethod
    def frobenius_field(Q):
        """逐节点 |Q|_F"""
        return ScalarGridField(Q.mesh, np.sqrt(trace_sq_values(Q.components, Q.dim)))

    @staticmethod
    def frobenius_sup_norm(Q):
        return float(np.sqrt(trace_sq_values(Q.components, Q.dim).max()))

    @staticmethod
    def tensor_inner(P, Q):
        """sum_{ij} <P^{ij}, Q^{ij}>_h，完整 d×d 指标求和"""
        mesh = Q.mesh
        index = (slice(None),) + mesh.interior
        products = np.sum(P.components[index] * Q.components[index], axis=tuple(range(1, Q.dim + 1)))
        return float(np.dot(Q.weights, products) * mesh.cell_volume)

    @staticmethod
    def tensor_l2_norm(Q):
        return math.sqrt(max(BulkService.tensor_inner(Q, Q), 0.0))

    @staticmethod
    def tensor_grad_norm(Q):
        """sqrt(sum_{ij} ||grad_h Q^{ij}||^2)"""
        grad_sq = grad_norm_sq_values(Q.components, Q.dim, Q.mesh.h)
        return math.sqrt(float(np.sum(Q.weights * grad_sq)))

    @staticmethod
    def eta_bound(params, q0_sup, d):
        """MBP 半径 eta^(d)"""
        if not params.c > 0:
            raise ConfigError(f"model.c must be > 0, got {params.c}")
        if q0_sup < 0:
            raise ConfigError(f"q0_sup must be >= 0, got {q0_sup}")
        a, b, c = params.a, params.b, params.c
        if d == 2:
            return max(q0_sup, math.sqrt(max(0.0, -a) / c))
        if a <= b ** 2 / (24.0 * c):
            return max(q0_sup, (abs(b) + math.sqrt(b ** 2 - 24.0 * a * c)) / (2.0 * SQRT6 * c))
        return q0_sup

    @staticmethod
    def fbar(xi, params, dim=None):
        """标量化的非线性项；d=2 时 b 项取 0"""
        b = 0.0 if dim == 2 else params.b
        return -params.a * xi + b / SQRT6 * xi ** 2 - params.c * xi ** 3

    @staticmethod
    def fbar_prime(xi, params, dim=None):
        b = 0.0 if dim == 2 else params.b
        return -params.a + 2.0 * b / SQRT6 * xi - 3.0 * params.c * xi ** 2

    @staticmethod
    def kappa_min(params, eta, dim=None):
        """稳定化参数下界 max{a + c eta^2, max_[0,eta] |fbar'|}"""
        b = 0.0 if dim == 2 else params.b
        candidates = [0.0, eta]
        vertex = b / (3.0 * SQRT6 * params.c)
        if 0.0 < vertex < eta:
            candidates.append(vertex)
        slope = max(abs(BulkService.fbar_prime(xi, params, dim)) for xi in candidates)
        return max(params.a + params.c * eta ** 2, slope)

    @staticmethod
    def kappa_default(params, eta, dim=None):
        return round_up_2sig(BulkService.kappa_min(params, eta, dim))

    @staticmethod
    def c_star_default(params, eta, dim, volume):
        """-|Omega| * min_[0,eta] [(a/2)xi^2 - (|b|/(3 sqrt6))xi^3 + (c/4)xi^4]"""
        b = 0.0 if dim == 2 else abs(params.b)
        a, c = params.a, params.c

        def density(xi):
            return 0.5 * a * xi ** 2 - b / (3.0 * SQRT6) * xi ** 3 + 0.25 * c * xi ** 4

        candidates = [0.0, eta]
        # p'(xi) = xi (c xi^2 - (b/sqrt6) xi + a)
        disc = b ** 2 / 6.0 - 4.0 * a * c
        if disc >= 0:
            root = math.sqrt(disc)
            for xi in ((b / SQRT6 - root) / (2.0 * c), (b / SQRT6 + root) / (2.0 * c)):
                if 0.0 < xi < eta:
                    candidates.append(xi)
        return -volume * min(density(xi) for xi in candidates)

    @staticmethod
    def eigen_gap_field(Q, shift):
        return ScalarGridField(Q.mesh, eigen_gap_values(Q.components, Q.dim, shift))

    @staticmethod
    def dominant_director(Q):
        """最大特征值对应的单位特征向量，形状 grid + (3,)；2D 时 z 分量为 0"""
        matrices = _node_matrices(Q.components, Q.dim)
        _, vectors = np.linalg.eigh(matrices)
        director = vectors[..., :, -1]
        pivot = np.take_along_axis(director, np.abs(director).argmax(axis=-1)[..., None], axis=-1)
        director = director * np.where(pivot < 0, -1.0, 1.0)
        if Q.dim == 2:
            director = np.concatenate([director, np.zeros(director.shape[:-1] + (1,))], axis=-1)
        return director
