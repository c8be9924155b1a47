import numpy as np

from nematic.models.mesh import ScalarGridField
from nematic.models.qtensor import QTensorField, component_index, component_pairs
from nematic.utils.errors import MeshError


def _shifted(values, dim, axis, offset):
    """内部节点沿axis平移offset后的视图，前置维度原样保留"""
    n = values.shape[-dim + axis]
    index = [Ellipsis] + [slice(1, -1)] * dim
    index[1 + axis] = slice(1 + offset, n - 1 + offset)
    return values[tuple(index)]


def _interior_index(dim):
    return (Ellipsis,) + (slice(1, -1),) * dim


def laplacian_values(values, dim, h):
    """(2d+1)点离散拉普拉斯，边界输出为0"""
    out = np.zeros_like(values)
    center = values[_interior_index(dim)]
    acc = np.zeros_like(center)
    for axis in range(dim):
        acc += _shifted(values, dim, axis, 1) + _shifted(values, dim, axis, -1) - 2.0 * center
    out[_interior_index(dim)] = acc / h ** 2
    return out


def centered_values(values, dim, h, axis):
    """中心差分 D^c_k，输出限制在内部节点"""
    out = np.zeros_like(values)
    out[_interior_index(dim)] = (_shifted(values, dim, axis, 1) - _shifted(values, dim, axis, -1)) / (2.0 * h)
    return out


def grad_norm_sq_values(values, dim, h):
    """平均边内积 sum_k [D+_k U, D+_k U]，返回每个前置分量的结果"""
    spatial = tuple(range(-dim, 0))
    total = np.zeros(values.shape[:-dim])
    for axis in range(dim):
        ax = values.ndim - dim + axis
        edges = np.diff(values, axis=ax) / h
        sq = edges ** 2
        # 两端补零边，再用 a_k 平均到节点 0..M
        pad = [(0, 0)] * values.ndim
        pad[ax] = (1, 1)
        sq = np.pad(sq, pad)
        upper = [slice(None)] * values.ndim
        lower = [slice(None)] * values.ndim
        upper[ax] = slice(1, None)
        lower[ax] = slice(None, -1)
        averaged = 0.5 * (sq[tuple(upper)] + sq[tuple(lower)])
        # 其余轴只取内部节点
        index = [Ellipsis] + [slice(1, -1)] * dim
        index[1 + axis] = slice(None)
        total = total + averaged[tuple(index)].sum(axis=spatial)
    return total * h ** dim


def divergence_values(components, dim, h):
    """w^i = sum_k D^c_k Q^{ik}，形状 (d,) + grid"""
    w = np.zeros((dim,) + components.shape[1:])
    for i in range(dim):
        for k in range(dim):
            w[i] += centered_values(components[component_index(dim, i, k)], dim, h, k)
    return w


def cross_derivative_values(components, dim, h):
    """D^c_j w^i + D^c_i w^j - (2/d) delta^{ij} sum_l D^c_l w^l"""
    w = divergence_values(components, dim, h)
    div_w = sum(centered_values(w[l], dim, h, l) for l in range(dim))
    out = np.zeros_like(components)
    for n, (i, j) in enumerate(component_pairs(dim)):
        out[n] = centered_values(w[i], dim, h, j) + centered_values(w[j], dim, h, i)
        if i == j:
            out[n] -= (2.0 / dim) * div_w
    return out


class MeshService:
    @staticmethod
    def _same_mesh(U, V):
        if U.mesh != V.mesh:
            raise MeshError("fields live on different meshes")

    @staticmethod
    def laplacian_apply(U):
        """离散拉普拉斯 Δ_h U"""
        return ScalarGridField(U.mesh, laplacian_values(U.values, U.mesh.dim, U.mesh.h))

    @staticmethod
    def forward_difference(U, axis):
        """前向差分 D+_k U，定义在 M 条边上"""
        return np.diff(U.values, axis=axis) / U.mesh.h

    @staticmethod
    def centered_difference(U, axis):
        return ScalarGridField(U.mesh, centered_values(U.values, U.mesh.dim, U.mesh.h, axis))

    @staticmethod
    def cross_derivative_apply(Q):
        """交叉导数算子 D^c_h Q；对称性由存储保证"""
        if not isinstance(Q, QTensorField):
            raise MeshError("cross_derivative_apply expects a QTensorField")
        return QTensorField(Q.mesh, cross_derivative_values(Q.components, Q.dim, Q.mesh.h))

    @staticmethod
    def inner_product(U, V):
        """h^d * 内部节点上的 U·V 之和"""
        MeshService._same_mesh(U, V)
        mesh = U.mesh
        return float(np.sum(U.values[mesh.interior] * V.values[mesh.interior]) * mesh.cell_volume)

    @staticmethod
    def grad_norm_sq(U):
        return float(grad_norm_sq_values(U.values, U.mesh.dim, U.mesh.h))

    @staticmethod
    def l2_norm(U):
        return float(np.sqrt(MeshService.inner_product(U, U)))

    @staticmethod
    def sup_norm(U):
        return float(np.abs(U.values).max())

    @staticmethod
    def restrict_to_coarse(field, coarse_mesh):
        """嵌套网格上的节点注入 p -> r*p，不做插值；支持标量场和张量场"""
        fine_mesh = field.mesh
        if fine_mesh.dim != coarse_mesh.dim or fine_mesh.domain_length != coarse_mesh.domain_length:
            raise MeshError("meshes do not cover the same domain")
        if fine_mesh.M % coarse_mesh.M != 0:
            raise MeshError(f"M={fine_mesh.M} is not a refinement of M={coarse_mesh.M}")
        ratio = fine_mesh.M // coarse_mesh.M
        index = (Ellipsis,) + (slice(None, None, ratio),) * fine_mesh.dim
        if isinstance(field, QTensorField):
            return QTensorField(coarse_mesh, np.ascontiguousarray(field.components[index]))
        return ScalarGridField(coarse_mesh, np.ascontiguousarray(field.values[index]))
