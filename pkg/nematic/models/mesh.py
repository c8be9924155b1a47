"""Uniform Cartesian mesh with homogeneous Dirichlet boundary.

Node indices run 0..M along every axis; nodes with index 0 or M are boundary
nodes and hold 0. Ghost nodes (-1, M+1) are never stored: stencils only reach
them from boundary nodes, whose outputs are fixed to 0.

The sine transform is the type-I DST with ``norm="ortho"`` applied to the
interior nodes 1..M-1. With that normalization the transform is orthogonal
and its own inverse, so forward followed by inverse is the identity without
any external scaling.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy import fft

from nematic.utils.errors import MeshError


@dataclass(frozen=True)
class Mesh:
    dim: int
    M: int
    h: float
    domain_length: float

    @property
    def shape(self):
        return (self.M + 1,) * self.dim

    @property
    def interior_shape(self):
        return (self.M - 1,) * self.dim

    @property
    def interior(self):
        return (slice(1, -1),) * self.dim

    @property
    def cell_volume(self):
        return self.h ** self.dim

    @property
    def volume(self):
        return self.domain_length ** self.dim

    def coordinates(self):
        """各轴节点坐标 (indexing='ij')"""
        x = np.linspace(0.0, self.domain_length, self.M + 1)
        return np.meshgrid(*([x] * self.dim), indexing='ij')

    def zeros(self):
        return np.zeros(self.shape)


def build_mesh(dim, M, domain_length):
    """创建网格"""
    problems = []
    if dim not in (2, 3):
        problems.append(f"dim must be 2 or 3, got {dim}")
    if int(M) != M or M < 4:
        problems.append(f"M must be an integer >= 4, got {M}")
    if not domain_length > 0:
        problems.append(f"domain_length must be positive, got {domain_length}")
    if problems:
        raise MeshError("; ".join(problems))
    return Mesh(dim=int(dim), M=int(M), h=float(domain_length) / int(M), domain_length=float(domain_length))


@dataclass(frozen=True, eq=False)
class ScalarGridField:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.mesh.shape:
            raise MeshError(f"field shape {self.values.shape} does not match mesh shape {self.mesh.shape}")

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, mesh.zeros())

    @classmethod
    def from_interior(cls, mesh, interior_values):
        values = mesh.zeros()
        values[mesh.interior] = interior_values
        return cls(mesh, values)

    @property
    def interior_values(self):
        return self.values[self.mesh.interior]

    def boundary_max(self):
        """边界节点上的最大绝对值（应为0）"""
        mask = np.ones(self.mesh.shape, dtype=bool)
        mask[self.mesh.interior] = False
        return float(np.abs(self.values[mask]).max())


def axis_eigenvalues(M, h):
    """一维离散Dirichlet拉普拉斯算子的特征值, k = 1..M-1"""
    if M < 2:
        raise MeshError(f"need at least one interior node, got M={M}")
    k = np.arange(1, M)
    return -(4.0 / h ** 2) * np.sin(k * np.pi / (2 * M)) ** 2


@dataclass(frozen=True, eq=False)
class DirichletSpectrum:
    mesh: Mesh
    eigenvalues: np.ndarray
    dst_type: int = 1
    norm: str = "ortho"

    @property
    def axes(self):
        # 空间轴位于最后，允许前面带分量维
        return tuple(range(-self.mesh.dim, 0))

    def kron_sum(self):
        """d维拉普拉斯谱: 各轴特征值的Kronecker和"""
        lam = np.zeros(self.mesh.interior_shape)
        for axis in range(self.mesh.dim):
            shape = [1] * self.mesh.dim
            shape[axis] = self.mesh.M - 1
            lam = lam + self.eigenvalues.reshape(shape)
        return lam

    def forward(self, interior_values):
        return fft.dstn(interior_values, type=self.dst_type, norm=self.norm, axes=self.axes)

    def inverse(self, coefficients):
        return fft.idstn(coefficients, type=self.dst_type, norm=self.norm, axes=self.axes)


def dirichlet_spectrum(mesh):
    """网格上Dirichlet拉普拉斯的DST谱数据"""
    return DirichletSpectrum(
        mesh=mesh,
        eigenvalues=axis_eigenvalues(mesh.M, mesh.h),
    )


def sine_mode(mesh, wavenumbers):
    """离散正弦模态 prod_k sin(k_a * pi * p_a / M)"""
    if len(wavenumbers) != mesh.dim:
        raise MeshError("one wavenumber per axis is required")
    p = np.arange(mesh.M + 1)
    mode = np.ones(mesh.shape)
    for axis, k in enumerate(wavenumbers):
        shape = [1] * mesh.dim
        shape[axis] = mesh.M + 1
        mode = mode * np.sin(k * math.pi * p / mesh.M).reshape(shape)
    return ScalarGridField.from_interior(mesh, mode[mesh.interior])
