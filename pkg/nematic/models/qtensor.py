from dataclasses import dataclass, replace

import numpy as np

from nematic.models.mesh import ScalarGridField
from nematic.utils.errors import ConfigError, MeshError


def component_pairs(dim):
    """上三角 (含对角线) 分量的 (i, j) 顺序"""
    return [(i, j) for i in range(dim) for j in range(i, dim)]


def component_index(dim, i, j):
    if i > j:
        i, j = j, i
    return component_pairs(dim).index((i, j))


def frobenius_weights(dim):
    """对角分量权重1，非对角分量在完整d×d求和中出现两次"""
    return np.array([1.0 if i == j else 2.0 for i, j in component_pairs(dim)])


@dataclass(frozen=True, eq=False)
class QTensorField:
    mesh: object
    components: np.ndarray  # shape (d(d+1)/2,) + mesh.shape

    def __post_init__(self):
        expected = (len(component_pairs(self.mesh.dim)),) + self.mesh.shape
        if self.components.shape != expected:
            raise MeshError(f"tensor field shape {self.components.shape} does not match {expected}")

    @property
    def dim(self):
        return self.mesh.dim

    @property
    def pairs(self):
        return component_pairs(self.dim)

    @property
    def weights(self):
        return frobenius_weights(self.dim)

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros((len(component_pairs(mesh.dim)),) + mesh.shape))

    @classmethod
    def from_full(cls, mesh, full, atol=0.0):
        """由完整 d×d×grid 数组构造；非对称输入报错"""
        full = np.asarray(full, dtype=float)
        if full.shape != (mesh.dim, mesh.dim) + mesh.shape:
            raise MeshError(f"full tensor shape {full.shape} does not match mesh")
        asym = np.abs(full - np.swapaxes(full, 0, 1)).max()
        if asym > atol:
            raise MeshError(f"tensor field is not symmetric (max |Q - Q^T| = {asym:.3e})")
        components = np.stack([full[i, j] for i, j in component_pairs(mesh.dim)])
        return cls(mesh, components)

    @classmethod
    def random(cls, mesh, rng, amplitude=1.0):
        """随机的对称无迹场，每个节点 |Q|_F <= amplitude，边界为0"""
        d = mesh.dim
        full = rng.uniform(-1.0, 1.0, size=(d, d) + mesh.shape)
        full = 0.5 * (full + np.swapaxes(full, 0, 1))
        trace = np.einsum('ii...->...', full)
        for i in range(d):
            full[i, i] -= trace / d
        norm = np.sqrt(np.einsum('ij...,ij...->...', full, full))
        scale = rng.uniform(0.0, amplitude, size=mesh.shape) / np.maximum(norm, 1e-300)
        full = full * scale
        field = cls.from_full(mesh, full)
        return field.with_zero_boundary()

    def full(self):
        """完整 d×d 张量数组 (d, d) + grid"""
        d = self.dim
        out = np.empty((d, d) + self.mesh.shape)
        for n, (i, j) in enumerate(self.pairs):
            out[i, j] = self.components[n]
            out[j, i] = self.components[n]
        return out

    def component(self, i, j):
        return ScalarGridField(self.mesh, self.components[component_index(self.dim, i, j)])

    def with_zero_boundary(self):
        components = np.zeros_like(self.components)
        components[(slice(None),) + self.mesh.interior] = self.components[(slice(None),) + self.mesh.interior]
        return QTensorField(self.mesh, components)

    def node_values(self, index):
        """单个节点上的完整矩阵"""
        return self.full()[(slice(None), slice(None)) + tuple(index)]

    def _check_mesh(self, other):
        if other.mesh != self.mesh:
            raise MeshError("tensor fields live on different meshes")

    def __add__(self, other):
        self._check_mesh(other)
        return QTensorField(self.mesh, self.components + other.components)

    def __sub__(self, other):
        self._check_mesh(other)
        return QTensorField(self.mesh, self.components - other.components)

    def __mul__(self, scalar):
        return QTensorField(self.mesh, self.components * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return QTensorField(self.mesh, -self.components)


@dataclass(frozen=True)
class ModelParams:
    a: float
    b: float
    c: float
    L1: float
    L2: float = 0.0
    L3: float = 0.0
    kappa: float = 0.0
    c_star: float = 1.0
    eta: float = None

    def __post_init__(self):
        problems = []
        if not self.c > 0:
            problems.append(f"model.c must be > 0, got {self.c}")
        if not self.L1 > 0:
            problems.append(f"model.L1 must be > 0, got {self.L1}")
        if not self.b >= 0:
            problems.append(f"model.b must be >= 0, got {self.b}")
        if not self.kappa >= 0:
            problems.append(f"model.kappa must be >= 0, got {self.kappa}")
        if self.eta is not None and not self.eta > 0:
            problems.append(f"model.eta must be > 0, got {self.eta}")
        if problems:
            raise ConfigError(problems)

    @property
    def L23(self):
        """交叉导数项系数 (L2 + L3) / 2"""
        return 0.5 * (self.L2 + self.L3)

    @property
    def L(self):
        """MBP格式的扩散系数 L1 + (L2 + L3) / 2"""
        return self.L1 + self.L23

    def with_updates(self, **changes):
        return replace(self, **changes)
