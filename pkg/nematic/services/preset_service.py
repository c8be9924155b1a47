import logging
import math
from tokenize import TokenError

import numpy as np
import sympy
from sympy.parsing.sympy_parser import parse_expr

from nematic.models.experiment import NORMALIZATIONS
from nematic.models.qtensor import ModelParams, QTensorField
from nematic.models.state import SavState
from nematic.services.bulk_service import BulkService
from nematic.utils.errors import ConfigError

logger = logging.getLogger(__name__)

# 与配置文件同结构的预设参数
PRESETS = {
    'convergence2d': {
        'mesh': {'dim': 2, 'M': 128, 'domain_length': 1.0},
        'model': {'a': -0.25, 'b': 1.0, 'c': 1.0, 'L1': 1.0e-3, 'L2': 0.0, 'L3': 0.0,
                  'kappa': 2.0, 'c_star': 1.0},
        'scheme': {'name': 'sesav2'},
        'time': {'T': 1.0, 'tau': 1.0 / 512},
        'initial': {'kind': 'preset'},
    },
    'hole2d': {
        'mesh': {'dim': 2, 'M': 80, 'domain_length': 2.0},
        'model': {'a': -4.0, 'b': 0.0, 'c': 4.0, 'L1': 4.5e-3, 'L2': 0.0, 'L3': 0.0,
                  'kappa': 8.0, 'c_star': 'auto'},
        'scheme': {'name': 'mbp_sesav2'},
        'time': {'T': 2.0, 'tau': 0.01},
        'initial': {'kind': 'preset'},
    },
    'orient3d': {
        'mesh': {'dim': 3, 'M': 100, 'domain_length': 2.0},
        'model': {'a': -1.25, 'b': 0.25, 'c': 1.0, 'L1': 1.0e-3, 'L2': 0.0, 'L3': 0.0,
                  'kappa': 6.0, 'c_star': 'auto'},
        'scheme': {'name': 'mbp_sesav2'},
        'time': {'T': 30.0, 'tau_min': 5.0e-4, 'tau_max': 0.05, 'alpha': 1.0e5},
        'initial': {'kind': 'preset'},
    },
}


def _convergence2d_director(x, y):
    value = np.sin(2 * math.pi * x) * np.sin(2 * math.pi * y)
    return [value, value]


def _hole2d_director(x, y):
    return [x * (2 - x) * y * (2 - y) / 16.0, np.sin(math.pi * x) * np.sin(math.pi * y)]


def _orient3d_director(x, y, z):
    def inside(box):
        (x0, x1), (y0, y1), (z0, z1) = box
        return (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1) & (z >= z0) & (z <= z1)

    first = inside(((1.15, 1.65), (0.75, 1.25), (0.35, 0.85)))
    second = inside(((0.35, 0.85), (0.75, 1.25), (1.15, 1.65))) & ~first
    rest = ~(first | second)
    return [first.astype(float), rest.astype(float), second.astype(float)]


# (指向矢函数, 归一化方式)
_PRESET_DIRECTORS = {
    'convergence2d': (_convergence2d_director, 'none'),
    'hole2d': (_hole2d_director, 'l2'),
    'orient3d': (_orient3d_director, 'node'),
}


class PresetService:
    @staticmethod
    def preset_names():
        return list(PRESETS)

    @staticmethod
    def preset_sections(name):
        """预设的配置段（深拷贝）"""
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose one of {', '.join(PRESETS)}")
        return {section: dict(values) for section, values in PRESETS[name].items()}

    @staticmethod
    def tensor_from_director(mesh, director, normalize='node'):
        """由指向矢构造无迹 Q，边界置零

        normalize='node'：Q = n n^T / |n|^2 - I/d；
        normalize='none'：Q = n n^T - |n|^2 I/d；
        normalize='l2'：把 'none' 的结果除以离散 L2 范数 ||n||_h^2，|n| 小的区域保持近各向同性。
        """
        if normalize not in NORMALIZATIONS:
            raise ConfigError(f"initial.normalize must be one of {', '.join(NORMALIZATIONS)}, got {normalize!r}")
        d = mesh.dim
        n = np.stack([np.broadcast_to(np.asarray(c, dtype=float), mesh.shape) for c in director])
        norm_sq = np.sum(n ** 2, axis=0)
        full = np.einsum('i...,j...->ij...', n, n)
        if normalize == 'node':
            safe = np.where(norm_sq > 0, norm_sq, 1.0)
            full = full / safe
            trace_part = np.where(norm_sq > 0, 1.0 / d, 0.0)
        else:
            trace_part = norm_sq / d
        for i in range(d):
            full[i, i] -= trace_part
        if normalize == 'l2':
            total = float(np.sum(norm_sq[mesh.interior]) * mesh.cell_volume)
            if total > 0:
                full = full / total
        return QTensorField.from_full(mesh, full).with_zero_boundary()

    @staticmethod
    def preset_field(name, mesh):
        """预设初值场 Q0"""
        if name not in _PRESET_DIRECTORS:
            raise ConfigError(f"unknown preset {name!r}; choose one of {', '.join(PRESETS)}")
        expected = PRESETS[name]['mesh']['dim']
        if mesh.dim != expected:
            raise ConfigError(f"preset {name!r} is {expected}D, mesh is {mesh.dim}D")
        logger.info(f"Building {name} initial data on a {mesh.dim}D mesh with M={mesh.M}")
        director, normalize = _PRESET_DIRECTORS[name]
        return PresetService.tensor_from_director(mesh, director(*mesh.coordinates()), normalize)

    @staticmethod
    def preset_params(name, q0_sup=0.0):
        """预设模型参数；c_star = 'auto' 时取预设区域上的能量下界"""
        sections = PresetService.preset_sections(name)
        model, mesh = sections['model'], sections['mesh']
        c_star = model.pop('c_star', 'auto')
        params = ModelParams(**model)
        if c_star == 'auto':
            eta = BulkService.eta_bound(params, q0_sup, mesh['dim'])
            c_star = BulkService.c_star_default(params, eta, mesh['dim'], mesh['domain_length'] ** mesh['dim'])
        return params.with_updates(c_star=float(c_star))

    @staticmethod
    def preset_initial(name, mesh, params=None):
        """预设初始状态，s^0 = E_1h[Q^0]"""
        Q0 = PresetService.preset_field(name, mesh)
        params = params or PresetService.preset_params(name)
        return SavState(Q=Q0, s=BulkService.bulk_energy(Q0, params), t=0.0)

    @staticmethod
    def random_initial(mesh, seed, amplitude):
        """随机容许初值"""
        return QTensorField.random(mesh, np.random.default_rng(seed), amplitude)

    @staticmethod
    def director_initial(mesh, expressions, normalize='node'):
        """由 x, y, z 的表达式构造指向矢初值"""
        if len(expressions) != mesh.dim:
            raise ConfigError(f"initial.director needs {mesh.dim} expressions, got {len(expressions)}")
        symbols = sympy.symbols('x y z')[:mesh.dim]
        names = {str(s): s for s in symbols}
        coordinates = mesh.coordinates()
        director = []
        for text in expressions:
            try:
                expr = parse_expr(str(text), local_dict=names)
            except (SyntaxError, TypeError, TokenError, sympy.SympifyError) as e:
                raise ConfigError(f"initial.director: cannot parse {text!r}: {e}")
            unknown = {str(s) for s in expr.free_symbols} - set(names)
            if unknown:
                raise ConfigError(f"initial.director: unknown symbols {sorted(unknown)} in {text!r}")
            director.append(sympy.lambdify(symbols, expr, 'numpy')(*coordinates))
        return PresetService.tensor_from_director(mesh, director, normalize)

    @staticmethod
    def build_initial(initial, mesh, preset=None):
        """按 [initial] 段构造 Q0"""
        if initial.kind == 'preset':
            name = initial.preset or preset
            if name is None:
                raise ConfigError("initial.kind = 'preset' needs a preset name")
            return PresetService.preset_field(name, mesh)
        if initial.kind == 'random':
            return PresetService.random_initial(mesh, initial.seed, initial.amplitude)
        if initial.kind == 'director':
            return PresetService.director_initial(mesh, initial.director, initial.normalize)
        return QTensorField.zeros(mesh)
