import os

# 必须在导入 config 之前设置
os.environ['NEMATIC_ENV'] = 'testing'

import numpy as np
import pytest

from nematic.models.mesh import build_mesh
from nematic.models.qtensor import ModelParams, QTensorField, component_pairs
from nematic.services.bulk_service import BulkService


@pytest.fixture
def rng():
    return np.random.default_rng(20240521)


@pytest.fixture
def mesh2d():
    return build_mesh(2, 8, 1.0)


@pytest.fixture
def mesh3d():
    return build_mesh(3, 6, 1.0)


@pytest.fixture
def hole_params():
    """hole2d 的体参数，C* 取下界默认值"""
    base = ModelParams(a=-4.0, b=0.0, c=4.0, L1=4.5e-3)
    eta = BulkService.eta_bound(base, 0.0, 2)
    return base.with_updates(kappa=BulkService.kappa_min(base, eta, 2), eta=eta,
                             c_star=BulkService.c_star_default(base, eta, 2, 4.0))


@pytest.fixture
def orient_params():
    base = ModelParams(a=-1.25, b=0.25, c=1.0, L1=1e-3)
    eta = BulkService.eta_bound(base, 0.0, 3)
    return base.with_updates(kappa=BulkService.kappa_default(base, eta, 3), eta=eta,
                             c_star=BulkService.c_star_default(base, eta, 3, 1.0))


def random_symmetric(mesh, rng, scale=1.0):
    """随机对称（不要求无迹）场，边界为0"""
    n = len(component_pairs(mesh.dim))
    return QTensorField(mesh, scale * rng.standard_normal((n,) + mesh.shape)).with_zero_boundary()


@pytest.fixture
def make_symmetric(rng):
    return lambda mesh, scale=1.0: random_symmetric(mesh, rng, scale)
