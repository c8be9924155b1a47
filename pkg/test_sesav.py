import math

import numpy as np
import pytest

from config import current_config
from nematic.models.experiment import SolverSettings
from nematic.models.mesh import build_mesh
from nematic.models.qtensor import ModelParams, QTensorField
from nematic.models.state import AdaptiveController, SavState
from nematic.services.bulk_service import BulkService
from nematic.services.preset_service import PresetService
from nematic.services.scheme_service import SchemeService
from nematic.utils.errors import BlowUpError, ConfigError, MeshError

SCHEMES = ('sesav1', 'sesav2', 'mbp_sesav1', 'mbp_sesav2')


def coupled_params(params):
    """在 2D 中加入交叉导数项 (L2 + L3 != 0)"""
    return params.with_updates(L1=1e-2, L2=8e-3, L3=2e-3)


def energy_of(report, scheme, params):
    return BulkService.total_energy(report.state.Q, report.state.s, params, scheme.startswith('mbp'))


def run_steps(scheme, state, tau, params, steps, settings=None):
    reports = []
    for _ in range(steps):
        report = SchemeService.step(scheme, state, tau, params, settings)
        reports.append(report)
        state = report.state
    return reports


def test_g_value(mesh2d, rng, hole_params):
    Q = QTensorField.random(mesh2d, rng, 0.8)
    state = SchemeService.initial_state(Q, hole_params)
    assert state.t == 0.0
    assert SchemeService.g_value(Q, state.s, hole_params) == 1.0
    assert SchemeService.g_value(Q, state.s - 1.0, hole_params) == pytest.approx(math.exp(-1.0), rel=1e-14)
    with pytest.raises(BlowUpError):
        SchemeService.g_value(Q, state.s + 800.0, hole_params)


@pytest.mark.parametrize('scheme', SCHEMES)
def test_zero_state_is_fixed_point(scheme, mesh2d, hole_params):
    state = SavState(QTensorField.zeros(mesh2d), 0.0)
    report = SchemeService.step(scheme, state, 0.1, hole_params)
    assert np.all(report.state.Q.components == 0.0)
    assert report.state.s == 0.0
    assert report.state.t == pytest.approx(0.1)
    assert report.energy == 0.0
    assert not report.clamped


@pytest.mark.parametrize('scheme', SCHEMES)
@pytest.mark.parametrize('tau', [1e-3, 1e-1, 10.0])
def test_energy_is_nonincreasing_2d(scheme, tau, mesh2d, rng, hole_params):
    params = coupled_params(hole_params)
    state = SchemeService.initial_state(QTensorField.random(mesh2d, rng, 0.9), params)
    energy = BulkService.total_energy(state.Q, state.s, params, scheme.startswith('mbp'))
    for report in run_steps(scheme, state, tau, params, 5):
        assert report.energy == pytest.approx(energy_of(report, scheme, params), rel=1e-14, abs=1e-14)
        assert report.energy <= energy + current_config.ENERGY_TOL * max(1.0, abs(energy))
        # 截断下界
        floor = -params.c_star - BulkService.elastic_energy(report.state.Q, params, scheme.startswith('mbp'))
        assert report.state.s >= floor
        energy = report.energy


@pytest.mark.parametrize('scheme', SCHEMES)
def test_energy_is_nonincreasing_3d(scheme, mesh3d, rng, orient_params):
    params = orient_params if scheme.startswith('mbp') else orient_params.with_updates(L2=2e-3, L3=4e-3)
    state = SchemeService.initial_state(QTensorField.random(mesh3d, rng, 1.0), params)
    energy = BulkService.total_energy(state.Q, state.s, params, scheme.startswith('mbp'))
    for report in run_steps(scheme, state, 0.5, params, 4):
        assert report.energy <= energy + current_config.ENERGY_TOL * max(1.0, abs(energy))
        energy = report.energy


@pytest.mark.parametrize('tau', [1e-3, 1.0, 100.0])
def test_mbp_sesav1_keeps_maximum_bound(tau, mesh2d, rng, hole_params):
    state = SchemeService.initial_state(QTensorField.random(mesh2d, rng, hole_params.eta), hole_params)
    g_star = SchemeService.g_star(state, hole_params, laplacian_form=True)
    for report in run_steps('mbp_sesav1', state, tau, hole_params, 10):
        assert report.sup_norm <= hole_params.eta + current_config.MBP_TOL
        assert 0.0 < report.g_value <= g_star * (1.0 + 1e-12)


def test_mbp_sesav2_keeps_maximum_bound_below_step_limit(mesh2d, rng, hole_params):
    state = SchemeService.initial_state(QTensorField.random(mesh2d, rng, hole_params.eta), hole_params)
    g_star = SchemeService.g_star(state, hole_params, laplacian_form=True)
    tau = SchemeService.mbp_tau_max(hole_params, mesh2d.h, 2, g_star)
    for _ in range(10):
        report = SchemeService.mbp_sesav2_step(state, tau, hole_params, g_star=g_star)
        assert report.sup_norm <= hole_params.eta + current_config.MBP_TOL
        state = report.state


@pytest.mark.parametrize('first, second', [('sesav1', 'mbp_sesav1'), ('sesav2', 'mbp_sesav2')])
def test_mbp_path_matches_general_path(first, second, mesh2d, rng, hole_params):
    state = SchemeService.initial_state(QTensorField.random(mesh2d, rng, 0.9), hole_params)
    a = SchemeService.step(first, state, 0.05, hole_params)
    b = SchemeService.step(second, state, 0.05, hole_params)
    np.testing.assert_allclose(a.state.Q.components, b.state.Q.components, atol=1e-11)
    assert a.state.s == pytest.approx(b.state.s, abs=1e-11)
    assert a.energy == pytest.approx(b.energy, abs=1e-11)


@pytest.mark.parametrize('scheme', ('sesav1', 'sesav2'))
def test_trace_is_preserved_with_cross_term(scheme, mesh2d, rng, hole_params):
    params = coupled_params(hole_params)
    state = SchemeService.initial_state(QTensorField.random(mesh2d, rng, 0.9), params)
    for report in run_steps(scheme, state, 0.01, params, 100):
        state = report.state
    assert np.abs(BulkService.trace_field(state.Q).values).max() <= 1e-10


@pytest.mark.parametrize('scheme', SCHEMES)
@pytest.mark.parametrize('dim, M', [(2, 8), (3, 6)])
def test_step_matches_dense_oracle(scheme, dim, M, rng, hole_params, orient_params):
    mesh = build_mesh(dim, M, 1.0)
    if dim == 2:
        params = hole_params if scheme.startswith('mbp') else coupled_params(hole_params)
    else:
        params = orient_params if scheme.startswith('mbp') else orient_params.with_updates(L2=2e-3, L3=4e-3)
    state = SchemeService.initial_state(QTensorField.random(mesh, rng, 0.9), params)
    fast = SchemeService.step(scheme, state, 0.05, params, SolverSettings(tol=1e-13))
    dense = SchemeService.step(scheme, state, 0.05, params, SolverSettings(backend='dense'))
    np.testing.assert_allclose(fast.state.Q.components, dense.state.Q.components, atol=1e-10)
    assert fast.state.s == pytest.approx(dense.state.s, abs=1e-10)


def test_second_order_and_first_order_agree_as_tau_shrinks():
    mesh = build_mesh(2, 16, 1.0)
    params = PresetService.preset_params('convergence2d').with_updates(eta=1.5)
    state = SchemeService.initial_state(PresetService.preset_field('convergence2d', mesh), params)
    gaps = []
    for tau in (0.02, 0.01, 0.005):
        first = SchemeService.sesav1_step(state, tau, params).state
        second = SchemeService.sesav2_step(state, tau, params).state
        gaps.append(BulkService.tensor_l2_norm(second.Q - first.Q))
    assert gaps[1] <= 0.6 * gaps[0]
    assert gaps[2] <= 0.6 * gaps[1]


def test_clamp_s(mesh2d, rng, hole_params):
    Q = QTensorField.random(mesh2d, rng, 0.5)
    floor = -hole_params.c_star - BulkService.elastic_energy(Q, hole_params)
    assert SchemeService.clamp_s(floor - 1.0, Q, hole_params) == (floor, True)
    assert SchemeService.clamp_s(floor + 1.0, Q, hole_params) == (floor + 1.0, False)


def test_mbp_tau_max_examples():
    params = ModelParams(a=-4.0, b=0.0, c=4.0, L1=1e-3, kappa=8.0)
    h = 1.0 / 80
    assert SchemeService.mbp_tau_max(params, h, 2, math.e) == pytest.approx(1.0 / (4 * math.e + 12.8), rel=1e-14)
    assert SchemeService.mbp_tau_max(params, h, 2, math.e) == pytest.approx(0.0422, abs=1e-4)
    no_kappa = params.with_updates(kappa=0.0)
    assert SchemeService.mbp_tau_max(no_kappa, h, 3, 1.0) == pytest.approx(h ** 2 / (4 * 1e-3), rel=1e-14)
    assert SchemeService.mbp_tau_max(params.with_updates(kappa=16.0), h, 2, math.e) < \
        SchemeService.mbp_tau_max(params, h, 2, math.e)
    assert SchemeService.mbp_tau_max(params, h / 2, 2, math.e) < SchemeService.mbp_tau_max(params, h, 2, math.e)
    with pytest.raises(MeshError):
        SchemeService.mbp_tau_max(params, 0.0, 2, math.e)


def test_adaptive_tau():
    controller = AdaptiveController(5e-4, 0.05, 1e5, prev_energy=1.0)
    assert SchemeService.adaptive_tau(controller, 1.0, 0.01) == 0.05
    assert controller.prev_energy == 1.0
    assert SchemeService.adaptive_tau(controller, -1e6, 0.01) == 5e-4
    assert controller.prev_energy == -1e6
    controller = AdaptiveController(5e-4, 0.05, 1e5, prev_energy=0.0)
    tau = SchemeService.adaptive_tau(controller, -1e-4, 0.01)
    assert tau == pytest.approx(0.05 / math.sqrt(1.0 + 1e5 * 1e-4), rel=1e-12)
    with pytest.raises(MeshError):
        SchemeService.adaptive_tau(controller, 0.0, 0.0)


def test_adaptive_controller_validation():
    with pytest.raises(ConfigError):
        AdaptiveController(0.1, 0.01, 1.0)
    with pytest.raises(ConfigError):
        AdaptiveController(0.0, 0.01, 1.0)
    with pytest.raises(ConfigError):
        AdaptiveController(0.001, 0.01, -1.0)


def test_mbp_regime_is_checked(mesh2d, mesh3d, hole_params, orient_params):
    with pytest.raises(ConfigError):
        SchemeService.mbp_sesav1_step(SavState(QTensorField.zeros(mesh2d), 0.0), 0.1,
                                      hole_params.with_updates(b=1.0))
    with pytest.raises(ConfigError):
        SchemeService.mbp_sesav2_step(SavState(QTensorField.zeros(mesh3d), 0.0), 0.1,
                                      orient_params.with_updates(L2=1e-3))


def test_rejects_nonpositive_tau_and_unknown_scheme(mesh2d, hole_params):
    state = SavState(QTensorField.zeros(mesh2d), 0.0)
    with pytest.raises(MeshError):
        SchemeService.sesav1_step(state, 0.0, hole_params)
    with pytest.raises(MeshError):
        SchemeService.sesav2_step(state, -0.1, hole_params)
    with pytest.raises(ConfigError):
        SchemeService.step('sesav3', state, 0.1, hole_params)
