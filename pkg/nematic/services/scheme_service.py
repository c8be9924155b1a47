import logging
import math

from config import current_config
from nematic.models.experiment import SolverSettings
from nematic.models.state import SavState, StepReport
from nematic.services.bulk_service import BulkService
from nematic.services.solver_service import CoupledOperator, SolverService
from nematic.utils.errors import BlowUpError, ConfigError, MeshError

logger = logging.getLogger(__name__)


class SchemeService:
    @staticmethod
    def g_value(Q, s, params):
        """g(Q, s) = exp(s - E_1h[Q])"""
        exponent = s - BulkService.bulk_energy(Q, params)
        if abs(exponent) > current_config.G_EXPONENT_LIMIT:
            logger.error(f"g exponent {exponent:.6g} outside +/-{current_config.G_EXPONENT_LIMIT}")
            raise BlowUpError(f"g = exp({exponent:.6g}) is out of range")
        return math.exp(exponent)

    @staticmethod
    def initial_state(Q0, params):
        """s^0 = E_1h[Q^0], t = 0"""
        return SavState(Q=Q0, s=BulkService.bulk_energy(Q0, params), t=0.0)

    @staticmethod
    def g_star(state0, params, laplacian_form=False):
        """G* = exp(E_h[Q^0, E_1h[Q^0]] + C*)"""
        energy = BulkService.total_energy(state0.Q, state0.s, params, laplacian_form)
        exponent = energy + params.c_star
        if exponent > current_config.G_EXPONENT_LIMIT:
            raise BlowUpError(f"G* = exp({exponent:.6g}) is out of range")
        return math.exp(exponent)

    @staticmethod
    def clamp_s(s_tilde, Q, params, laplacian_form=False):
        """s = max{s~, -C* - E_el[Q]}，返回 (s, 是否截断)"""
        floor = -params.c_star - BulkService.elastic_energy(Q, params, laplacian_form)
        if s_tilde < floor:
            return floor, True
        return s_tilde, False

    @staticmethod
    def check_mbp_regime(params, dim):
        """MBP 格式只适用于 d=2 且 b=0，或 d=3 且 L2+L3=0"""
        if dim == 2 and params.b != 0.0:
            raise ConfigError(f"MBP schemes in 2D require b = 0, got b = {params.b}")
        if dim == 3 and params.L2 + params.L3 != 0.0:
            raise ConfigError(f"MBP schemes in 3D require L2 + L3 = 0, got {params.L2 + params.L3}")

    @staticmethod
    def mbp_tau_max(params, h, d, g_star_upper):
        """(kappa G*/2 + 2^{d-1} L/h^2)^{-1}"""
        if not h > 0 or not g_star_upper > 0:
            raise MeshError("mbp_tau_max needs h > 0 and G* > 0")
        return 1.0 / (0.5 * params.kappa * g_star_upper + 2 ** (d - 1) * params.L / h ** 2)

    @staticmethod
    def adaptive_tau(controller, energy_now, tau_prev):
        """tau = max{tau_min, tau_max / sqrt(1 + alpha (d_t E)^2)}"""
        if not tau_prev > 0:
            raise MeshError(f"tau_prev must be > 0, got {tau_prev}")
        prev = energy_now if controller.prev_energy is None else controller.prev_energy
        rate = (energy_now - prev) / tau_prev
        controller.prev_energy = energy_now
        return max(controller.tau_min, controller.tau_max / math.sqrt(1.0 + controller.alpha * rate ** 2))

    @staticmethod
    def _report(Q, s, t, tau, g, clamped, params, laplacian_form):
        energy = BulkService.total_energy(Q, s, params, laplacian_form)
        if clamped:
            logger.warning(f"s clamped to the lower bound at t={t:.6g}")
        return StepReport(
            state=SavState(Q=Q, s=s, t=t),
            tau_used=tau,
            energy=energy,
            sup_norm=BulkService.frobenius_sup_norm(Q),
            g_value=g,
            clamped=clamped,
        )

    @staticmethod
    def _first_order(state, tau, params, settings, mbp):
        if not tau > 0:
            raise MeshError(f"time step must be > 0, got {tau}")
        settings = settings or SolverSettings()
        L1, L23 = (params.L, 0.0) if mbp else (params.L1, params.L23)
        Q, s = state.Q, state.s

        g = SchemeService.g_value(Q, s, params)
        f = BulkService.bulk_force(Q, params)
        alpha = 1.0 / tau + params.kappa * g
        rhs = alpha * Q + g * f
        Q_new = SolverService.solve_implicit(rhs, alpha, L1, L23, settings)

        s_tilde = s - g * BulkService.tensor_inner(f, Q_new - Q)
        s_new, clamped = SchemeService.clamp_s(s_tilde, Q_new, params, mbp)
        return SchemeService._report(Q_new, s_new, state.t + tau, tau, g, clamped, params, mbp)

    @staticmethod
    def _second_order(state, tau, params, settings, mbp):
        if not tau > 0:
            raise MeshError(f"time step must be > 0, got {tau}")
        settings = settings or SolverSettings()
        L1, L23 = (params.L, 0.0) if mbp else (params.L1, params.L23)
        Q, s = state.Q, state.s

        # 半步预估，与校正步同一格式族
        predictor = SchemeService._first_order(state, 0.5 * tau, params, settings, mbp).state
        Q_star = predictor.Q
        g = SchemeService.g_value(Q_star, predictor.s, params)
        f_star = BulkService.bulk_force(Q_star, params)

        alpha = 2.0 / tau + params.kappa * g
        op = CoupledOperator(alpha, L1, L23, Q.mesh)
        # (2/tau - kappa g)Q + L1 Δ Q + L23 D Q = (4/tau) Q - op(Q)
        rhs_components = (4.0 / tau) * Q.components - op.apply_values(Q.components)
        rhs = type(Q)(Q.mesh, rhs_components) + (2.0 * g) * (params.kappa * Q_star + f_star)
        Q_new = SolverService.solve_implicit(rhs, alpha, L1, L23, settings)

        dQ = Q_new - Q
        Q_half = 0.5 * (Q_new + Q)
        s_tilde = (s - g * BulkService.tensor_inner(f_star, dQ)
                   + params.kappa * g * BulkService.tensor_inner(Q_half - Q_star, dQ))
        s_new, clamped = SchemeService.clamp_s(s_tilde, Q_new, params, mbp)
        return SchemeService._report(Q_new, s_new, state.t + tau, tau, g, clamped, params, mbp)

    @staticmethod
    def sesav1_step(state, tau, params, settings=None):
        """一阶 sESAV"""
        return SchemeService._first_order(state, tau, params, settings, mbp=False)

    @staticmethod
    def sesav2_step(state, tau, params, settings=None):
        """二阶 sESAV (Crank-Nicolson)"""
        return SchemeService._second_order(state, tau, params, settings, mbp=False)

    @staticmethod
    def mbp_sesav1_step(state, tau, params, settings=None):
        """保最大界的一阶格式，空间算子为 L Δ_h"""
        SchemeService.check_mbp_regime(params, state.Q.dim)
        return SchemeService._first_order(state, tau, params, settings, mbp=True)

    @staticmethod
    def mbp_sesav2_step(state, tau, params, settings=None, g_star=None):
        SchemeService.check_mbp_regime(params, state.Q.dim)
        if g_star is not None:
            tau_max = SchemeService.mbp_tau_max(params, state.Q.mesh.h, state.Q.dim, g_star)
            if tau > tau_max:
                logger.warning(f"tau={tau:.6g} exceeds the MBP bound {tau_max:.6g}; only energy stability holds")
        return SchemeService._second_order(state, tau, params, settings, mbp=True)

    @staticmethod
    def step(scheme, state, tau, params, settings=None):
        """按名称分派"""
        steppers = {
            'sesav1': SchemeService.sesav1_step,
            'sesav2': SchemeService.sesav2_step,
            'mbp_sesav1': SchemeService.mbp_sesav1_step,
            'mbp_sesav2': SchemeService.mbp_sesav2_step,
        }
        if scheme not in steppers:
            raise ConfigError(f"unknown scheme {scheme!r}")
        return steppers[scheme](state, tau, params, settings)
