import logging
import math

import numpy as np

from config import current_config
from nematic.models.experiment import RateRow, RateTable
from nematic.models.mesh import build_mesh
from nematic.models.qtensor import ModelParams
from nematic.models.state import AdaptiveController, DiagnosticsRecord, SavState
from nematic.services.bulk_service import BulkService, eigen_gap_values
from nematic.services.mesh_service import MeshService
from nematic.services.preset_service import PresetService
from nematic.services.scheme_service import SchemeService
from nematic.utils.errors import ConfigError, InvariantViolation

logger = logging.getLogger(__name__)


def _is_integer_ratio(value, tol=1e-9):
    return abs(value - round(value)) <= tol * max(1.0, abs(value)) and round(value) >= 1


def _rate(prev_error, error, prev_resolution, resolution):
    if prev_error is None or prev_error <= 0 or error <= 0:
        return None
    return math.log(prev_error / error) / math.log(prev_resolution / resolution)


def _rate_table(kind, resolutions, errors):
    rows = []
    for k, (resolution, (e_grad, e_l2, e_s)) in enumerate(zip(resolutions, errors)):
        if k == 0:
            rows.append(RateRow(resolution, e_grad, e_l2, e_s))
            continue
        prev_res = resolutions[k - 1]
        p_grad, p_l2, p_s = errors[k - 1]
        rows.append(RateRow(
            resolution, e_grad, e_l2, e_s,
            rate_grad=_rate(p_grad, e_grad, prev_res, resolution),
            rate_L2=_rate(p_l2, e_l2, prev_res, resolution),
            rate_s=_rate(p_s, e_s, prev_res, resolution),
        ))
        logger.info(f"{kind}={resolution:.6g}: errors {e_grad:.3e} {e_l2:.3e} {e_s:.3e}")
    return RateTable(kind=kind, rows=tuple(rows))


class ExperimentService:
    @staticmethod
    def resolve_model(raw, mesh, Q0, scheme):
        """补全模型参数默认值：eta、kappa、C*

        raw 为 [model] 段字典；返回 (ModelParams, 警告列表)。
        """
        warnings = []
        base = ModelParams(a=raw['a'], b=raw.get('b', 0.0), c=raw['c'], L1=raw['L1'],
                           L2=raw.get('L2', 0.0), L3=raw.get('L3', 0.0))
        eta = raw.get('eta')
        if eta is None:
            eta = BulkService.eta_bound(base, BulkService.frobenius_sup_norm(Q0), mesh.dim)

        kappa_min = BulkService.kappa_min(base, eta, mesh.dim)
        kappa = raw.get('kappa')
        if kappa is None:
            kappa = BulkService.kappa_default(base, eta, mesh.dim)

        c_star_floor = BulkService.c_star_default(base, eta, mesh.dim, mesh.volume)
        c_star = raw.get('c_star', 'auto')
        if c_star == 'auto':
            c_star = c_star_floor
        elif c_star < c_star_floor:
            message = (f"c_star={c_star:.6g} is below the bulk energy lower bound {c_star_floor:.6g}; "
                       f"using {c_star_floor:.6g}")
            logger.warning(message)
            warnings.append(message)
            c_star = c_star_floor

        params = base.with_updates(kappa=float(kappa), c_star=float(c_star), eta=float(eta))
        if scheme in ('mbp_sesav1', 'mbp_sesav2'):
            SchemeService.check_mbp_regime(params, mesh.dim)
            if params.kappa < kappa_min:
                message = (f"kappa={params.kappa:.6g} is below kappa_min={kappa_min:.6g}; "
                           f"energy stability holds but the MBP is not guaranteed")
                logger.warning(message)
                warnings.append(message)
        return params, warnings

    @staticmethod
    def prepare(config):
        """构造网格、初值与完整参数"""
        mesh = build_mesh(config.dim, config.M, config.domain_length)
        Q0 = PresetService.build_initial(config.initial, mesh, config.preset)
        params = config.model
        if params.eta is None:
            params = params.with_updates(eta=BulkService.eta_bound(params, BulkService.frobenius_sup_norm(Q0), mesh.dim))
        if config.is_mbp:
            SchemeService.check_mbp_regime(params, mesh.dim)
        return mesh, Q0, params

    @staticmethod
    def simulate(config):
        """逐步推进，产出 (SavState, DiagnosticsRecord)；第 0 项为初始状态"""
        mesh, Q0, params = ExperimentService.prepare(config)
        mbp = config.is_mbp
        state = SchemeService.initial_state(Q0, params)
        energy = BulkService.total_energy(Q0, state.s, params, mbp)
        # G* 只约束 MBP 格式的步长
        tau_bound = math.inf
        if mbp:
            g_star = config.g_star or SchemeService.g_star(state, params, mbp)
            tau_bound = SchemeService.mbp_tau_max(params, mesh.h, mesh.dim, g_star)
        yield state, DiagnosticsRecord(0, 0.0, 0.0, energy, BulkService.frobenius_sup_norm(Q0), state.s,
                                       SchemeService.g_value(Q0, state.s, params), False)

        check = config.check_invariants
        mbp_checked = mbp and params.kappa >= BulkService.kappa_min(params, params.eta, mesh.dim)
        warned_tau = False

        controller = None
        if config.adaptive is not None:
            spec = config.adaptive
            controller = AdaptiveController(spec.tau_min, spec.tau_max, spec.alpha, prev_energy=energy)
            tau = spec.tau_min
        else:
            tau = config.tau

        T = config.T
        n_steps = None if controller is not None else max(1, math.ceil(T / tau - 1e-9))
        step = 0
        while (step < n_steps) if n_steps is not None else (T - state.t > 1e-12 * T):
            if controller is not None:
                tau_n = max(controller.tau_min, min(tau, T - state.t))
            elif step == n_steps - 1:
                # 最后一步落在 T 上
                last = T - (n_steps - 1) * tau
                tau_n = tau if abs(last - tau) <= 1e-9 * tau else last
            else:
                tau_n = tau
            if config.scheme == 'mbp_sesav2' and tau_n > tau_bound and not warned_tau:
                logger.warning(f"tau={tau_n:.6g} exceeds the MBP bound {tau_bound:.6g}; only energy stability holds")
                warned_tau = True

            report = SchemeService.step(config.scheme, state, tau_n, params, config.solver)
            step += 1
            record = DiagnosticsRecord.from_report(step, report)
            logger.debug(f"step {step}: t={record.time:.6g} tau={tau_n:.3g} E={record.energy:.12g} "
                         f"|Q|={record.sup_norm:.6g} g={record.g:.6g}")

            if check:
                if report.energy > energy + current_config.ENERGY_TOL * max(1.0, abs(energy)):
                    logger.error(f"energy increased at step {step}: {energy!r} -> {report.energy!r}")
                    raise InvariantViolation(f"energy increased from {energy!r} to {report.energy!r}", step=step)
                bound_applies = config.scheme == 'mbp_sesav1' or tau_n <= tau_bound
                if mbp_checked and bound_applies and report.sup_norm > params.eta + current_config.MBP_TOL:
                    logger.error(f"MBP violated at step {step}: {report.sup_norm!r} > {params.eta!r}")
                    raise InvariantViolation(f"sup norm {report.sup_norm!r} exceeds eta={params.eta!r}", step=step)

            state = report.state
            energy = report.energy
            yield state, record
            if controller is not None:
                tau = SchemeService.adaptive_tau(controller, energy, tau_n)

    @staticmethod
    def run_simulation(config, on_snapshot=None):
        """完整运行，返回 (最终状态, 诊断记录, 快照)

        快照按 output.every 的步数间隔收集（0 表示只保留初末状态）；
        传入 on_snapshot(step, state) 时直接回调，不在内存中保留。
        """
        logger.info(f"Running {config.scheme} on {config.dim}D mesh M={config.M} to T={config.T}")
        records, snapshots = [], []
        every = config.output.every
        state, step = None, 0
        for state, record in ExperimentService.simulate(config):
            records.append(record)
            step = record.step
            if step == 0 or (every and step % every == 0):
                if on_snapshot is not None:
                    on_snapshot(step, state)
                else:
                    snapshots.append((step, state))
        if step != 0 and not (every and step % every == 0):
            if on_snapshot is not None:
                on_snapshot(step, state)
            else:
                snapshots.append((step, state))
        logger.info(f"Finished after {step} steps, energy {records[-1].energy:.12g}")
        return state, records, snapshots

    @staticmethod
    def _errors(coarse, fine, error):
        """累计 ||grad e||, ||e||, |e_s| 的最大值"""
        diff = fine.Q - coarse.Q
        return (max(error[0], BulkService.tensor_grad_norm(diff)),
                max(error[1], BulkService.tensor_l2_norm(diff)),
                max(error[2], abs(fine.s - coarse.s)))

    @staticmethod
    def convergence_study_time(config, taus, reference_tau):
        """时间收敛率：与细步长参考解比较"""
        taus = [float(t) for t in taus]
        problems = []
        if not taus:
            problems.append("at least one tau is required")
        elif not reference_tau < min(taus) / 4:
            problems.append(f"reference tau {reference_tau} must be below min(taus)/4 = {min(taus) / 4}")
        for tau in taus:
            if not _is_integer_ratio(tau / reference_tau):
                problems.append(f"tau={tau} is not an integer multiple of the reference tau {reference_tau}")
            if not _is_integer_ratio(config.T / tau):
                problems.append(f"T={config.T} is not an integer multiple of tau={tau}")
        if problems:
            raise ConfigError(problems)

        logger.info(f"Time convergence study: taus={taus}, reference tau={reference_tau}")
        ratios = [int(round(tau / reference_tau)) for tau in taus]
        reference = ExperimentService.simulate(config.with_updates(tau=reference_tau, adaptive=None))
        trials = [ExperimentService.simulate(config.with_updates(tau=tau, adaptive=None)) for tau in taus]
        current = [None] * len(taus)
        errors = [(0.0, 0.0, 0.0)] * len(taus)
        for k, (ref_state, _) in enumerate(reference):
            for i, ratio in enumerate(ratios):
                if k % ratio == 0:
                    current[i], _ = next(trials[i])
                    errors[i] = ExperimentService._errors(ref_state, current[i], errors[i])
        return _rate_table('tau', taus, errors)

    @staticmethod
    def convergence_study_space(config, Ms):
        """空间收敛率：相邻网格 (M, rM) 的解在粗网格节点上的差"""
        Ms = [int(M) for M in Ms]
        problems = []
        if len(Ms) < 2:
            problems.append("at least two resolutions are required")
        for coarse, fine in zip(Ms, Ms[1:]):
            if fine <= coarse or fine % coarse != 0:
                problems.append(f"M={fine} is not a nested refinement of M={coarse}")
        if config.adaptive is not None or config.tau is None:
            problems.append("spatial studies need a fixed time step")
        if problems:
            raise ConfigError(problems)

        logger.info(f"Space convergence study: Ms={Ms}, tau={config.tau}")
        meshes = [build_mesh(config.dim, M, config.domain_length) for M in Ms]
        runs = [ExperimentService.simulate(config.with_updates(M=M)) for M in Ms]
        errors = [(0.0, 0.0, 0.0)] * (len(Ms) - 1)
        for states in zip(*runs):
            for i in range(len(Ms) - 1):
                coarse = states[i][0]
                fine = states[i + 1][0]
                restricted = SavState(MeshService.restrict_to_coarse(fine.Q, meshes[i]), fine.s, fine.t)
                errors[i] = ExperimentService._errors(coarse, restricted, errors[i])
        return _rate_table('h', [m.h for m in meshes[:-1]], errors)

    @staticmethod
    def defect_node_count(Q, threshold=0.02):
        """内部节点中 Q + I/d 特征值间隙小于阈值的个数"""
        gap = eigen_gap_values(Q.components[(slice(None),) + Q.mesh.interior], Q.dim, 1.0 / Q.dim)
        return int(np.count_nonzero(gap < threshold))
