from dataclasses import dataclass

from nematic.utils.errors import ConfigError


@dataclass(frozen=True)
class SavState:
    """演化中的未知量 (Q, s, t)"""
    Q: object
    s: float
    t: float = 0.0


@dataclass(frozen=True)
class StepReport:
    state: SavState
    tau_used: float
    energy: float
    sup_norm: float
    g_value: float
    clamped: bool


@dataclass(frozen=True)
class DiagnosticsRecord:
    """diagnostics.csv 的一行"""
    step: int
    time: float
    tau: float
    energy: float
    sup_norm: float
    s: float
    g: float
    clamped: bool

    @classmethod
    def from_report(cls, step, report):
        return cls(
            step=step,
            time=report.state.t,
            tau=report.tau_used,
            energy=report.energy,
            sup_norm=report.sup_norm,
            s=report.state.s,
            g=report.g_value,
            clamped=report.clamped,
        )


@dataclass
class AdaptiveController:
    """基于能量变化率的自适应步长控制"""
    tau_min: float
    tau_max: float
    alpha: float
    prev_energy: float = None

    def __post_init__(self):
        problems = []
        if not 0 < self.tau_min <= self.tau_max:
            problems.append(f"adaptive steps need 0 < tau_min <= tau_max, got {self.tau_min}, {self.tau_max}")
        if self.alpha < 0:
            problems.append(f"adaptive alpha must be >= 0, got {self.alpha}")
        if problems:
            raise ConfigError(problems)
