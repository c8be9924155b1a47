from dataclasses import dataclass, field, replace

from config import current_config
from nematic.utils.errors import ConfigError

SCHEMES = ('sesav1', 'sesav2', 'mbp_sesav1', 'mbp_sesav2')
MBP_SCHEMES = ('mbp_sesav1', 'mbp_sesav2')
INITIAL_KINDS = ('preset', 'random', 'director', 'zero')
# 指向矢初值的归一化：逐节点 |n|^2、离散 L2 范数 ||n||_h^2、不归一化
NORMALIZATIONS = ('node', 'l2', 'none')
SNAPSHOT_FORMATS = ('vtk', 'csv')
SOLVER_BACKENDS = ('auto', 'dense')


@dataclass(frozen=True)
class SolverSettings:
    tol: float = current_config.KRYLOV_TOL
    max_iter: int = None  # None 表示 KRYLOV_MAXITER_FACTOR * sqrt(未知数)
    backend: str = 'auto'

    def __post_init__(self):
        problems = []
        if not self.tol > 0:
            problems.append(f"solver.tol must be > 0, got {self.tol}")
        if self.max_iter is not None and self.max_iter < 1:
            problems.append(f"solver.max_iter must be >= 1, got {self.max_iter}")
        if self.backend not in SOLVER_BACKENDS:
            problems.append(f"solver.backend must be one of {', '.join(SOLVER_BACKENDS)}, got {self.backend!r}")
        if problems:
            raise ConfigError(problems)


@dataclass(frozen=True)
class AdaptiveSpec:
    tau_min: float
    tau_max: float
    alpha: float


@dataclass(frozen=True)
class InitialSpec:
    kind: str = 'preset'
    preset: str = None
    seed: int = 0
    amplitude: float = 0.5
    director: tuple = ()
    normalize: str = 'node'


@dataclass(frozen=True)
class OutputSpec:
    directory: str = None
    every: int = 0  # 0 表示只写最终快照
    format: str = 'vtk'


@dataclass(frozen=True)
class ExperimentConfig:
    dim: int
    M: int
    domain_length: float
    model: object  # ModelParams
    scheme: str
    T: float
    tau: float = None
    adaptive: AdaptiveSpec = None
    initial: InitialSpec = field(default_factory=InitialSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    solver: SolverSettings = field(default_factory=SolverSettings)
    g_star: float = None
    check_invariants: bool = current_config.CHECK_INVARIANTS
    preset: str = None
    warnings: tuple = ()

    def __post_init__(self):
        problems = []
        if self.scheme not in SCHEMES:
            problems.append(f"scheme.name must be one of {', '.join(SCHEMES)}, got {self.scheme!r}")
        if not self.T > 0:
            problems.append(f"time.T must be > 0, got {self.T}")
        if self.adaptive is None:
            if self.tau is None or not self.tau > 0:
                problems.append(f"time.tau must be > 0 when no adaptive controller is given, got {self.tau}")
        if self.initial.kind not in INITIAL_KINDS:
            problems.append(f"initial.kind must be one of {', '.join(INITIAL_KINDS)}, got {self.initial.kind!r}")
        if self.initial.normalize not in NORMALIZATIONS:
            problems.append(f"initial.normalize must be one of {', '.join(NORMALIZATIONS)}, "
                            f"got {self.initial.normalize!r}")
        if self.output.format not in SNAPSHOT_FORMATS:
            problems.append(f"output.format must be one of {', '.join(SNAPSHOT_FORMATS)}, got {self.output.format!r}")
        if self.output.every < 0:
            problems.append(f"output.every must be >= 0, got {self.output.every}")
        if problems:
            raise ConfigError(problems)

    @property
    def is_mbp(self):
        return self.scheme in MBP_SCHEMES

    def with_updates(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class RateRow:
    resolution: float
    error_grad: float
    error_L2: float
    error_s: float
    rate_grad: float = None
    rate_L2: float = None
    rate_s: float = None


@dataclass(frozen=True)
class RateTable:
    """收敛率表；kind 为 'tau' 或 'h'"""
    kind: str
    rows: tuple
