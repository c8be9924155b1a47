class NematicError(Exception):
    """所有领域异常的基类"""
    exit_code = 1


class ConfigError(NematicError):
    """配置错误，可一次汇总多条问题"""
    exit_code = 2

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class MeshError(NematicError, ValueError):
    """网格或场参数不合法"""
    exit_code = 2


class SolverError(NematicError):
    """线性求解失败"""
    exit_code = 3

    def __init__(self, message, residual=None, iterations=None):
        self.residual = residual
        self.iterations = iterations
        if residual is not None:
            message = f"{message} (residual={residual:.3e}, iterations={iterations})"
        super().__init__(message)


class BlowUpError(SolverError):
    """g的指数参数溢出"""


class InvariantViolation(NematicError):
    """能量递减或MBP被破坏"""
    exit_code = 4

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


class OutputError(NematicError):
    """结果文件写入失败"""

    def __init__(self, path, error):
        self.path = path
        super().__init__(f"cannot write {path}: {error}")
