"""Experiment configuration files (TOML).

A file may name a ``preset``; its sections are merged key by key over the
preset's values. Unknown sections and keys are errors, and every problem
found is reported in a single ConfigError.
"""
import logging
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from nematic.models.experiment import (INITIAL_KINDS, NORMALIZATIONS, SCHEMES, AdaptiveSpec, ExperimentConfig,
                                       InitialSpec, OutputSpec, SolverSettings)
from nematic.models.mesh import build_mesh
from nematic.services.experiment_service import ExperimentService
from nematic.services.preset_service import PresetService
from nematic.utils.errors import ConfigError, MeshError

logger = logging.getLogger(__name__)

_NUMBER = (int, float)

# 每段允许的键及其类型
SCHEMA = {
    'mesh': {'dim': int, 'M': int, 'domain_length': _NUMBER},
    'model': {'a': _NUMBER, 'b': _NUMBER, 'c': _NUMBER, 'L1': _NUMBER, 'L2': _NUMBER, 'L3': _NUMBER,
              'kappa': _NUMBER, 'c_star': (int, float, str), 'eta': _NUMBER},
    'scheme': {'name': str, 'g_star': _NUMBER, 'check_invariants': bool},
    'time': {'T': _NUMBER, 'tau': _NUMBER, 'tau_min': _NUMBER, 'tau_max': _NUMBER, 'alpha': _NUMBER},
    'output': {'directory': str, 'every': int, 'format': str},
    'initial': {'kind': str, 'preset': str, 'seed': int, 'amplitude': _NUMBER, 'director': list,
                'normalize': str},
    'solver': {'tol': _NUMBER, 'max_iter': int, 'backend': str},
}

REQUIRED = {
    'mesh': ('dim', 'M', 'domain_length'),
    'model': ('a', 'c', 'L1'),
    'scheme': ('name',),
    'time': ('T',),
}

ADAPTIVE_KEYS = ('tau_min', 'tau_max', 'alpha')

_LINE = re.compile(r'line (\d+)')


def _decode_error(text, error):
    """把 tomllib 的行号映射回键名"""
    match = _LINE.search(str(error))
    if not match:
        return f"malformed config: {error}"
    lineno = int(match.group(1))
    lines = text.splitlines()
    line = lines[lineno - 1] if 0 < lineno <= len(lines) else ''
    key = line.split('=', 1)[0].strip() if '=' in line else line.strip()
    return f"malformed value at line {lineno} (key {key!r}): {error}"


def parse_value(text):
    """按 TOML 语法解析单个值，失败则按字符串处理"""
    try:
        return tomllib.loads(f"v = {text}")['v']
    except tomllib.TOMLDecodeError:
        return text.strip()


def apply_overrides(data, overrides):
    """--set section.key=value"""
    problems = []
    for item in overrides:
        if '=' not in item:
            problems.append(f"override {item!r} is not of the form section.key=value")
            continue
        path, value = item.split('=', 1)
        parts = path.strip().split('.')
        if len(parts) == 1:
            data[parts[0]] = parse_value(value)
        elif len(parts) == 2:
            data.setdefault(parts[0], {})[parts[1]] = parse_value(value)
        else:
            problems.append(f"override key {path!r} is nested too deeply")
    if problems:
        raise ConfigError(problems)
    return data


def _merge(base, user):
    """用户段覆盖预设段；固定步长与自适应步长互斥"""
    merged = {section: dict(values) for section, values in base.items()}
    for section, values in user.items():
        target = merged.setdefault(section, {})
        if section == 'time' and isinstance(values, dict):
            if 'tau' in values:
                for key in ADAPTIVE_KEYS:
                    target.pop(key, None)
            if any(key in values for key in ADAPTIVE_KEYS):
                target.pop('tau', None)
        if isinstance(values, dict):
            target.update(values)
        else:
            merged[section] = values
    return merged


def _check_schema(data):
    problems = []
    for section, values in data.items():
        if section not in SCHEMA:
            problems.append(f"unknown section [{section}]")
            continue
        if not isinstance(values, dict):
            problems.append(f"[{section}] must be a table")
            continue
        for key, value in values.items():
            if key not in SCHEMA[section]:
                problems.append(f"unknown key {section}.{key}")
                continue
            expected = SCHEMA[section][key]
            if isinstance(value, bool) and expected is not bool:
                problems.append(f"{section}.{key} must be a number or string, got {value!r}")
            elif not isinstance(value, expected):
                problems.append(f"{section}.{key} has the wrong type: {value!r}")

    def table(name):
        value = data.get(name)
        return value if isinstance(value, dict) else {}

    for section, keys in REQUIRED.items():
        missing = [key for key in keys if key not in table(section)]
        problems.extend(f"missing required key {section}.{key}" for key in missing)
    scheme = table('scheme').get('name')
    if isinstance(scheme, str) and scheme not in SCHEMES:
        problems.append(f"scheme.name must be one of {', '.join(SCHEMES)}, got {scheme!r}")
    kind = table('initial').get('kind')
    if isinstance(kind, str) and kind not in INITIAL_KINDS:
        problems.append(f"initial.kind must be one of {', '.join(INITIAL_KINDS)}, got {kind!r}")
    normalize = table('initial').get('normalize')
    if isinstance(normalize, str) and normalize not in NORMALIZATIONS:
        problems.append(f"initial.normalize must be one of {', '.join(NORMALIZATIONS)}, got {normalize!r}")
    model = table('model')
    if isinstance(model.get('c_star'), str) and model['c_star'] != 'auto':
        problems.append(f"model.c_star must be a number or \"auto\", got {model['c_star']!r}")
    return problems


def _time_spec(time):
    adaptive_given = [key for key in ADAPTIVE_KEYS if key in time]
    if adaptive_given and 'tau' in time:
        raise ConfigError("give either time.tau or time.tau_min/tau_max/alpha, not both")
    if adaptive_given:
        missing = [key for key in ADAPTIVE_KEYS if key not in time]
        if missing:
            raise ConfigError([f"missing required key time.{key}" for key in missing])
        problems = []
        if not 0 < time['tau_min'] <= time['tau_max']:
            problems.append(f"time.tau_min/tau_max need 0 < tau_min <= tau_max, "
                            f"got {time['tau_min']}, {time['tau_max']}")
        if time['alpha'] < 0:
            problems.append(f"time.alpha must be >= 0, got {time['alpha']}")
        if problems:
            raise ConfigError(problems)
        return None, AdaptiveSpec(float(time['tau_min']), float(time['tau_max']), float(time['alpha']))
    if 'tau' not in time:
        raise ConfigError("missing required key time.tau (or the adaptive keys tau_min, tau_max, alpha)")
    return float(time['tau']), None


def parse_config(text, overrides=()):
    """解析配置文本，返回完整校验后的 ExperimentConfig"""
    try:
        user = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(_decode_error(text, e))
    user = apply_overrides(user, overrides)

    preset = user.pop('preset', None)
    if preset is not None and not isinstance(preset, str):
        raise ConfigError(f"preset must be a string, got {preset!r}")
    base = PresetService.preset_sections(preset) if preset else {}
    data = _merge(base, user)

    problems = _check_schema(data)
    if problems:
        raise ConfigError(problems)

    mesh_raw, model_raw = data['mesh'], data['model']
    scheme = data['scheme']['name']
    time = data['time']
    initial_raw = dict(data.get('initial', {}))
    if 'kind' not in initial_raw:
        if preset is None:
            raise ConfigError("missing required key initial.kind")
        initial_raw['kind'] = 'preset'
    if 'director' in initial_raw:
        initial_raw['director'] = tuple(str(e) for e in initial_raw['director'])

    try:
        mesh = build_mesh(mesh_raw['dim'], mesh_raw['M'], mesh_raw['domain_length'])
    except MeshError as e:
        raise ConfigError(str(e))
    tau, adaptive = _time_spec(time)
    initial = InitialSpec(**initial_raw)
    output = OutputSpec(**data.get('output', {}))
    solver = SolverSettings(**data.get('solver', {}))

    Q0 = PresetService.build_initial(initial, mesh, preset)
    model_raw = {k: (float(v) if not isinstance(v, str) else v) for k, v in model_raw.items()}
    params, warnings = ExperimentService.resolve_model(model_raw, mesh, Q0, scheme)

    scheme_raw = data['scheme']
    config = ExperimentConfig(
        dim=mesh.dim,
        M=mesh.M,
        domain_length=mesh.domain_length,
        model=params,
        scheme=scheme,
        T=float(time['T']),
        tau=tau,
        adaptive=adaptive,
        initial=initial,
        output=output,
        solver=solver,
        g_star=float(scheme_raw['g_star']) if 'g_star' in scheme_raw else None,
        check_invariants=scheme_raw.get('check_invariants', True),
        preset=preset,
        warnings=tuple(warnings),
    )
    logger.info(f"Loaded config: scheme={scheme}, M={mesh.M}, kappa={params.kappa:.6g}, "
                f"eta={params.eta:.6g}, c_star={params.c_star:.6g}")
    return config


def load_config(path, overrides=()):
    try:
        with open(path, encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    return parse_config(text, overrides)
