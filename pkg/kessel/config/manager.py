"""
Configuration management for Kessel
Loads, validates and resolves run configurations.
"""

import copy
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import jsonschema
import yaml

from kessel import __version__
from kessel.mesh.geometry import Domain, DomainKind, Grid, build_grid
from kessel.solvers.initial_data import PROFILES, build_initial_data
from kessel.solvers.stepper import Params, select_p, subcritical_regime
from kessel.utils.errors import ConfigError
from kessel.utils.logger import get_logger

logger = get_logger(__name__)

MODES = ("simulate", "sweep", "check", "compare-ode")
RUN_PROFILES = ("ci", "exploratory")


def _dyadic_eps() -> List[float]:
    return [2.0 ** -k for k in range(2, 10)]


@dataclass
class DomainConfig:
    """Domain shape, resolution and effective dimension"""
    kind: str = "interval"
    bounds: List[float] = field(default_factory=lambda: [0.0, math.pi])
    resolution: Union[int, List[int]] = 128
    n_eff: int = 2


@dataclass
class InitialDataConfig:
    """Named u₀ profile"""
    profile: str = "constant"
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass
class ModelConfig:
    """Model parameters"""
    chi: float = 0.5
    eps: float = 0.1
    p: Optional[float] = None
    advection_sign: int = 1
    v_face: str = "arithmetic"


@dataclass
class TimeConfig:
    """Time horizon and step control"""
    T: float = 1.0
    dt_max: float = 1e-3
    cfl_safety: float = 0.9
    output_interval: float = 0.01


@dataclass
class OutputConfig:
    """Artifact layout"""
    out_dir: Optional[str] = None
    scenario: str = "default"
    write_snapshots: bool = True
    snapshot_every: int = 1


@dataclass
class ToleranceConfig:
    """Tolerances and invariant thresholds"""
    solver_tol: float = 1e-10
    mass_rel: float = 1e-10
    v_mass_rel: float = 1e-8
    lemma35_allowance: float = 0.05
    undershoot: float = 1e-13
    undershoot_policy: Optional[str] = None
    u_floor: float = 1e-300
    weak_constant: float = 0.05
    id_constant: float = 1.0


@dataclass
class SweepConfig:
    """ε-sequence and blow-up monitor"""
    eps_list: List[float] = field(default_factory=_dyadic_eps)
    workers: int = 1
    ceiling: float = 1e8
    growth_threshold: float = 5.0
    window: int = 20


@dataclass
class CheckConfig:
    """Residual check inputs"""
    run_dir: Optional[str] = None
    bank_size: int = 6


@dataclass
class OdeConfig:
    """Riccati comparison cases"""
    pairs: List[List[float]] = field(default_factory=lambda: [[1.0, 1.0], [1.0, 4.0], [4.0, 1.0]])
    t0: float = 1e-6
    t_end: float = 5.0
    samples: int = 200


@dataclass
class LoggingConfig:
    """Logging configuration"""
    level: str = "INFO"
    max_file_size_mb: int = 10
    backup_count: int = 5


@dataclass
class RunSection:
    """Mode and profile"""
    mode: str = "simulate"
    profile: str = "ci"
    allow_supercritical: bool = False


SECTIONS = {
    'run': RunSection,
    'domain': DomainConfig,
    'initial_data': InitialDataConfig,
    'model': ModelConfig,
    'time': TimeConfig,
    'output': OutputConfig,
    'tolerances': ToleranceConfig,
    'sweep': SweepConfig,
    'check': CheckConfig,
    'ode': OdeConfig,
    'logging': LoggingConfig,
}

_NUMBER = {'type': 'number'}
_POSITIVE = {'type': 'number', 'exclusiveMinimum': 0}
_OPTIONAL_STRING = {'type': ['string', 'null']}


def _section(properties: Dict[str, Any]) -> Dict[str, Any]:
    return {'type': 'object', 'additionalProperties': False, 'properties': properties}


CONFIG_SCHEMA = {
    'type': 'object',
    'additionalProperties': False,
    'properties': {
        'run': _section({
            'mode': {'enum': list(MODES)},
            'profile': {'enum': list(RUN_PROFILES)},
            'allow_supercritical': {'type': 'boolean'},
        }),
        'domain': _section({
            'kind': {'enum': [kind.value for kind in DomainKind]},
            'bounds': {'type': 'array', 'items': _NUMBER, 'minItems': 1, 'maxItems': 4},
            'resolution': {'oneOf': [
                {'type': 'integer', 'minimum': 4},
                {'type': 'array', 'items': {'type': 'integer', 'minimum': 4}, 'minItems': 1, 'maxItems': 2},
            ]},
            'n_eff': {'type': 'integer', 'minimum': 2},
        }),
        'initial_data': _section({
            'profile': {'enum': sorted(PROFILES)},
            'params': {'type': 'object', 'additionalProperties': {
                'oneOf': [_NUMBER, {'type': 'array', 'items': _NUMBER}]}},
        }),
        'model': _section({
            'chi': {'type': 'number', 'minimum': 0},
            'eps': {'type': 'number', 'exclusiveMinimum': 0, 'exclusiveMaximum': 1},
            'p': {'type': ['number', 'null'], 'exclusiveMinimum': 0, 'exclusiveMaximum': 1},
            'advection_sign': {'enum': [1, -1]},
            'v_face': {'enum': ['arithmetic', 'harmonic']},
        }),
        'time': _section({
            'T': _POSITIVE,
            'dt_max': _POSITIVE,
            'cfl_safety': {'type': 'number', 'exclusiveMinimum': 0, 'maximum': 1},
            'output_interval': _POSITIVE,
        }),
        'output': _section({
            'out_dir': _OPTIONAL_STRING,
            'scenario': {'type': 'string', 'minLength': 1},
            'write_snapshots': {'type': 'boolean'},
            'snapshot_every': {'type': 'integer', 'minimum': 1},
        }),
        'tolerances': _section({
            'solver_tol': _POSITIVE,
            'mass_rel': _POSITIVE,
            'v_mass_rel': _POSITIVE,
            'lemma35_allowance': {'type': 'number', 'minimum': 0},
            'undershoot': {'type': 'number', 'minimum': 0},
            'undershoot_policy': {'enum': ['abort', 'clamp', None]},
            'u_floor': _POSITIVE,
            'weak_constant': _POSITIVE,
            'id_constant': _POSITIVE,
        }),
        'sweep': _section({
            'eps_list': {'type': 'array', 'items': {'type': 'number', 'exclusiveMinimum': 0, 'exclusiveMaximum': 1},
                         'minItems': 1},
            'workers': {'type': 'integer', 'minimum': 1},
            'ceiling': _POSITIVE,
            'growth_threshold': _POSITIVE,
            'window': {'type': 'integer', 'minimum': 2},
        }),
        'check': _section({
            'run_dir': _OPTIONAL_STRING,
            'bank_size': {'type': 'integer', 'minimum': 3},
        }),
        'ode': _section({
            'pairs': {'type': 'array', 'items': {'type': 'array', 'items': _POSITIVE, 'minItems': 2, 'maxItems': 2}},
            't0': _POSITIVE,
            't_end': _POSITIVE,
            'samples': {'type': 'integer', 'minimum': 2},
        }),
        'logging': _section({
            'level': {'enum': ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']},
            'max_file_size_mb': {'type': 'integer', 'minimum': 1},
            'backup_count': {'type': 'integer', 'minimum': 0},
        }),
    },
}


@dataclass
class RunConfig:
    """Fully resolved configuration of one invocation"""
    run: RunSection = field(default_factory=RunSection)
    domain: DomainConfig = field(default_factory=DomainConfig)
    initial_data: InitialDataConfig = field(default_factory=InitialDataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    check: CheckConfig = field(default_factory=CheckConfig)
    ode: OdeConfig = field(default_factory=OdeConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)

    @property
    def exploratory(self) -> bool:
        """Tagged exploratory: supercritical override or the exploratory profile"""
        return self.run.allow_supercritical or self.run.profile == "exploratory"

    @property
    def gate_enforced(self) -> bool:
        return not self.run.allow_supercritical

    @property
    def out_dir(self) -> Path:
        return Path(self.output.out_dir or os.environ.get('KESSEL_OUT_DIR', 'runs'))

    @property
    def undershoot_policy(self) -> str:
        if self.tolerances.undershoot_policy is not None:
            return self.tolerances.undershoot_policy
        return "clamp" if self.run.profile == "exploratory" else "abort"

    def build_domain(self) -> Domain:
        kind = DomainKind(self.domain.kind)
        bounds = self.domain.bounds
        try:
            if kind is DomainKind.INTERVAL:
                return Domain.interval(*bounds)
            if kind is DomainKind.RECTANGLE:
                return Domain.rectangle(*bounds)
            return Domain.radial_ball(bounds[-1], self.domain.n_eff)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"domain: {e}") from e

    def build_grid(self) -> Grid:
        try:
            return build_grid(self.build_domain(), self.domain.resolution)
        except ValueError as e:
            raise ConfigError(f"domain.resolution: {e}") from e

    def resolve_p(self) -> float:
        """Configured p, else the midpoint choice; supercritical runs fall back to 2/(3χ)"""
        if self.model.p is not None:
            return self.model.p
        chi, n_eff = self.model.chi, self.domain.n_eff
        if subcritical_regime(chi, n_eff):
            return select_p(chi, n_eff)
        return 2.0 / (3.0 * chi)

    def to_params(self, eps: Optional[float] = None) -> Params:
        """
        Params for one run.

        Raises:
            ConfigError: a parameter gate fails
        """
        return Params(
            chi=self.model.chi,
            eps=self.model.eps if eps is None else eps,
            p=self.resolve_p(),
            n_eff=self.domain.n_eff,
            T=self.time.T,
            dt_max=self.time.dt_max,
            cfl_safety=self.time.cfl_safety,
            advection_sign=self.model.advection_sign,
            v_face=self.model.v_face,
            solver_tol=self.tolerances.solver_tol,
            undershoot=self.tolerances.undershoot,
            undershoot_policy=self.undershoot_policy,
            ceiling=self.sweep.ceiling,
            enforce_gate=self.gate_enforced,
        )

    def validate(self):
        """Enforce parameter gates and u₀ admissibility"""
        if self.domain.kind == DomainKind.RADIAL_BALL.value and len(self.domain.bounds) != 1:
            raise ConfigError("domain.bounds: a radial ball takes a single radius")
        params = self.to_params()
        eps_list = self.sweep.eps_list
        if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
            raise ConfigError(f"sweep.eps_list must be strictly decreasing, got {eps_list}")
        if self.time.output_interval > self.time.T:
            raise ConfigError("time.output_interval exceeds the horizon T")
        build_initial_data(self.build_grid(), self.initial_data.profile, self.initial_data.params)
        if not params.enforce_gate and not subcritical_regime(params.chi, params.n_eff):
            logger.warning(f"Supercritical chi={params.chi} for n_eff={params.n_eff}: run tagged exploratory")

    def to_dict(self) -> Dict[str, Any]:
        """Resolved configuration as echoed to meta.json"""
        data = {name: asdict(getattr(self, name)) for name in SECTIONS}
        data['model']['p'] = self.resolve_p()
        data['tolerances']['undershoot_policy'] = self.undershoot_policy
        data['output']['out_dir'] = str(self.out_dir)
        return data

    def dump(self, path: Union[str, Path]):
        """Write the resolved configuration as YAML"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w') as f:
            yaml.safe_dump(self.to_dict(), f, default_flow_style=False, sort_keys=False)
        logger.info(f"Configuration saved to {path}")

    @property
    def version(self) -> str:
        return __version__


def _load_document(source: Union[str, Path, Mapping[str, Any], None]) -> Dict[str, Any]:
    if source is None:
        return {}
    if isinstance(source, Mapping):
        return copy.deepcopy(dict(source))
    path = Path(source)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    try:
        with open(path, 'r') as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"Cannot parse {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    logger.info(f"Configuration loaded from {path}")
    return data


def _unwrap_meta(data: Dict[str, Any]) -> Dict[str, Any]:
    """Accept meta.json documents, whose resolved config sits under 'config'"""
    if 'config' in data and isinstance(data['config'], dict) and not set(data) & set(SECTIONS):
        return data['config']
    return data


def apply_override(data: Dict[str, Any], key: str, value: Any):
    """
    Set a dot-notation key (e.g. "model.chi") in a raw config document.

    Raises:
        ConfigError: unknown section or field
    """
    section, _, name = key.partition('.')
    if section not in SECTIONS or name not in {f.name for f in fields(SECTIONS[section])}:
        raise ConfigError(f"Invalid config key: {key}")
    data.setdefault(section, {})[name] = value


def parse_config(source: Union[str, Path, Mapping[str, Any], None] = None,
                 overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Parse and validate a configuration.

    Args:
        source: YAML/JSON path, a mapping, or None for defaults
        overrides: Dot-notation values applied on top (flags)

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: unknown keys, type errors or gate violations
    """
    data = _unwrap_meta(_load_document(source))
    for key, value in (overrides or {}).items():
        if value is not None:
            apply_override(data, key, value)

    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        location = '.'.join(str(part) for part in e.absolute_path) or '<root>'
        raise ConfigError(f"{location}: {e.message}") from e

    config = RunConfig(**{name: cls(**data.get(name, {})) for name, cls in SECTIONS.items()})
    config.validate()
    logger.debug(f"Resolved config: mode={config.run.mode}, profile={config.run.profile}, "
                 f"chi={config.model.chi}, p={config.resolve_p():.6g}")
    return config
