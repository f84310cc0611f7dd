"""Configuration management module"""

from .manager import (
    RunConfig,
    RunSection,
    DomainConfig,
    InitialDataConfig,
    ModelConfig,
    TimeConfig,
    OutputConfig,
    ToleranceConfig,
    SweepConfig,
    CheckConfig,
    OdeConfig,
    LoggingConfig,
    CONFIG_SCHEMA,
    apply_override,
    parse_config,
)

__all__ = [
    'RunConfig',
    'RunSection',
    'DomainConfig',
    'InitialDataConfig',
    'ModelConfig',
    'TimeConfig',
    'OutputConfig',
    'ToleranceConfig',
    'SweepConfig',
    'CheckConfig',
    'OdeConfig',
    'LoggingConfig',
    'CONFIG_SCHEMA',
    'apply_override',
    'parse_config',
]
