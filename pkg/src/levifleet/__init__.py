"""Voice-driven multi-robot coordination simulator for contactless acoustic transport.

A deterministic simulator and live service for a fleet of differential-drive
robots carrying ultrasonic phased arrays: natural-language commands become
validated JSON task plans, a distributed scheduler runs them through
handshake and barrier protocols over a fault-injectable message bus, and the
acoustics module models the pressure fields used for levitated transport.
"""

from .taskmodel import (
    ActionType,
    CoordinationMode,
    PlanValidationError,
    Task,
    TaskPlan,
    build_dependency_graph,
    coordination_mode,
    validate_plan,
)
from .nlparse import (
    ParseConfig,
    ParseFailure,
    ReferenceBackend,
    SpatialContext,
    parse_command,
    reference_parse,
)
from .config import AppConfig, default_config, load_config

__version__ = "0.1.0"

__all__ = [
    "ActionType",
    "AppConfig",
    "CoordinationMode",
    "ParseConfig",
    "ParseFailure",
    "PlanValidationError",
    "ReferenceBackend",
    "SpatialContext",
    "Task",
    "TaskPlan",
    "build_dependency_graph",
    "coordination_mode",
    "default_config",
    "load_config",
    "parse_command",
    "reference_parse",
    "validate_plan",
    "__version__",
]
