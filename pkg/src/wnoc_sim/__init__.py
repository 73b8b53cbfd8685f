"""Cycle-driven simulator for MAC protocols in wireless in-package networks."""

from .core import (
    ConfigError,
    HotspotAxis,
    IntegrityError,
    Protocol,
    SimConfig,
    TrafficConfig,
    load_config,
    validate_config,
)
from .engine import RunResult, run
from .metrics import MetricsReport, aggregate_gbps, saturation_point, sweep

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "HotspotAxis",
    "IntegrityError",
    "MetricsReport",
    "Protocol",
    "RunResult",
    "SimConfig",
    "TrafficConfig",
    "aggregate_gbps",
    "load_config",
    "run",
    "saturation_point",
    "sweep",
    "validate_config",
]
