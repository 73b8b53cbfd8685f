"""Domain types, configuration and static channel assignment."""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Raised when a configuration violates one of its invariants."""


class IntegrityError(RuntimeError):
    """A simulation-integrity fault: a MAC rule that must never break did."""


class Protocol(str, Enum):
    TRMAC = "TRMAC"
    BRS = "BRS"
    TOKEN = "TOKEN"


class HotspotAxis(str, Enum):
    DESTINATIONS = "DESTINATIONS"
    SOURCES = "SOURCES"


@dataclass(frozen=True)
class TrafficConfig:
    injection_rate: float = 0.0
    hurst: float = 1.0
    sigma: float = 0.5
    hotspot_axis: HotspotAxis = HotspotAxis.DESTINATIONS
    trace_file: Optional[str] = None


@dataclass(frozen=True)
class SimConfig:
    num_nodes: int = 64
    num_freq_channels: int = 1
    npt: int = 1
    preamble_cycles: int = 1
    ack_cycles: int = 1
    data_cycles: int = 4
    link_rate_gbps: float = 30.0
    backoff_max_exponent: int = 6
    protocol: Protocol = Protocol.TRMAC
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    seed: int = 1
    warmup_cycles: Optional[int] = None
    measure_cycles: int = 200_000
    queue_capacity: int = 16
    token_pass_cycles: int = 1
    rx_multichannel: bool = True
    clock_ghz: Optional[float] = None

    @property
    def epoch_len(self) -> int:
        return self.preamble_cycles + self.ack_cycles + self.data_cycles

    @property
    def warmup(self) -> int:
        """Warmup length; defaults to 20% of the measurement window."""
        if self.warmup_cycles is None:
            return self.measure_cycles // 5
        return self.warmup_cycles

    @property
    def total_cycles(self) -> int:
        return self.warmup + self.measure_cycles

    def replace(self, **changes: Any) -> "SimConfig":
        traffic_changes = {k: changes.pop(k) for k in list(changes) if k in _TRAFFIC_FIELDS}
        cfg = dataclasses.replace(self, **changes)
        if traffic_changes:
            cfg = dataclasses.replace(cfg, traffic=dataclasses.replace(cfg.traffic, **traffic_changes))
        return cfg


_TRAFFIC_FIELDS = {f.name for f in dataclasses.fields(TrafficConfig)}
_SIM_FIELDS = {f.name for f in dataclasses.fields(SimConfig)}


@dataclass
class Packet:
    id: int
    src: int
    dst: int
    created_at: int
    delivered_at: Optional[int] = None


def _check(ok: bool, message: str) -> None:
    if not ok:
        raise ConfigError(message)


def validate_config(cfg: SimConfig) -> SimConfig:
    """Return ``cfg`` unchanged if every invariant holds.

    Raises :class:`ConfigError` naming the first failing field.
    """
    _check(isinstance(cfg.protocol, Protocol), f"protocol must be one of {[p.value for p in Protocol]}")
    _check(cfg.num_nodes >= 2, "num_nodes ≥ 2")
    _check(cfg.num_freq_channels >= 1, "num_freq_channels ≥ 1")
    _check(cfg.num_freq_channels <= cfg.num_nodes, "num_freq_channels ≤ num_nodes")
    _check(cfg.npt >= 1, "npt ≥ 1")
    _check(cfg.preamble_cycles >= 1, "preamble_cycles ≥ 1")
    _check(cfg.ack_cycles >= 0, "ack_cycles ≥ 0")
    _check(cfg.data_cycles >= 1, "data_cycles ≥ 1")
    _check(cfg.link_rate_gbps > 0, "link_rate_gbps > 0")
    _check(cfg.backoff_max_exponent >= 1, "backoff_max_exponent ≥ 1")
    _check(0 <= cfg.seed < 2**64, "seed must be a 64-bit unsigned integer")
    _check(cfg.measure_cycles >= 1, "measure_cycles ≥ 1")
    _check(cfg.warmup >= 0, "warmup_cycles ≥ 0")
    _check(cfg.queue_capacity >= 1, "queue_capacity ≥ 1")
    _check(cfg.token_pass_cycles >= 1, "token_pass_cycles ≥ 1")
    _check(cfg.clock_ghz is None or cfg.clock_ghz > 0, "clock_ghz > 0")
    t = cfg.traffic
    _check(isinstance(t.hotspot_axis, HotspotAxis), "hotspot_axis must be DESTINATIONS or SOURCES")
    _check(math.isfinite(t.injection_rate) and t.injection_rate >= 0, "injection_rate ≥ 0")
    # ON/OFF sources are ON half the time, so the ON-state emission
    # probability 2*rate must stay a probability.
    _check(t.injection_rate <= 0.5, "injection_rate ≤ 0.5")
    _check(t.hurst >= 0.5, "hurst ≥ 0.5")
    _check(t.hurst <= 1.0, "hurst ≤ 1.0")
    _check(t.sigma >= 0, "sigma ≥ 0")
    _check(t.sigma <= math.sqrt(cfg.num_nodes - 1), f"sigma ≤ sqrt(num_nodes - 1) = {math.sqrt(cfg.num_nodes - 1):.4g}")
    return cfg


def assigned_channel(node: int, num_freq_channels: int) -> int:
    """Round-robin static channel allocation."""
    return node % num_freq_channels


# --------------------------------------------------------------------------
# TOML loading

def _coerce_enum(enum_cls, value, name):
    try:
        return enum_cls(str(value).upper())
    except ValueError:
        raise ConfigError(f"{name} must be one of {[e.value for e in enum_cls]}, got {value!r}") from None


def config_from_mapping(data: Mapping[str, Any]) -> SimConfig:
    """Build a :class:`SimConfig` from a mapping whose keys mirror field names."""
    data = dict(data)
    unknown = set(data) - _SIM_FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    traffic = dict(data.pop("traffic", {}) or {})
    unknown = set(traffic) - _TRAFFIC_FIELDS
    if unknown:
        raise ConfigError(f"unknown traffic keys: {sorted(unknown)}")
    if "hotspot_axis" in traffic:
        traffic["hotspot_axis"] = _coerce_enum(HotspotAxis, traffic["hotspot_axis"], "hotspot_axis")
    if "protocol" in data:
        data["protocol"] = _coerce_enum(Protocol, data["protocol"], "protocol")
    try:
        return SimConfig(traffic=TrafficConfig(**traffic), **data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def config_to_mapping(cfg: SimConfig) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if f.name == "traffic":
            value = {k: (v.value if isinstance(v, Enum) else v)
                     for k, v in dataclasses.asdict(value).items() if v is not None}
        elif isinstance(value, Enum):
            value = value.value
        if value is not None:
            out[f.name] = value
    return out


def load_toml(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config not found: {path}")
    with path.open("rb") as fh:
        return tomllib.load(fh)


def load_config(path: str | Path) -> SimConfig:
    return validate_config(config_from_mapping(load_toml(path)))
