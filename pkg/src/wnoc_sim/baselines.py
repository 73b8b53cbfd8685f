"""Comparison MACs: multi-channel BRS random access and token passing."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

from .core import Packet, SimConfig
from .trmac import NodeState

# BRS nodes share the TR-MAC node shape; their channel is fixed by
# assigned_channel and never chosen at run time.
BrsNodeState = NodeState


class BrsVerdict(Enum):
    IDLE = "IDLE"
    BUSY = "BUSY"
    SUCCESS = "SUCCESS"
    COLLISION = "COLLISION"


@dataclass(frozen=True)
class BrsOutcome:
    channel: int
    verdict: BrsVerdict
    nodes: tuple[int, ...] = ()
    # success: delivery cycle; collision: cycle the channel is free again
    ends_at: Optional[int] = None

    @property
    def nack_at(self) -> Optional[int]:
        if self.verdict is BrsVerdict.COLLISION:
            return self.ends_at - 1
        return None


def brs_contend(
    contenders: Mapping[int, Sequence[int]],
    busy_until: Sequence[int],
    now: int,
    cfg: SimConfig,
) -> dict[int, BrsOutcome]:
    """Resolve carrier-sensed contention on every channel at cycle ``now``.

    A lone contender holds the channel for preamble and data; two or more
    are detected within the preamble and followed by one NACK cycle.
    """
    out = {}
    for ch in sorted(contenders):
        nodes = tuple(sorted(contenders[ch]))
        if busy_until[ch] > now:
            out[ch] = BrsOutcome(ch, BrsVerdict.BUSY, nodes)
        elif not nodes:
            out[ch] = BrsOutcome(ch, BrsVerdict.IDLE)
        elif len(nodes) == 1:
            out[ch] = BrsOutcome(ch, BrsVerdict.SUCCESS, nodes, now + cfg.preamble_cycles + cfg.data_cycles)
        else:
            out[ch] = BrsOutcome(ch, BrsVerdict.COLLISION, nodes, now + cfg.preamble_cycles + 1)
    return out


def token_ring_of(node: int, num_channels: int, num_nodes: int) -> tuple[int, int]:
    if not 0 <= node < num_nodes:
        raise ValueError(f"node {node} outside [0, {num_nodes})")
    return node % num_channels, node // num_channels


def build_rings(num_nodes: int, num_channels: int) -> list[list[int]]:
    rings: list[list[int]] = [[] for _ in range(num_channels)]
    for node in range(num_nodes):
        ring, _ = token_ring_of(node, num_channels, num_nodes)
        rings[ring].append(node)
    return rings


@dataclass
class TokenState:
    channel: int
    ring: list[int]
    pos: int = 0
    next_action: int = 0
    pass_cost_cycles: int = 1

    @property
    def holder(self) -> int:
        return self.ring[self.pos]

    @property
    def successor(self) -> int:
        return self.ring[(self.pos + 1) % len(self.ring)]


@dataclass(frozen=True)
class TokenEvent:
    kind: str  # "TRANSMIT" or "PASS"
    cycle: int
    holder: int
    successor: int
    packet: Optional[Packet] = None


def token_advance(tok: TokenState, queues: Sequence[Sequence[Packet]], now: int, cfg: SimConfig) -> list[TokenEvent]:
    """Advance one channel's token at cycle ``now``.

    The holder sends at most one packet per visit. A TRANSMIT event's
    packet is delivered at the cycle of the PASS event that follows it.
    """
    if now < tok.next_action:
        return []
    holder, successor = tok.holder, tok.successor
    tok.pos = (tok.pos + 1) % len(tok.ring)
    if queues[holder]:
        done = now + cfg.preamble_cycles + cfg.data_cycles
        tok.next_action = done + tok.pass_cost_cycles
        return [TokenEvent("TRANSMIT", now, holder, successor, queues[holder][0]),
                TokenEvent("PASS", done, holder, successor)]
    tok.next_action = now + tok.pass_cost_cycles
    return [TokenEvent("PASS", now, holder, successor)]
