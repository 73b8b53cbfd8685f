"""TR-MAC per-node state machine."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Deque, Optional

from .core import IntegrityError, Packet, SimConfig
from .phy import AckKind, ChannelOccupancy, StartAttempt, admit
from .rng import Stream


class Phase(Enum):
    IDLE = "IDLE"
    WAIT_CHANNEL = "WAIT_CHANNEL"
    IN_EPOCH = "IN_EPOCH"
    BACKOFF = "BACKOFF"


@dataclass
class NodeState:
    node: int
    rng: Stream
    capacity: int = 16
    queue: Deque[Packet] = field(default_factory=deque)
    phase: Phase = Phase.IDLE
    collision_count: int = 0
    # backoff expiry; a BACKOFF node stays silent until this cycle
    wake_at: int = 0
    # radio engaged as a receiver of an ongoing exchange until this cycle
    engaged_until: int = 0
    attempt: Optional[StartAttempt] = None

    def offer(self, packet: Packet) -> bool:
        """Enqueue an injected packet; False means it was dropped."""
        if len(self.queue) >= self.capacity:
            return False
        self.queue.append(packet)
        return True

    def backoff_remaining(self, now: int, epoch_len: int) -> int:
        if self.phase is not Phase.BACKOFF:
            return 0
        return max(0, -(-(self.wake_at - now) // epoch_len))


def backoff_epochs(collision_count: int, rng: Stream, max_exponent: int = 6) -> int:
    """Binary exponential backoff: uniform in [0, 2^min(count, max) - 1]."""
    if collision_count < 1:
        raise ValueError("backoff requires at least one collision")
    return rng.below(1 << min(collision_count, max_exponent))


def node_boundary(state: NodeState, occupancy: ChannelOccupancy, cfg: SimConfig) -> Optional[StartAttempt]:
    """Let one node try to start a transmission at ``occupancy.now``.

    The chosen channel is recorded in ``occupancy`` so that nodes stepped
    afterwards in the same cycle see the updated caps.
    """
    now = occupancy.now
    if state.phase is Phase.IN_EPOCH:
        return None
    if state.phase is Phase.BACKOFF:
        if now < state.wake_at:
            return None
        state.phase = Phase.IDLE
    if not state.queue:
        state.phase = Phase.IDLE
        return None
    if now < state.engaged_until:
        state.phase = Phase.WAIT_CHANNEL
        return None

    choices = [ch for ch in range(len(occupancy)) if admit(occupancy, ch, cfg.npt)]
    if not choices:
        state.phase = Phase.WAIT_CHANNEL
        return None
    channel = choices[0] if len(choices) == 1 else choices[state.rng.below(len(choices))]
    occupancy.occupy(channel, cfg.npt)
    head = state.queue[0]
    state.attempt = StartAttempt(state.node, head.dst, channel, head)
    state.phase = Phase.IN_EPOCH
    return state.attempt


def apply_outcome(state: NodeState, outcome: AckKind, cfg: SimConfig, now: int) -> NodeState:
    """Close the node's epoch at cycle ``now`` with the medium's verdict."""
    if state.phase is not Phase.IN_EPOCH:
        raise IntegrityError(f"cycle {now}: outcome {outcome.value} for node {state.node} not in an epoch")
    state.attempt = None
    if outcome is AckKind.ACK_OK:
        packet = state.queue.popleft()
        packet.delivered_at = now
        state.collision_count = 0
        state.phase = Phase.IDLE
    else:
        state.collision_count = min(state.collision_count + 1, cfg.backoff_max_exponent)
        delay = backoff_epochs(state.collision_count, state.rng, cfg.backoff_max_exponent)
        state.wake_at = now + delay * cfg.epoch_len
        state.phase = Phase.BACKOFF
    return state
