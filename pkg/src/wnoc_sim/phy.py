"""Behavioral model of the time-reversal wireless medium.

Energy is modeled in discrete ACK quanta: one quantum is the expected
energy of a correct one-bit ACK, two or more exceed the correct-energy
threshold and are read as an erroneous ACK.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Protocol as TypingProtocol, Sequence

from .core import IntegrityError, Packet, SimConfig


class ChoiceSource(TypingProtocol):
    def below(self, n: int) -> int: ...


@dataclass(frozen=True)
class StartAttempt:
    tx: int
    rx: int
    channel: int
    packet: Optional[Packet] = None

    def __post_init__(self):
        if self.tx == self.rx:
            raise ValueError(f"attempt from node {self.tx} to itself")


class DecodeKind(Enum):
    CORRECT = "CORRECT"
    ERRONEOUS = "ERRONEOUS"
    SILENT = "SILENT"


@dataclass(frozen=True)
class DecodeResult:
    rx: int
    kind: DecodeKind
    tx: Optional[int] = None  # true transmitter, CORRECT only
    decoded: Optional[int] = None  # address read from a collided preamble

    @property
    def ack_target(self) -> Optional[int]:
        if self.kind is DecodeKind.CORRECT:
            return self.tx
        if self.kind is DecodeKind.ERRONEOUS:
            return self.decoded
        return None


class AckKind(Enum):
    ACK_OK = "ACK_OK"
    NO_ACK = "NO_ACK"
    ERRONEOUS_ACK = "ERRONEOUS_ACK"


class ChannelOccupancy:
    """Busy-tone registry: per-channel count of transmissions in flight.

    A channel accepts new transmissions only while idle or during the very
    cycle its current epoch started; the busy tone blocks starts in the
    middle of an ongoing ACK or data phase.
    """

    def __init__(self, num_channels: int, epoch_len: int):
        self.epoch_len = epoch_len
        self.now = 0
        self._count = [0] * num_channels
        self._start = [0] * num_channels
        self._end = [0] * num_channels

    def __len__(self) -> int:
        return len(self._count)

    def advance(self, cycle: int) -> None:
        self.now = cycle

    def count(self, channel: int) -> int:
        return self._count[channel] if self.now < self._end[channel] else 0

    def __getitem__(self, channel: int) -> int:
        return self.count(channel)

    def joinable(self, channel: int) -> bool:
        return self.count(channel) == 0 or self._start[channel] == self.now

    def occupy(self, channel: int, npt: int) -> None:
        if self.count(channel) == 0:
            self._count[channel] = 0
            self._start[channel] = self.now
            self._end[channel] = self.now + self.epoch_len
        elif self._start[channel] != self.now:
            raise IntegrityError(f"cycle {self.now}: start on channel {channel} during an ongoing epoch")
        self._count[channel] += 1
        if self._count[channel] > npt:
            raise IntegrityError(
                f"cycle {self.now}: channel {channel} holds {self._count[channel]} transmissions, npt={npt}")

    def epoch_end(self, channel: int) -> int:
        return self._end[channel]


def admit(occupancy: ChannelOccupancy, channel: int, npt: int) -> bool:
    return occupancy.joinable(channel) and occupancy.count(channel) < npt


def admit_in_order(occupancy: ChannelOccupancy, requests: Iterable[tuple[int, int]], npt: int):
    """Admit ``(tx, channel)`` requests in ascending tx order until each cap.

    Returns ``(admitted, deferred)`` lists of requests; admitted requests
    are recorded in ``occupancy``.
    """
    admitted, deferred = [], []
    for tx, ch in sorted(requests):
        if admit(occupancy, ch, npt):
            occupancy.occupy(ch, npt)
            admitted.append((tx, ch))
        else:
            deferred.append((tx, ch))
    return admitted, deferred


def decode_preambles(
    attempts: Sequence[StartAttempt],
    rng: ChoiceSource,
    *,
    num_nodes: int,
    npt: Optional[int] = None,
    transmitting: Optional[Iterable[int]] = None,
    deaf: Iterable[int] = (),
) -> list[DecodeResult]:
    """Decode every preamble of one channel's epoch, one result per receiver.

    ``transmitting`` is every node whose radio is sending this epoch on any
    channel (defaults to the transmitters of ``attempts``); such a node is
    SILENT as a receiver, as is any node in ``deaf``. A receiver hit by two
    or more preambles reads a wrong address, drawn uniformly among nodes
    that can neither be confused with a real sender nor be fooled by a
    single stray quantum: the receiver itself, the colliding transmitters
    and every other transmitter on this channel whose own preamble was not
    decoded are excluded. With no candidate left, no ACK is sent.
    """
    if npt is not None and len(attempts) > npt:
        raise IntegrityError(f"{len(attempts)} simultaneous preambles exceed npt={npt}")
    if len({a.channel for a in attempts}) > 1:
        raise IntegrityError("decode_preambles called with attempts on several channels")
    txs = [a.tx for a in attempts]
    if len(set(txs)) != len(txs):
        raise IntegrityError(f"node transmits twice in one epoch: {sorted(txs)}")
    silent = set(txs if transmitting is None else transmitting) | set(deaf)

    by_rx: dict[int, list[int]] = defaultdict(list)
    for a in attempts:
        by_rx[a.rx].append(a.tx)

    kinds = {}
    for rx, senders in by_rx.items():
        if rx in silent:
            kinds[rx] = DecodeKind.SILENT
        elif len(senders) == 1:
            kinds[rx] = DecodeKind.CORRECT
        else:
            kinds[rx] = DecodeKind.ERRONEOUS
    unacked = {a.tx for a in attempts if kinds[a.rx] is not DecodeKind.CORRECT}

    results = []
    for rx in sorted(by_rx):
        kind = kinds[rx]
        if kind is DecodeKind.CORRECT:
            results.append(DecodeResult(rx, kind, tx=by_rx[rx][0]))
        elif kind is DecodeKind.SILENT:
            results.append(DecodeResult(rx, kind))
        else:
            candidates = [n for n in range(num_nodes) if n != rx and n not in unacked]
            decoded = candidates[rng.below(len(candidates))] if candidates else None
            results.append(DecodeResult(rx, kind, decoded=decoded))
    return results


def route_acks(decodes: Iterable[DecodeResult]) -> dict[int, int]:
    quanta: Counter = Counter()
    for d in decodes:
        if d.ack_target is not None:
            quanta[d.ack_target] += 1
    return dict(quanta)


def classify_ack(quanta: int, awaiting: bool) -> Optional[AckKind]:
    if quanta < 0:
        raise ValueError("quanta must be non-negative")
    if not awaiting:
        return None
    if quanta == 0:
        return AckKind.NO_ACK
    if quanta == 1:
        return AckKind.ACK_OK
    return AckKind.ERRONEOUS_ACK


@dataclass
class EpochOutcome:
    outcomes: dict[int, AckKind] = field(default_factory=dict)
    delivered: list[Packet] = field(default_factory=list)
    decodes: dict[int, list[DecodeResult]] = field(default_factory=dict)

    def for_attempt(self, attempt: StartAttempt) -> AckKind:
        return self.outcomes[attempt.tx]


def arbitrate_epoch(
    attempts: Sequence[StartAttempt],
    cfg: SimConfig,
    rng: ChoiceSource,
    *,
    busy: Iterable[int] = (),
    receiving: Iterable[int] = (),
) -> EpochOutcome:
    """Resolve all transmissions that start together.

    ``busy`` holds nodes still transmitting from earlier epochs (other
    channels); ``receiving`` holds nodes engaged as receivers in such
    epochs, which only matters when ``cfg.rx_multichannel`` is false.
    Channels are resolved independently in ascending order.
    """
    per_channel: dict[int, list[StartAttempt]] = defaultdict(list)
    for a in attempts:
        per_channel[a.channel].append(a)
    for ch, group in per_channel.items():
        if len(group) > cfg.npt:
            raise IntegrityError(
                f"channel {ch}: {len(group)} attempts exceed npt={cfg.npt} "
                f"(nodes {sorted(a.tx for a in group)})")

    transmitting = set(busy) | {a.tx for a in attempts}
    deaf: set[int] = set()
    if not cfg.rx_multichannel:
        # single-stream receivers: contention across channels blanks them
        deaf |= set(receiving)
        channels_of: dict[int, set[int]] = defaultdict(set)
        for a in attempts:
            channels_of[a.rx].add(a.channel)
        deaf |= {rx for rx, chs in channels_of.items() if len(chs) > 1}

    result = EpochOutcome()
    for ch in sorted(per_channel):
        group = sorted(per_channel[ch], key=lambda a: a.tx)
        decodes = decode_preambles(group, rng, num_nodes=cfg.num_nodes, npt=cfg.npt,
                                   transmitting=transmitting, deaf=deaf)
        quanta = route_acks(decodes)
        result.decodes[ch] = decodes
        for a in group:
            kind = classify_ack(quanta.get(a.tx, 0), awaiting=True)
            result.outcomes[a.tx] = kind
            if kind is AckKind.ACK_OK and a.packet is not None:
                result.delivered.append(a.packet)
    return result
