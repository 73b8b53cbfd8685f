"""Pure-Python simulation kernel, composed from the protocol modules.

``_kernel.pyx`` implements the same two entry points with identical
semantics and random draw order; the test suite holds both to
bit-identical output.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .baselines import BrsVerdict, brs_contend, build_rings, TokenState, token_advance
from .core import IntegrityError, Packet, Protocol, SimConfig
from .phy import AckKind, ChannelOccupancy, arbitrate_epoch
from .rng import Stream
from .traffic import DestinationSampler, new_source, pareto_period, step_source
from .trmac import NodeState, Phase, apply_outcome, node_boundary

INJECT, DROP, START, ACK_OK, NO_ACK, ERR_ACK, DELIVER, TOKEN_PASS, NACK = range(9)
_ACK_EVENT = {AckKind.ACK_OK: ACK_OK, AckKind.NO_ACK: NO_ACK, AckKind.ERRONEOUS_ACK: ERR_ACK}

BACKEND = "python"


def generate_arrivals(
    streams: Sequence[Stream],
    total_cycles: int,
    rates: np.ndarray,
    alpha: float,
    weights: np.ndarray,
    uniform_dst: bool,
):
    """Per-cycle ON/OFF arrivals for every node, merged by (cycle, src)."""
    n = len(streams)
    sampler = None if uniform_dst else DestinationSampler(weights)
    cycles: list[int] = []
    srcs: list[int] = []
    dsts: list[int] = []
    for node in range(n):
        rng = streams[node]
        src = new_source(node, float(rates[node]), alpha, rng)
        t = 0
        while t < total_cycles:
            if not src.on or src.on_rate <= 0.0:
                # silent stretch: no draws until the period flips
                skip = min(src.remaining, total_cycles - t)
                t += skip
                src.remaining -= skip
                if src.remaining == 0:
                    src.on = not src.on
                    src.remaining = pareto_period(alpha, rng)
                continue
            emit, _ = step_source(src, rng)
            if emit:
                if sampler is None:
                    d = rng.below(n - 1)
                    dst = d + 1 if d >= node else d
                else:
                    dst = sampler.draw(node, rng)
                cycles.append(t)
                srcs.append(node)
                dsts.append(dst)
            t += 1
    cycles_a = np.asarray(cycles, dtype=np.int64)
    srcs_a = np.asarray(srcs, dtype=np.int32)
    dsts_a = np.asarray(dsts, dtype=np.int32)
    order = np.lexsort((srcs_a, cycles_a))
    return cycles_a[order], srcs_a[order], dsts_a[order]


class _Run:
    def __init__(self, cfg, arr_cycle, arr_src, arr_dst, mac_rngs, trace):
        self.cfg = cfg
        self.arr_cycle = arr_cycle.tolist()
        self.arr_src = arr_src.tolist()
        self.arr_dst = arr_dst.tolist()
        self.npk = len(self.arr_cycle)
        self.delivered_at = np.full(self.npk, -1, dtype=np.int64)
        self.dropped = np.zeros(self.npk, dtype=np.uint8)
        self.nodes = [NodeState(i, mac_rngs[i], cfg.queue_capacity) for i in range(cfg.num_nodes)]
        self.next_arrival = 0
        self.backlog: set[int] = set()
        self.attempts_w = 0
        self.collisions_w = 0
        self.busy_w = 0
        self.rows: list[tuple] | None = [] if trace else None
        self.warmup = cfg.warmup
        self.total = cfg.total_cycles

    def log(self, cycle, event, node, peer, channel, pid):
        if self.rows is not None:
            self.rows.append((cycle, event, node, peer, channel, pid))

    def inject(self, c):
        i = self.next_arrival
        while i < self.npk and self.arr_cycle[i] == c:
            src = self.arr_src[i]
            self.log(c, INJECT, src, self.arr_dst[i], -1, i)
            if self.nodes[src].offer(Packet(i, src, self.arr_dst[i], c)):
                self.backlog.add(src)
            else:
                self.dropped[i] = 1
                self.log(c, DROP, src, self.arr_dst[i], -1, i)
            i += 1
        self.next_arrival = i

    def deliver(self, node, c):
        st = self.nodes[node]
        pkt = st.queue[0]
        apply_outcome(st, AckKind.ACK_OK, self.cfg, c)
        self.delivered_at[pkt.id] = c
        if not st.queue:
            self.backlog.discard(node)
        return pkt

    def count_airtime(self, start, end):
        lo, hi = max(start, self.warmup), min(end, self.total)
        if hi > lo:
            self.busy_w += hi - lo

    def result(self):
        rows = self.rows
        trace = None
        if rows is not None:
            trace = np.asarray(rows, dtype=np.int64).reshape(-1, 6)
        return {
            "delivered_at": self.delivered_at,
            "dropped": self.dropped,
            "queued_end": sum(len(s.queue) for s in self.nodes),
            "attempts_w": self.attempts_w,
            "collisions_w": self.collisions_w,
            "busy_w": self.busy_w,
            "trace": trace,
        }


def _run_trmac(run: _Run, phy_rng: Stream):
    cfg = run.cfg
    E = cfg.epoch_len
    C = cfg.num_freq_channels
    occ = ChannelOccupancy(C, E)
    nodes = run.nodes
    tx_until = [0] * cfg.num_nodes
    finishing: dict[int, list] = {}

    for c in range(run.total):
        occ.advance(c)
        done = finishing.pop(c, None)
        if done:
            for attempt, kind in done:
                st = nodes[attempt.tx]
                run.log(c, _ACK_EVENT[kind], attempt.tx, attempt.rx, attempt.channel, attempt.packet.id)
                if kind is AckKind.ACK_OK:
                    run.deliver(attempt.tx, c)
                    run.log(c, DELIVER, attempt.rx, attempt.tx, attempt.channel, attempt.packet.id)
                else:
                    apply_outcome(st, kind, cfg, c)

        run.inject(c)

        if not run.backlog or not any(occ.count(ch) == 0 for ch in range(C)):
            continue
        attempts = []
        for node in sorted(run.backlog):
            st = nodes[node]
            if st.phase is Phase.IN_EPOCH:
                continue
            a = node_boundary(st, occ, cfg)
            if a is not None:
                attempts.append(a)
                if not any(occ.joinable(ch) and occ.count(ch) < cfg.npt for ch in range(C)):
                    break
        if not attempts:
            continue

        busy = [n for n in range(cfg.num_nodes) if tx_until[n] > c]
        receiving = [n for n in range(cfg.num_nodes) if nodes[n].engaged_until > c]
        outcome = arbitrate_epoch(attempts, cfg, phy_rng, busy=busy, receiving=receiving)
        ordered = sorted(attempts, key=lambda a: (a.channel, a.tx))
        for a in ordered:
            kind = outcome.outcomes[a.tx]
            tx_until[a.tx] = c + E
            run.log(c, START, a.tx, a.rx, a.channel, a.packet.id)
            if c >= run.warmup:
                run.attempts_w += 1
                if kind is not AckKind.ACK_OK:
                    run.collisions_w += 1
            if kind is AckKind.ACK_OK:
                nodes[a.rx].engaged_until = c + E
                run.count_airtime(c, c + E)
        finishing[c + E] = [(a, outcome.outcomes[a.tx]) for a in ordered]


def _run_brs(run: _Run):
    cfg = run.cfg
    C = cfg.num_freq_channels
    nodes = run.nodes
    busy_until = [0] * C
    done_at = [-1] * C
    done_kind = [None] * C
    done_nodes: list[tuple] = [()] * C

    for c in range(run.total):
        for ch in range(C):
            if done_at[ch] != c:
                continue
            done_at[ch] = -1
            if done_kind[ch] is BrsVerdict.SUCCESS:
                node = done_nodes[ch][0]
                pkt = run.deliver(node, c)
                run.log(c, DELIVER, pkt.dst, node, ch, pkt.id)
            else:
                for node in done_nodes[ch]:
                    st = nodes[node]
                    run.log(c - 1, NACK, node, st.queue[0].dst, ch, st.queue[0].id)
                    apply_outcome(st, AckKind.NO_ACK, cfg, c)

        run.inject(c)

        if not run.backlog:
            continue
        contenders: dict[int, list[int]] = {}
        for node in sorted(run.backlog):
            ch = node % C
            if busy_until[ch] > c:
                continue
            st = nodes[node]
            if st.phase is Phase.IN_EPOCH or st.wake_at > c:
                continue
            contenders.setdefault(ch, []).append(node)
        if not contenders:
            continue
        for ch, res in brs_contend(contenders, busy_until, c, cfg).items():
            busy_until[ch] = res.ends_at
            done_at[ch] = res.ends_at
            done_kind[ch] = res.verdict
            done_nodes[ch] = res.nodes
            for node in res.nodes:
                st = nodes[node]
                st.phase = Phase.IN_EPOCH
                head = st.queue[0]
                run.log(c, START, node, head.dst, ch, head.id)
            if c >= run.warmup:
                run.attempts_w += len(res.nodes)
                if res.verdict is BrsVerdict.COLLISION:
                    run.collisions_w += len(res.nodes)
            if res.verdict is BrsVerdict.SUCCESS:
                run.count_airtime(c, res.ends_at)


def _run_token(run: _Run):
    cfg = run.cfg
    C = cfg.num_freq_channels
    nodes = run.nodes
    queues = [st.queue for st in nodes]
    tokens = [TokenState(ch, ring, pass_cost_cycles=cfg.token_pass_cycles)
              for ch, ring in enumerate(build_rings(cfg.num_nodes, C))]
    done_at = [-1] * C
    done_pass: list[tuple] = [()] * C

    for c in range(run.total):
        for ch in range(C):
            if done_at[ch] != c:
                continue
            done_at[ch] = -1
            holder, successor = done_pass[ch]
            pkt = run.deliver(holder, c)
            run.log(c, DELIVER, pkt.dst, holder, ch, pkt.id)
            run.log(c, TOKEN_PASS, holder, successor, ch, -1)

        run.inject(c)

        for tok in tokens:
            if c < tok.next_action:
                continue
            events = token_advance(tok, queues, c, cfg)
            first = events[0]
            if first.kind == "TRANSMIT":
                st = nodes[first.holder]
                st.phase = Phase.IN_EPOCH
                run.log(c, START, first.holder, first.packet.dst, tok.channel, first.packet.id)
                done_at[tok.channel] = events[1].cycle
                done_pass[tok.channel] = (first.holder, first.successor)
                if c >= run.warmup:
                    run.attempts_w += 1
                run.count_airtime(c, events[1].cycle)
            else:
                run.log(c, TOKEN_PASS, first.holder, first.successor, tok.channel, -1)


def simulate(cfg: SimConfig, arr_cycle, arr_src, arr_dst, phy_rng: Stream,
             mac_rngs: Sequence[Stream], trace: bool = False) -> dict:
    run = _Run(cfg, arr_cycle, arr_src, arr_dst, mac_rngs, trace)
    if cfg.protocol is Protocol.TRMAC:
        _run_trmac(run, phy_rng)
    elif cfg.protocol is Protocol.BRS:
        _run_brs(run)
    elif cfg.protocol is Protocol.TOKEN:
        _run_token(run)
    else:
        raise IntegrityError(f"unknown protocol {cfg.protocol!r}")
    return run.result()
