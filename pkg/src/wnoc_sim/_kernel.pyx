# distutils: language = c++
# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation kernel.

Mirrors ``_pykernel`` operation for operation: same random streams,
same draw order, same trace emission order.
"""

import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport pow
from libc.stdint cimport int64_t, uint64_t, uint8_t
from libcpp.vector cimport vector
from numpy.random cimport bitgen_t

from .core import IntegrityError, Protocol
from .traffic import DestinationSampler

cnp.import_array()

BACKEND = "cython"

cdef enum:
    INJECT = 0
    DROP = 1
    START = 2
    ACK_OK = 3
    NO_ACK = 4
    ERR_ACK = 5
    DELIVER = 6
    TOKEN_PASS = 7
    NACK = 8

cdef enum:
    IDLE = 0
    WAIT = 1
    IN_EPOCH = 2
    BACKOFF = 3


cdef inline double rnd(bitgen_t* g) noexcept nogil:
    return <double>(g.next_uint64(g.state) >> 11) * (1.0 / 9007199254740992.0)


cdef inline int64_t below(bitgen_t* g, int64_t n) noexcept nogil:
    return <int64_t>(rnd(g) * <double>n)


cdef inline int64_t pareto(bitgen_t* g, double alpha) noexcept nogil:
    return <int64_t>pow(1.0 - rnd(g), -1.0 / alpha)


cdef bitgen_t* _bitgen(stream) except NULL:
    return <bitgen_t*>PyCapsule_GetPointer(stream.bitgen.capsule, "BitGenerator")


cdef inline double _weight(const double* cum, int64_t i) noexcept nogil:
    if i > 0:
        return cum[i] - cum[i - 1]
    return cum[0]


cdef int64_t _pick_fallback(const uint8_t* positive, int64_t n, int64_t src, double u) noexcept nogil:
    cdef int64_t i, k = 0, want
    cdef bint any_pos = False
    for i in range(n):
        if i != src and positive[i]:
            k += 1
    any_pos = k > 0
    if not any_pos:
        k = n - 1
    want = <int64_t>(u * k)
    for i in range(n):
        if i == src or (any_pos and not positive[i]):
            continue
        if want == 0:
            return i
        want -= 1
    return -1


cdef int64_t _pick(const double* cum, const uint8_t* positive, int64_t n, int64_t src, double u) noexcept nogil:
    cdef double start = cum[src - 1] if src > 0 else 0.0
    cdef double w_src = cum[src] - start
    cdef double rest = cum[n - 1] - w_src
    cdef double x
    cdef int64_t lo = 0, hi = n, mid
    if rest <= 0.0:
        return _pick_fallback(positive, n, src, u)
    x = u * rest
    if x >= start:
        x += w_src
    while lo < hi:
        mid = (lo + hi) // 2
        if x < cum[mid]:
            hi = mid
        else:
            lo = mid + 1
    while lo < n and (lo == src or _weight(cum, lo) <= 0.0):
        lo += 1
    if lo >= n:
        lo = n - 1
        while lo == src or _weight(cum, lo) <= 0.0:
            lo -= 1
    return lo


def generate_arrivals(streams, int64_t total_cycles, rates, double alpha, weights, bint uniform_dst):
    cdef int64_t n = len(streams)
    cdef double[::1] rate_v = np.ascontiguousarray(rates, dtype=np.float64)
    cdef double[::1] cum
    cdef uint8_t[::1] positive
    if uniform_dst:
        cum = np.zeros(n, dtype=np.float64)
        positive = np.zeros(n, dtype=np.uint8)
    else:
        sampler = DestinationSampler(weights)
        cum = np.ascontiguousarray(sampler.cum_array, dtype=np.float64)
        positive = np.ascontiguousarray(sampler.positive, dtype=np.uint8)
    cdef vector[int64_t] out_c
    cdef vector[int] out_s, out_d
    cdef bitgen_t* g
    cdef int64_t node, t, remaining, skip, dst
    cdef bint on, emit
    cdef double rate
    for node in range(n):
        g = _bitgen(streams[node])
        rate = rate_v[node]
        with nogil:
            on = rnd(g) < 0.5
            remaining = pareto(g, alpha)
            t = 0
            while t < total_cycles:
                if not on or rate <= 0.0:
                    skip = remaining if remaining < total_cycles - t else total_cycles - t
                    t += skip
                    remaining -= skip
                    if remaining == 0:
                        on = not on
                        remaining = pareto(g, alpha)
                    continue
                emit = rate >= 1.0 or rnd(g) < rate
                remaining -= 1
                if remaining == 0:
                    on = not on
                    remaining = pareto(g, alpha)
                if emit:
                    if uniform_dst:
                        dst = below(g, n - 1)
                        if dst >= node:
                            dst += 1
                    else:
                        dst = _pick(&cum[0], &positive[0], n, node, rnd(g))
                    out_c.push_back(t)
                    out_s.push_back(<int>node)
                    out_d.push_back(<int>dst)
                t += 1
    cdef Py_ssize_t k = out_c.size()
    cycles = np.empty(k, dtype=np.int64)
    srcs = np.empty(k, dtype=np.int32)
    dsts = np.empty(k, dtype=np.int32)
    cdef int64_t[::1] cv = cycles
    cdef int[::1] sv = srcs, dv = dsts
    cdef Py_ssize_t i
    for i in range(k):
        cv[i] = out_c[i]
        sv[i] = out_s[i]
        dv[i] = out_d[i]
    order = np.lexsort((srcs, cycles))
    return cycles[order], srcs[order], dsts[order]


cdef class _State:
    """Shared per-run state: queues, packet bookkeeping, counters, trace."""
    cdef int64_t N, Q, W, T, npk, next_arrival, backlog
    cdef int64_t attempts_w, collisions_w, busy_w
    cdef bint tracing
    cdef vector[int64_t] rows
    cdef int64_t[::1] arr_cycle
    cdef int[::1] arr_src, arr_dst
    cdef int64_t[::1] delivered_at
    cdef unsigned char[::1] dropped
    cdef int64_t[::1] qbuf
    cdef int64_t[::1] qhead, qlen
    cdef object delivered_np, dropped_np

    def __init__(self, cfg, arr_cycle, arr_src, arr_dst, bint tracing):
        self.N = cfg.num_nodes
        self.Q = cfg.queue_capacity
        self.W = cfg.warmup
        self.T = cfg.total_cycles
        self.arr_cycle = np.ascontiguousarray(arr_cycle, dtype=np.int64)
        self.arr_src = np.ascontiguousarray(arr_src, dtype=np.int32)
        self.arr_dst = np.ascontiguousarray(arr_dst, dtype=np.int32)
        self.npk = len(arr_cycle)
        self.delivered_np = np.full(self.npk, -1, dtype=np.int64)
        self.dropped_np = np.zeros(self.npk, dtype=np.uint8)
        self.delivered_at = self.delivered_np
        self.dropped = self.dropped_np
        self.qbuf = np.zeros(self.N * self.Q, dtype=np.int64)
        self.qhead = np.zeros(self.N, dtype=np.int64)
        self.qlen = np.zeros(self.N, dtype=np.int64)
        self.next_arrival = 0
        self.backlog = 0
        self.attempts_w = 0
        self.collisions_w = 0
        self.busy_w = 0
        self.tracing = tracing

    cdef inline void log(self, int64_t cycle, int64_t event, int64_t node, int64_t peer,
                         int64_t channel, int64_t pid) noexcept nogil:
        if self.tracing:
            self.rows.push_back(cycle)
            self.rows.push_back(event)
            self.rows.push_back(node)
            self.rows.push_back(peer)
            self.rows.push_back(channel)
            self.rows.push_back(pid)

    cdef inline int64_t head(self, int64_t node) noexcept nogil:
        return self.qbuf[node * self.Q + self.qhead[node]]

    cdef inline void inject(self, int64_t c) noexcept nogil:
        cdef int64_t i = self.next_arrival, src, dst
        while i < self.npk and self.arr_cycle[i] == c:
            src = self.arr_src[i]
            dst = self.arr_dst[i]
            self.log(c, INJECT, src, dst, -1, i)
            if self.qlen[src] < self.Q:
                self.qbuf[src * self.Q + (self.qhead[src] + self.qlen[src]) % self.Q] = i
                self.qlen[src] += 1
                if self.qlen[src] == 1:
                    self.backlog += 1
            else:
                self.dropped[i] = 1
                self.log(c, DROP, src, dst, -1, i)
            i += 1
        self.next_arrival = i

    cdef inline int64_t pop(self, int64_t node, int64_t c) noexcept nogil:
        cdef int64_t pid = self.head(node)
        self.qhead[node] = (self.qhead[node] + 1) % self.Q
        self.qlen[node] -= 1
        if self.qlen[node] == 0:
            self.backlog -= 1
        self.delivered_at[pid] = c
        return pid

    cdef inline void airtime(self, int64_t start, int64_t end) noexcept nogil:
        cdef int64_t lo = start if start > self.W else self.W
        cdef int64_t hi = end if end < self.T else self.T
        if hi > lo:
            self.busy_w += hi - lo

    def result(self):
        trace = None
        cdef Py_ssize_t k
        cdef int64_t[::1] tv
        if self.tracing:
            trace = np.empty(self.rows.size(), dtype=np.int64)
            tv = trace
            for k in range(<Py_ssize_t>self.rows.size()):
                tv[k] = self.rows[k]
            trace = trace.reshape(-1, 6)
        return {
            "delivered_at": self.delivered_np,
            "dropped": self.dropped_np,
            "queued_end": int(np.asarray(self.qlen).sum()),
            "attempts_w": self.attempts_w,
            "collisions_w": self.collisions_w,
            "busy_w": self.busy_w,
            "trace": trace,
        }


cdef void _backoff(int64_t node, int64_t c, int64_t[::1] cc, int64_t[::1] wake_at,
                   int64_t[::1] phase, bitgen_t** macs, int64_t maxexp, int64_t E) noexcept nogil:
    cdef int64_t k = cc[node] + 1
    if k > maxexp:
        k = maxexp
    cc[node] = k
    wake_at[node] = c + below(macs[node], (<int64_t>1) << k) * E
    phase[node] = BACKOFF


cdef _run_trmac(_State s, cfg, phy_rng, mac_rngs):
    cdef int64_t N = s.N, C = cfg.num_freq_channels, npt = cfg.npt
    cdef int64_t E = cfg.epoch_len, maxexp = cfg.backoff_max_exponent
    cdef bint rx_multi = cfg.rx_multichannel
    cdef bitgen_t* phy = _bitgen(phy_rng)
    cdef vector[bitgen_t*] mac_v
    for rng in mac_rngs:
        mac_v.push_back(_bitgen(rng))
    cdef bitgen_t** macs = mac_v.data()

    cdef int64_t[::1] phase = np.zeros(N, dtype=np.int64)
    cdef int64_t[::1] cc = np.zeros(N, dtype=np.int64)
    cdef int64_t[::1] wake_at = np.zeros(N, dtype=np.int64)
    cdef int64_t[::1] engaged = np.zeros(N, dtype=np.int64)
    cdef int64_t[::1] tx_until = np.zeros(N, dtype=np.int64)
    cdef int64_t[::1] att_rx = np.zeros(N, dtype=np.int64)
    cdef int64_t[::1] att_kind = np.zeros(N, dtype=np.int64)
    cdef int64_t[::1] silent = np.zeros(N, dtype=np.int64)
    cdef int64_t[::1] deaf = np.zeros(N, dtype=np.int64)
    cdef int64_t[::1] rx_chan = np.full(N, -1, dtype=np.int64)
    cdef int64_t[::1] ch_count = np.zeros(C, dtype=np.int64)
    cdef int64_t[::1] ch_start = np.zeros(C, dtype=np.int64)
    cdef int64_t[::1] ch_end = np.zeros(C, dtype=np.int64)
    cdef int64_t[::1] ch_pending = np.zeros(C, dtype=np.int64)
    cdef int64_t[::1] members = np.zeros(C * npt, dtype=np.int64)
    cdef int64_t[::1] choices = np.zeros(C, dtype=np.int64)
    # per-channel scratch for arbitration (size npt)
    cdef int64_t[::1] rx_kind = np.zeros(npt, dtype=np.int64)   # 0 correct, 1 erroneous, 2 silent
    cdef int64_t[::1] quanta = np.zeros(npt, dtype=np.int64)
    cdef int64_t[::1] excluded = np.zeros(npt + 1, dtype=np.int64)

    cdef int64_t c, ch, i, j, m, k, node, rx, pid, nchoice, nstarted, cnt, nexcl
    cdef int64_t ncand, idx, decoded, cand, prev_rx, tmp, x
    cdef bint any_open, any_admit, dup

    with nogil:
        for c in range(s.T):
            # 1. close epochs ending now
            for ch in range(C):
                if ch_pending[ch] == 0 or ch_end[ch] != c:
                    continue
                ch_pending[ch] = 0
                for m in range(ch_count[ch]):
                    node = members[ch * npt + m]
                    pid = s.head(node)
                    k = att_kind[node]
                    if k == 0:
                        s.log(c, ACK_OK, node, att_rx[node], ch, pid)
                        s.pop(node, c)
                        cc[node] = 0
                        phase[node] = IDLE
                        s.log(c, DELIVER, att_rx[node], node, ch, pid)
                    else:
                        s.log(c, NO_ACK if k == 1 else ERR_ACK, node, att_rx[node], ch, pid)
                        _backoff(node, c, cc, wake_at, phase, macs, maxexp, E)

            # 2. arrivals
            s.inject(c)

            # 3. channel acquisition in ascending node order
            if s.backlog == 0:
                continue
            any_open = False
            for ch in range(C):
                if c >= ch_end[ch]:
                    any_open = True
            if not any_open:
                continue
            nstarted = 0
            for node in range(N):
                if s.qlen[node] == 0 or phase[node] == IN_EPOCH:
                    continue
                if phase[node] == BACKOFF:
                    if c < wake_at[node]:
                        continue
                    phase[node] = IDLE
                if c < engaged[node]:
                    phase[node] = WAIT
                    continue
                nchoice = 0
                for ch in range(C):
                    cnt = ch_count[ch] if c < ch_end[ch] else 0
                    if (cnt == 0 or ch_start[ch] == c) and cnt < npt:
                        choices[nchoice] = ch
                        nchoice += 1
                if nchoice == 0:
                    phase[node] = WAIT
                    continue
                if nchoice == 1:
                    ch = choices[0]
                else:
                    ch = choices[below(macs[node], nchoice)]
                if c >= ch_end[ch]:
                    ch_count[ch] = 0
                    ch_start[ch] = c
                    ch_end[ch] = c + E
                members[ch * npt + ch_count[ch]] = node
                ch_count[ch] += 1
                att_rx[node] = s.arr_dst[s.head(node)]
                phase[node] = IN_EPOCH
                nstarted += 1
                any_admit = False
                for i in range(C):
                    cnt = ch_count[i] if c < ch_end[i] else 0
                    if (cnt == 0 or ch_start[i] == c) and cnt < npt:
                        any_admit = True
                if not any_admit:
                    break
            if nstarted == 0:
                continue

            # 4. arbitration of the epochs that start now
            for node in range(N):
                silent[node] = 1 if tx_until[node] > c else 0
                deaf[node] = 0
                rx_chan[node] = -1
            for ch in range(C):
                if ch_start[ch] != c or ch_end[ch] != c + E:
                    continue
                for m in range(ch_count[ch]):
                    silent[members[ch * npt + m]] = 1
            if not rx_multi:
                for node in range(N):
                    if engaged[node] > c:
                        deaf[node] = 1
                for ch in range(C):
                    if ch_start[ch] != c or ch_end[ch] != c + E:
                        continue
                    for m in range(ch_count[ch]):
                        rx = att_rx[members[ch * npt + m]]
                        if rx_chan[rx] == -1:
                            rx_chan[rx] = ch
                        elif rx_chan[rx] != ch:
                            deaf[rx] = 1

            for ch in range(C):
                if ch_start[ch] != c or ch_end[ch] != c + E:
                    continue
                cnt = ch_count[ch]
                if cnt > npt:
                    with gil:
                        raise IntegrityError(f"cycle {c}: channel {ch} holds {cnt} transmissions, npt={npt}")
                # receiver status per member
                for m in range(cnt):
                    quanta[m] = 0
                    rx = att_rx[members[ch * npt + m]]
                    if silent[rx] or deaf[rx]:
                        rx_kind[m] = 2
                    else:
                        k = 0
                        for j in range(cnt):
                            if att_rx[members[ch * npt + j]] == rx:
                                k += 1
                        rx_kind[m] = 0 if k == 1 else 1
                # distinct receivers in ascending order
                prev_rx = -1
                while True:
                    rx = -1
                    for m in range(cnt):
                        x = att_rx[members[ch * npt + m]]
                        if x > prev_rx and (rx == -1 or x < rx):
                            rx = x
                    if rx == -1:
                        break
                    prev_rx = rx
                    idx = -1
                    for m in range(cnt):
                        if att_rx[members[ch * npt + m]] == rx:
                            idx = m
                            break
                    if rx_kind[idx] == 0:
                        quanta[idx] += 1
                    elif rx_kind[idx] == 1:
                        # exclusion list: the receiver plus every unacked sender
                        nexcl = 0
                        excluded[nexcl] = rx
                        nexcl += 1
                        for m in range(cnt):
                            if rx_kind[m] != 0:
                                node = members[ch * npt + m]
                                dup = False
                                for j in range(nexcl):
                                    if excluded[j] == node:
                                        dup = True
                                if not dup:
                                    excluded[nexcl] = node
                                    nexcl += 1
                        for i in range(1, nexcl):
                            tmp = excluded[i]
                            j = i - 1
                            while j >= 0 and excluded[j] > tmp:
                                excluded[j + 1] = excluded[j]
                                j -= 1
                            excluded[j + 1] = tmp
                        ncand = N - nexcl
                        if ncand > 0:
                            decoded = below(phy, ncand)
                            for j in range(nexcl):
                                if excluded[j] <= decoded:
                                    decoded += 1
                            for m in range(cnt):
                                if members[ch * npt + m] == decoded:
                                    quanta[m] += 1
                for m in range(cnt):
                    node = members[ch * npt + m]
                    if quanta[m] == 0:
                        att_kind[node] = 1
                    elif quanta[m] == 1:
                        att_kind[node] = 0
                    else:
                        att_kind[node] = 2

            for ch in range(C):
                if ch_start[ch] != c or ch_end[ch] != c + E:
                    continue
                ch_pending[ch] = 1
                for m in range(ch_count[ch]):
                    node = members[ch * npt + m]
                    tx_until[node] = c + E
                    s.log(c, START, node, att_rx[node], ch, s.head(node))
                    if c >= s.W:
                        s.attempts_w += 1
                        if att_kind[node] != 0:
                            s.collisions_w += 1
                    if att_kind[node] == 0:
                        engaged[att_rx[node]] = c + E
                        s.airtime(c, c + E)


cdef _run_brs(_State s, cfg, mac_rngs):
    cdef int64_t N = s.N, C = cfg.num_freq_channels
    cdef int64_t E = cfg.epoch_len, maxexp = cfg.backoff_max_exponent
    cdef int64_t P = cfg.preamble_cycles, D = cfg.data_cycles
    cdef vector[bitgen_t*] mac_v
    for rng in mac_rngs:
        mac_v.push_back(_bitgen(rng))
    cdef bitgen_t** macs = mac_v.data()
    cdef int64_t[::1] phase = np.zeros(N, dtype=np.int64)
    cdef int64_t[::1] cc = np.zeros(N, dtype=np.int64)
    cdef int64_t[::1] wake_at = np.zeros(N, dtype=np.int64)
    cdef int64_t[::1] busy_until = np.zeros(C, dtype=np.int64)
    cdef int64_t[::1] done_at = np.full(C, -1, dtype=np.int64)
    cdef int64_t[::1] done_kind = np.zeros(C, dtype=np.int64)   # 1 success, 2 collision
    cdef int64_t c, ch, node, pid, k, ends

    with nogil:
        for c in range(s.T):
            for ch in range(C):
                if done_at[ch] != c:
                    continue
                done_at[ch] = -1
                node = ch
                while node < N:
                    if phase[node] == IN_EPOCH:
                        pid = s.head(node)
                        if done_kind[ch] == 1:
                            s.pop(node, c)
                            cc[node] = 0
                            phase[node] = IDLE
                            s.log(c, DELIVER, s.arr_dst[pid], node, ch, pid)
                        else:
                            s.log(c - 1, NACK, node, s.arr_dst[pid], ch, pid)
                            _backoff(node, c, cc, wake_at, phase, macs, maxexp, E)
                    node += C

            s.inject(c)

            if s.backlog == 0:
                continue
            for ch in range(C):
                if busy_until[ch] > c:
                    continue
                k = 0
                node = ch
                while node < N:
                    if s.qlen[node] > 0 and phase[node] != IN_EPOCH and wake_at[node] <= c:
                        k += 1
                    node += C
                if k == 0:
                    continue
                ends = c + P + D if k == 1 else c + P + 1
                busy_until[ch] = ends
                done_at[ch] = ends
                done_kind[ch] = 1 if k == 1 else 2
                node = ch
                while node < N:
                    if s.qlen[node] > 0 and phase[node] != IN_EPOCH and wake_at[node] <= c:
                        phase[node] = IN_EPOCH
                        pid = s.head(node)
                        s.log(c, START, node, s.arr_dst[pid], ch, pid)
                    node += C
                if c >= s.W:
                    s.attempts_w += k
                    if k > 1:
                        s.collisions_w += k
                if k == 1:
                    s.airtime(c, ends)


cdef _run_token(_State s, cfg):
    cdef int64_t N = s.N, C = cfg.num_freq_channels
    cdef int64_t P = cfg.preamble_cycles, D = cfg.data_cycles, pass_cost = cfg.token_pass_cycles
    cdef int64_t[::1] pos = np.zeros(C, dtype=np.int64)
    cdef int64_t[::1] ring_len = np.zeros(C, dtype=np.int64)
    cdef int64_t[::1] next_action = np.zeros(C, dtype=np.int64)
    cdef int64_t[::1] done_at = np.full(C, -1, dtype=np.int64)
    cdef int64_t[::1] done_holder = np.zeros(C, dtype=np.int64)
    cdef int64_t[::1] done_succ = np.zeros(C, dtype=np.int64)
    cdef int64_t c, ch, holder, succ, pid, done
    for ch in range(C):
        ring_len[ch] = (N - ch + C - 1) // C

    with nogil:
        for c in range(s.T):
            for ch in range(C):
                if done_at[ch] != c:
                    continue
                done_at[ch] = -1
                holder = done_holder[ch]
                pid = s.pop(holder, c)
                s.log(c, DELIVER, s.arr_dst[pid], holder, ch, pid)
                s.log(c, TOKEN_PASS, holder, done_succ[ch], ch, -1)

            s.inject(c)

            for ch in range(C):
                if c < next_action[ch]:
                    continue
                holder = ch + pos[ch] * C
                pos[ch] = (pos[ch] + 1) % ring_len[ch]
                succ = ch + pos[ch] * C
                if s.qlen[holder] > 0:
                    pid = s.head(holder)
                    s.log(c, START, holder, s.arr_dst[pid], ch, pid)
                    done = c + P + D
                    next_action[ch] = done + pass_cost
                    done_at[ch] = done
                    done_holder[ch] = holder
                    done_succ[ch] = succ
                    if c >= s.W:
                        s.attempts_w += 1
                    s.airtime(c, done)
                else:
                    next_action[ch] = c + pass_cost
                    s.log(c, TOKEN_PASS, holder, succ, ch, -1)


def simulate(cfg, arr_cycle, arr_src, arr_dst, phy_rng, mac_rngs, bint trace=False):
    cdef _State s = _State(cfg, arr_cycle, arr_src, arr_dst, trace)
    if cfg.protocol is Protocol.TRMAC:
        _run_trmac(s, cfg, phy_rng, mac_rngs)
    elif cfg.protocol is Protocol.BRS:
        _run_brs(s, cfg, mac_rngs)
    elif cfg.protocol is Protocol.TOKEN:
        _run_token(s, cfg)
    else:
        raise IntegrityError(f"unknown protocol {cfg.protocol!r}")
    return s.result()
