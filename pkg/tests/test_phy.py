import pytest

from wnoc_sim import IntegrityError, SimConfig
from wnoc_sim.phy import (AckKind, ChannelOccupancy, DecodeKind, DecodeResult, StartAttempt, admit, admit_in_order,
                          arbitrate_epoch, classify_ack, decode_preambles, route_acks)
from wnoc_sim.rng import Stream

A, B, C, D, E = 0, 1, 2, 3, 4


class Fixed:
    def __init__(self, value=0):
        self.value = value
        self.calls = []

    def below(self, n):
        self.calls.append(n)
        return self.value % n


def test_attempt_rejects_self_address():
    with pytest.raises(ValueError):
        StartAttempt(2, 2, 0)


def test_lone_preamble_is_correct():
    (d,) = decode_preambles([StartAttempt(A, B, 0)], Fixed(), num_nodes=4)
    assert d.kind is DecodeKind.CORRECT and d.ack_target == A


def test_two_preambles_to_one_receiver_garble():
    for v in range(10):
        (d,) = decode_preambles([StartAttempt(A, B, 0), StartAttempt(C, B, 0)], Fixed(v), num_nodes=6)
        assert d.kind is DecodeKind.ERRONEOUS
        assert d.decoded not in (A, B, C)


def test_transmitting_receiver_is_silent():
    res = {d.rx: d for d in decode_preambles([StartAttempt(A, B, 0), StartAttempt(B, C, 0)], Fixed(), num_nodes=4)}
    assert res[B].kind is DecodeKind.SILENT and res[B].ack_target is None
    assert res[C].kind is DecodeKind.CORRECT and res[C].ack_target == B


def test_decode_rejects_npt_violation():
    with pytest.raises(IntegrityError):
        decode_preambles([StartAttempt(A, B, 0), StartAttempt(C, D, 0)], Fixed(), num_nodes=4, npt=1)


def test_erroneous_decode_skips_unacked_senders():
    # A,C -> B collide; D -> A is silent (A transmits): D is unacked too,
    # so the garbled address may only be E
    rng = Fixed()
    attempts = [StartAttempt(A, B, 0), StartAttempt(C, B, 0), StartAttempt(D, A, 0)]
    res = {d.rx: d for d in decode_preambles(attempts, rng, num_nodes=5)}
    assert res[B].decoded == E and rng.calls == [1]


def test_no_candidate_means_no_ack():
    attempts = [StartAttempt(A, B, 0), StartAttempt(C, B, 0)]
    rng = Fixed()
    (d,) = decode_preambles(attempts, rng, num_nodes=3)
    assert d.kind is DecodeKind.ERRONEOUS and d.decoded is None and rng.calls == []


def test_route_acks():
    assert route_acks([DecodeResult(B, DecodeKind.CORRECT, tx=A)]) == {A: 1}
    assert route_acks([DecodeResult(B, DecodeKind.CORRECT, tx=A),
                       DecodeResult(D, DecodeKind.ERRONEOUS, decoded=A)]) == {A: 2}
    assert route_acks([]) == {}
    assert route_acks([DecodeResult(B, DecodeKind.SILENT)]) == {}


@pytest.mark.parametrize("q, kind", [(0, AckKind.NO_ACK), (1, AckKind.ACK_OK), (2, AckKind.ERRONEOUS_ACK),
                                     (5, AckKind.ERRONEOUS_ACK)])
def test_classify_ack(q, kind):
    assert classify_ack(q, True) is kind
    assert classify_ack(q, False) is None


def test_classify_rejects_negative():
    with pytest.raises(ValueError):
        classify_ack(-1, True)


def test_three_parallel_transmissions():
    cfg = SimConfig(num_nodes=8, npt=3)
    out = arbitrate_epoch([StartAttempt(0, 3, 0), StartAttempt(1, 4, 0), StartAttempt(2, 5, 0)], cfg, Fixed())
    assert all(k is AckKind.ACK_OK for k in out.outcomes.values())
    assert len([k for k in out.outcomes.values() if k is AckKind.ACK_OK]) == 3


def test_same_receiver_both_no_ack():
    cfg = SimConfig(num_nodes=4, npt=2)
    out = arbitrate_epoch([StartAttempt(A, B, 0), StartAttempt(C, B, 0)], cfg, Fixed())
    assert out.outcomes == {A: AckKind.NO_ACK, C: AckKind.NO_ACK}


def test_erroneous_ack_hits_third_transmission():
    # A,C -> B collide; D -> E succeeds; B reads D's address by mistake
    cfg = SimConfig(num_nodes=5, npt=3)
    attempts = [StartAttempt(A, B, 0), StartAttempt(C, B, 0), StartAttempt(D, E, 0)]
    # candidates for B's garbled read: nodes not in {B, A, C} -> [D, E]
    out = arbitrate_epoch(attempts, cfg, Fixed(0))
    assert out.outcomes == {A: AckKind.NO_ACK, C: AckKind.NO_ACK, D: AckKind.ERRONEOUS_ACK}
    out = arbitrate_epoch(attempts, cfg, Fixed(1))
    assert out.outcomes[D] is AckKind.ACK_OK


def test_channels_are_orthogonal():
    cfg = SimConfig(num_nodes=4, num_freq_channels=2, npt=1)
    out = arbitrate_epoch([StartAttempt(A, B, 0), StartAttempt(C, B, 1)], cfg, Fixed())
    assert set(out.outcomes.values()) == {AckKind.ACK_OK}


def test_single_stream_receiver_is_deaf_across_channels():
    cfg = SimConfig(num_nodes=4, num_freq_channels=2, npt=1, rx_multichannel=False)
    out = arbitrate_epoch([StartAttempt(A, B, 0), StartAttempt(C, B, 1)], cfg, Fixed())
    assert set(out.outcomes.values()) == {AckKind.NO_ACK}
    out = arbitrate_epoch([StartAttempt(A, B, 0)], cfg, Fixed(), receiving=[B])
    assert out.outcomes[A] is AckKind.NO_ACK


def test_busy_receiver_on_other_channel_is_silent():
    cfg = SimConfig(num_nodes=4, num_freq_channels=2)
    out = arbitrate_epoch([StartAttempt(A, B, 0)], cfg, Fixed(), busy=[B])
    assert out.outcomes[A] is AckKind.NO_ACK


def test_arbitrate_rejects_npt_violation():
    cfg = SimConfig(num_nodes=4, npt=1)
    with pytest.raises(IntegrityError, match="exceed npt"):
        arbitrate_epoch([StartAttempt(A, B, 0), StartAttempt(C, D, 0)], cfg, Fixed())


def test_arbitration_deterministic():
    cfg = SimConfig(num_nodes=16, npt=4)
    attempts = [StartAttempt(0, 5, 0), StartAttempt(1, 5, 0), StartAttempt(2, 5, 0), StartAttempt(3, 6, 0)]
    a = arbitrate_epoch(attempts, cfg, Stream(4))
    b = arbitrate_epoch(attempts, cfg, Stream(4))
    assert a.outcomes == b.outcomes and a.decodes == b.decodes


def test_admit_and_occupancy():
    occ = ChannelOccupancy(1, 6)
    assert admit(occ, 0, 3)
    for _ in range(3):
        occ.occupy(0, 3)
    assert occ[0] == 3 and not admit(occ, 0, 3)
    with pytest.raises(IntegrityError):
        occ.occupy(0, 3)


def test_busy_tone_blocks_mid_epoch_start():
    occ = ChannelOccupancy(1, 6)
    occ.advance(10)
    occ.occupy(0, 3)
    occ.advance(11)
    assert occ[0] == 1 and not occ.joinable(0) and not admit(occ, 0, 3)
    with pytest.raises(IntegrityError, match="ongoing epoch"):
        occ.occupy(0, 3)
    occ.advance(16)
    assert occ[0] == 0 and admit(occ, 0, 3)


def test_admit_in_order_lowest_ids_first():
    occ = ChannelOccupancy(1, 6)
    admitted, deferred = admit_in_order(occ, [(9, 0), (2, 0), (7, 0), (4, 0), (1, 0)], 3)
    assert [tx for tx, _ in admitted] == [1, 2, 4]
    assert [tx for tx, _ in deferred] == [7, 9]
