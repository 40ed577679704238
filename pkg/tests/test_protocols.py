import pytest
from hypothesis import given, strategies as st

from cogsim import protocols as proto
from cogsim.channel import event_from_nodes
from cogsim.protocols import (CODED, DIRECT, NODE1, PRIMARY, RELAY, SECONDARY, SystemState,
                              apply_outcome, check_invariants, schedule)


class FixedCoin:
    def __init__(self, u):
        self.u = u

    def random(self):
        return self.u


def step(alg, state, rx, q=0.0, coin=None):
    """Schedule, then apply the reception set `rx` of whoever transmits."""
    d = schedule(alg, state, q, coin)
    out = apply_outcome(alg, state, d, event_from_nodes(d.transmitter, rx))
    state.slot += 1
    return d, out


def test_alg1_node1_sends_head():
    s = SystemState(1)
    s.add_arrivals(2)
    d = schedule(1, s)
    assert d.transmitter == 1 and d.kind == NODE1 and d.payload is s.Q1[0]


def test_alg4_idle_primary_lets_node2_send():
    s = SystemState(4)
    d = schedule(4, s)
    assert (d.transmitter, d.kind, d.payload) == (2, DIRECT, 0)


def test_alg5_coin_picks_transmitter():
    s = SystemState(5)
    s.add_arrivals(1)
    step(5, s, {2})                       # seen only by node 2
    assert s.B1_2_e3e4 is s.Q1[0]
    d = schedule(5, s, 0.5, FixedCoin(0.3))
    assert d.transmitter == 1 and d.kind == NODE1 and d.payload is s.Q1[0]
    d = schedule(5, s, 0.5, FixedCoin(0.7))
    assert d.transmitter == 2 and d.kind == RELAY


def test_alg4_heard_by_2_and_4_moves_to_coding_buffer():
    s = SystemState(4)
    s.add_arrivals(1)
    p = s.Q1[0]
    d, out = step(4, s, {2, 4})
    assert out == () and not s.Q1
    assert s.B1_2_e3r4 is p and s.B4_e3 is p
    assert check_invariants(s) == []


def test_alg4_coded_packet_delivers_both_sessions():
    s = SystemState(4)
    step(4, s, {3})                       # secondary 0 reaches 3 only
    assert list(s.Q2_r3e4) == [0] == list(s.Q3_mirror)
    s.add_arrivals(1)
    step(4, s, {2, 4})
    d, out = step(4, s, {3, 4})
    assert d.kind == CODED and d.payload == proto.CodedPacket(0, 0)
    assert {(r.session, r.packet_id) for r in out} == {(PRIMARY, 0), (SECONDARY, 0)}
    assert not s.Q2_r3e4 and not s.Q3_mirror and s.B1_2_e3r4 is None and s.B4_e3 is None


def test_alg4_coded_packet_partial_receptions():
    s = SystemState(4)
    step(4, s, {3})
    s.add_arrivals(1)
    step(4, s, {2, 4})
    d, out = step(4, s, {4})              # only the secondary half gets through
    assert d.kind == CODED and [r.session for r in out] == [SECONDARY]
    assert s.B1_2_e3r4 is not None and not s.Q2_r3e4
    d, out = step(4, s, {3})              # nothing left to code with: plain relay
    assert d.kind == RELAY and [r.session for r in out] == [PRIMARY]


def test_alg5_relayed_packet_heard_at_3_leaves_queue_and_buffer():
    s = SystemState(5)
    s.add_arrivals(2)
    p = s.Q1[0]
    step(5, s, {2})
    assert s.B1_2_e3e4 is p and s.Q1[0] is p
    d, out = step(5, s, {3}, q=0.0, coin=FixedCoin(0.9))
    assert d.kind == RELAY
    assert [(r.session, r.packet_id) for r in out] == [(PRIMARY, p.id)]
    assert s.B1_2_e3e4 is None and p not in s.Q1 and len(s.Q1) == 1


def test_alg5_node1_retransmission_heard_at_4():
    s = SystemState(5)
    s.add_arrivals(1)
    p = s.Q1[0]
    step(5, s, {2})
    d, out = step(5, s, {4}, q=1.0, coin=FixedCoin(0.0))
    assert d.transmitter == 1 and out == ()
    assert not s.Q1 and s.B1_2_e3r4 is p and s.B4_e3 is p and s.B1_2_e3e4 is None


def test_alg3_forwarding():
    s = SystemState(3)
    s.add_arrivals(1)
    step(3, s, {2})
    assert s.B2 is not None and not s.Q1 and s.q1_system() == 1
    d, out = step(3, s, {3})
    assert d.kind == RELAY and out[0].packet_id == 0 and s.B2 is None


def test_mismatched_event_rejected():
    s = SystemState(1)
    s.add_arrivals(1)
    d = schedule(1, s)
    with pytest.raises(ValueError):
        apply_outcome(1, s, d, event_from_nodes(2, {3}))


def test_invariant_checker_catches_corruption():
    s = SystemState(4)
    s.add_arrivals(1)
    step(4, s, {2, 4})
    s.B4_e3 = None
    assert any("B4_e3" in m for m in check_invariants(s))
    s = SystemState(4)
    s.Q2_r3e4.append(3)
    assert check_invariants(s)


def test_service_time_counts_from_first_transmission():
    s = SystemState(1)
    s.add_arrivals(2)
    p, later = s.Q1
    s.slot = 4
    step(1, s, set())
    step(1, s, {3})
    assert (p.head_slot, p.delivery_slot, p.service_time) == (4, 5, 2)
    assert later.head_slot is None   # queued, not yet at the head being served
    step(1, s, {3})
    assert later.service_time == 1


rx1 = st.sampled_from([frozenset(x) for x in
                       ([], [2], [3], [4], [2, 3], [2, 4], [3, 4], [2, 3, 4])])
rx2 = st.sampled_from([frozenset(x) for x in ([], [3], [4], [3, 4])])
slot = st.tuples(st.integers(0, 2), rx1, rx2, st.floats(0, 1, exclude_max=True))


@given(st.sampled_from(proto.ALGORITHMS), st.floats(0, 1), st.lists(slot, max_size=300))
def test_random_slots_keep_invariants(alg, q, slots):
    """Any arrival/reception sequence keeps the structural invariants,
    delivers primary packets in order and never loses or duplicates one."""
    s = SystemState(alg)
    delivered, secondary = [], []
    for arrivals, r1, r2, u in slots:
        s.add_arrivals(arrivals)
        d = schedule(alg, s, q, FixedCoin(u))
        assert d.transmitter in (1, 2)
        if d.transmitter == 1:
            assert d.kind == NODE1
        ev = event_from_nodes(d.transmitter, r1 if d.transmitter == 1 else r2)
        for rec in apply_outcome(alg, s, d, ev):
            (delivered if rec.session == PRIMARY else secondary).append(rec.packet_id)
        assert check_invariants(s, full=True) == []
        s.slot += 1
    assert delivered == sorted(delivered) == list(range(len(delivered)))
    assert len(secondary) == len(set(secondary))
    assert len(delivered) + s.q1_system() == s.next_id
