"""Per-slot state machines of the cooperative MAC algorithms.

Supported algorithm ids:

1. no cooperation: node 2 only uses slots in which node 1 is idle;
3. simple forwarding: node 2 relays a primary packet it overheard, using a
   single-packet buffer;
4. network coding: as 3, but when node 4 already holds the relayed packet
   node 2 XORs it with a secondary packet that node 3 holds;
5. as 4, except that a packet seen only by node 2 may also be retransmitted
   by node 1 (probability `q` per slot).

A slot is processed as ``schedule`` (who sends what) followed by
``apply_outcome`` (queue and buffer moves given who received it).  Coded
packets are symbolic: a pair of constituent ids.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import NamedTuple, Optional

from .channel import ReceptionEvent

ALGORITHMS = (1, 3, 4, 5)

PRIMARY = 1    # session (1,3)
SECONDARY = 2  # session (2,4)

# SlotDecision kinds
NODE1 = "node1"    # node 1 sends the head of Q1
RELAY = "relay"    # node 2 sends a primary packet from one of its buffers
DIRECT = "direct"  # node 2 sends the head of Q2
CODED = "coded"    # node 2 sends primary XOR secondary

# reception bits, see channel.RECEIVERS
_TX1_AT2, _TX1_AT3, _TX1_AT4 = 1, 2, 4
_TX2_AT3, _TX2_AT4 = 1, 2


class InvariantViolation(RuntimeError):
    """The protocol state broke one of its structural invariants."""


@dataclass(slots=True, eq=False)
class Packet:
    """A session (1,3) packet.

    Secondary packets are never materialised; they are plain integer ids
    minted lazily from the saturated queue Q2.
    """

    id: int
    arrival_slot: int
    head_slot: Optional[int] = None
    delivery_slot: Optional[int] = None
    session: int = PRIMARY

    @property
    def service_time(self) -> Optional[int]:
        if self.delivery_slot is None or self.head_slot is None:
            return None
        return self.delivery_slot - self.head_slot + 1


class CodedPacket(NamedTuple):
    primary: int
    secondary: int

    @property
    def constituents(self) -> frozenset:
        return frozenset(((PRIMARY, self.primary), (SECONDARY, self.secondary)))


class SlotDecision(NamedTuple):
    transmitter: int
    kind: str
    payload: object  # Packet, secondary id, or CodedPacket

    @property
    def payload_ids(self) -> tuple:
        if self.kind == CODED:
            return (self.payload.primary, self.payload.secondary)
        if self.kind == DIRECT:
            return (self.payload,)
        return (self.payload.id,)


class Delivery(NamedTuple):
    slot: int
    session: int
    packet_id: int


class SystemState:
    """Queues and buffers at nodes 1-4.

    Buffer names follow the storage convention ``<where>_<heard>``: for
    example `B1_2_e3r4` is the buffer at node 2 holding a node-1 packet
    erased at node 3 and received by node 4.
    """

    __slots__ = ("algorithm", "Q1", "q2_head", "B2", "B1_2_e3e4", "B1_2_e3r4",
                 "Q2_r3e4", "Q3_mirror", "B4_e3", "slot", "next_id")

    def __init__(self, algorithm: int):
        if algorithm not in ALGORITHMS:
            raise ValueError(f"unsupported algorithm {algorithm}; choose from {ALGORITHMS}")
        self.algorithm = algorithm
        self.Q1: deque = deque()
        self.q2_head = 0
        self.B2: Optional[Packet] = None
        self.B1_2_e3e4: Optional[Packet] = None
        self.B1_2_e3r4: Optional[Packet] = None
        self.Q2_r3e4: deque = deque()
        self.Q3_mirror: deque = deque()
        self.B4_e3: Optional[Packet] = None
        self.slot = 0
        self.next_id = 0

    def add_arrivals(self, count: int) -> None:
        for _ in range(count):
            self.Q1.append(Packet(self.next_id, self.slot))
            self.next_id += 1

    def relay_packet(self) -> Optional[Packet]:
        """Primary packet held at node 2 and no longer in Q1 (the F2 term)."""
        if self.B2 is not None:
            return self.B2
        if self.B1_2_e3r4 is not None:
            return self.B1_2_e3r4
        if self.B1_2_e3e4 is not None and self.algorithm == 4:
            return self.B1_2_e3e4
        return None

    def q1_system(self) -> int:
        """Number of distinct primary packets anywhere in the system."""
        return len(self.Q1) + (self.relay_packet() is not None)

    def occupancy(self) -> dict:
        return {
            "Q1": len(self.Q1),
            "B2": int(self.B2 is not None),
            "B1_2_e3e4": int(self.B1_2_e3e4 is not None),
            "B1_2_e3r4": int(self.B1_2_e3r4 is not None),
            "Q2_r3e4": len(self.Q2_r3e4),
            "Q3_mirror": len(self.Q3_mirror),
            "B4_e3": int(self.B4_e3 is not None),
        }


def check_invariants(state: SystemState, full: bool = False) -> list:
    """Return descriptions of every broken invariant (empty list if none).

    Mirror equality of Q2_r3e4 and Q3_mirror is checked on length and both
    ends unless `full` is set; every queue operation touches one of the ends,
    so a divergence cannot hide from the cheap check for long.
    """
    bad = []
    alg = state.algorithm
    if state.B1_2_e3e4 is not None and state.B1_2_e3r4 is not None:
        bad.append("both relay buffers at node 2 are occupied")
    if state.B1_2_e3r4 is not None and state.B4_e3 is not state.B1_2_e3r4:
        bad.append("B1_2_e3r4 packet missing from B4_e3")
    if state.B1_2_e3e4 is not None and state.B4_e3 is not None:
        bad.append("B1_2_e3e4 occupied while node 4 holds a primary packet")
    if state.B4_e3 is not None:
        holders = [state.B1_2_e3r4] + ([state.Q1[0]] if state.Q1 else [])
        if not any(state.B4_e3 is p for p in holders):
            bad.append("B4_e3 holds a packet that is neither in service nor relayed")
    a, b = state.Q2_r3e4, state.Q3_mirror
    if len(a) != len(b):
        bad.append("Q3_mirror length differs from Q2_r3e4")
    elif a and (a[0] != b[0] or a[-1] != b[-1] or (full and list(a) != list(b))):
        bad.append("Q3_mirror contents differ from Q2_r3e4")
    if alg == 5 and state.B1_2_e3e4 is not None:
        if not state.Q1 or state.Q1[0] is not state.B1_2_e3e4:
            bad.append("algorithm 5: B1_2_e3e4 packet is not the head of Q1")
    if alg in (1, 3) and (state.B1_2_e3e4 or state.B1_2_e3r4 or state.B4_e3 or a):
        bad.append(f"algorithm {alg} uses network-coding structures")
    if alg != 3 and state.B2 is not None:
        bad.append(f"algorithm {alg} uses the forwarding buffer B2")
    return bad


def schedule(alg: int, state: SystemState, q: float = 0.0, rng=None) -> SlotDecision:
    """Decide who transmits in the current slot and what.

    `q` and `rng` (anything with a ``random()`` method) are only used by
    algorithm 5, when a packet seen only by node 2 may be resent by node 1.
    """
    if alg == 1:
        if state.Q1:
            return SlotDecision(1, NODE1, state.Q1[0])
        return SlotDecision(2, DIRECT, state.q2_head)

    if alg == 3:
        if state.B2 is not None:
            return SlotDecision(2, RELAY, state.B2)
        if state.Q1:
            return SlotDecision(1, NODE1, state.Q1[0])
        return SlotDecision(2, DIRECT, state.q2_head)

    if alg not in (4, 5):
        raise ValueError(f"unsupported algorithm {alg}")

    b_e3e4, b_e3r4 = state.B1_2_e3e4, state.B1_2_e3r4
    if b_e3e4 is not None:
        if b_e3r4 is not None:
            raise InvariantViolation(f"slot {state.slot}: both relay buffers occupied")
        if alg == 5 and rng.random() < q:
            return SlotDecision(1, NODE1, state.Q1[0])
        return SlotDecision(2, RELAY, b_e3e4)
    if b_e3r4 is not None:
        if state.Q2_r3e4:
            return SlotDecision(2, CODED, CodedPacket(b_e3r4.id, state.Q2_r3e4[0]))
        return SlotDecision(2, RELAY, b_e3r4)
    if state.Q1:
        return SlotDecision(1, NODE1, state.Q1[0])
    return SlotDecision(2, DIRECT, state.q2_head)


def _deliver_primary(state: SystemState, p: Packet) -> Delivery:
    p.delivery_slot = state.slot
    return Delivery(state.slot, PRIMARY, p.id)


def apply_outcome(alg: int, state: SystemState, decision: SlotDecision,
                  event: ReceptionEvent) -> tuple:
    """Apply the feedback of one slot to `state` (in place).

    Returns the deliveries of the slot as a tuple of `Delivery` records
    (empty in most slots, two when a coded packet reaches both receivers).
    """
    if event.transmitter != decision.transmitter:
        raise ValueError(f"event from node {event.transmitter} but node "
                         f"{decision.transmitter} was scheduled")
    m = event.mask
    kind = decision.kind

    if kind == NODE1:
        p = decision.payload
        Q1 = state.Q1
        if not Q1 or Q1[0] is not p:
            raise InvariantViolation(f"slot {state.slot}: node 1 sent a packet not at the head of Q1")
        if p.head_slot is None:
            p.head_slot = state.slot
        if m & _TX1_AT3:
            Q1.popleft()
            if alg >= 4:
                state.B4_e3 = None
                if state.B1_2_e3e4 is p:
                    state.B1_2_e3e4 = None
            return (_deliver_primary(state, p),)
        if alg == 1:
            return ()
        if alg == 3:
            if m & _TX1_AT2:
                state.B2 = Q1.popleft()
            return ()
        if state.B1_2_e3e4 is p:
            # algorithm 5, node 1 retransmitting a packet node 2 already holds
            if m & _TX1_AT4:
                Q1.popleft()
                state.B1_2_e3e4 = None
                state.B1_2_e3r4 = state.B4_e3 = p
            return ()
        held_at_4 = state.B4_e3 is p
        if m & _TX1_AT2:
            if m & _TX1_AT4 or held_at_4:
                Q1.popleft()
                state.B1_2_e3r4 = state.B4_e3 = p
            else:
                state.B1_2_e3e4 = p
                if alg == 4:
                    Q1.popleft()
        elif m & _TX1_AT4:
            state.B4_e3 = p
        return ()

    if kind == DIRECT:
        sid = decision.payload
        if m & _TX2_AT4:
            state.q2_head += 1
            return (Delivery(state.slot, SECONDARY, sid),)
        if m & _TX2_AT3 and alg >= 4:
            state.Q2_r3e4.append(sid)
            state.Q3_mirror.append(sid)
            state.q2_head += 1
        return ()

    if kind == RELAY:
        p = decision.payload
        if alg == 3:
            if m & _TX2_AT3:
                state.B2 = None
                return (_deliver_primary(state, p),)
            return ()
        if p is state.B1_2_e3e4:
            if m & _TX2_AT3:
                state.B1_2_e3e4 = None
                if alg == 5:
                    state.Q1.popleft()
                return (_deliver_primary(state, p),)
            if m & _TX2_AT4:
                state.B1_2_e3e4 = None
                if alg == 5:
                    state.Q1.popleft()
                state.B1_2_e3r4 = state.B4_e3 = p
            return ()
        if p is state.B1_2_e3r4:
            if m & _TX2_AT3:
                state.B1_2_e3r4 = state.B4_e3 = None
                return (_deliver_primary(state, p),)
            return ()
        raise InvariantViolation(f"slot {state.slot}: relayed packet {p.id} is not buffered at node 2")

    if kind == CODED:
        c = decision.payload
        p = state.B1_2_e3r4
        if p is None or p.id != c.primary or not state.Q2_r3e4 or state.Q2_r3e4[0] != c.secondary:
            raise InvariantViolation(f"slot {state.slot}: stale coded packet {c}")
        out = []
        if m & _TX2_AT4:
            state.Q2_r3e4.popleft()
            state.Q3_mirror.popleft()
            out.append(Delivery(state.slot, SECONDARY, c.secondary))
        if m & _TX2_AT3:
            state.B1_2_e3r4 = state.B4_e3 = None
            out.append(_deliver_primary(state, p))
        return tuple(out)

    raise ValueError(f"unknown decision kind {kind!r}")
