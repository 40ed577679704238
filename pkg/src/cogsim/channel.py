"""Broadcast erasure channel for the two-transmitter, four-node system.

A transmission by node 1 is heard (or erased) independently across slots by
nodes 2, 3 and 4; a transmission by node 2 by nodes 3 and 4.  Within a slot
the receptions may be arbitrarily dependent, so the canonical description is
the distribution of the exact reception set rather than the erasure
probabilities, which are marginals of it.

Reception sets are encoded as bitmasks over the ordered receivers of each
transmitter:

* node 1: bit 0 = node 2, bit 1 = node 3, bit 2 = node 4 (8 patterns)
* node 2: bit 0 = node 3, bit 1 = node 4 (4 patterns)
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

RECEIVERS = {1: (2, 3, 4), 2: (3, 4)}
NORMALIZATION_TOL = 1e-12


def node_bit(tx: int, node: int) -> int:
    """Bit of `node` in the reception mask of transmitter `tx`."""
    try:
        return 1 << RECEIVERS[tx].index(node)
    except (KeyError, ValueError):
        raise ValueError(f"node {node} is not a receiver of transmitter {tx}") from None


def mask_of(tx: int, nodes: Iterable[int]) -> int:
    mask = 0
    for node in nodes:
        mask |= node_bit(tx, node)
    return mask


def nodes_of(tx: int, mask: int) -> frozenset:
    return frozenset(n for i, n in enumerate(RECEIVERS[tx]) if mask >> i & 1)


@dataclass(frozen=True)
class ReceptionEvent:
    """Outcome of one transmission: who transmitted and who received it."""

    transmitter: int
    mask: int

    @property
    def received_by(self) -> frozenset:
        return nodes_of(self.transmitter, self.mask)

    def received(self, node: int) -> bool:
        return bool(self.mask & node_bit(self.transmitter, node))

    def __repr__(self) -> str:
        got = ",".join(str(n) for n in sorted(self.received_by)) or "-"
        return f"ReceptionEvent(tx={self.transmitter}, rx={{{got}}})"


# Events are immutable and there are only 12 of them, so they are shared.
_EVENTS = {tx: tuple(ReceptionEvent(tx, m) for m in range(1 << len(r)))
           for tx, r in RECEIVERS.items()}


def event(tx: int, mask: int) -> ReceptionEvent:
    return _EVENTS[tx][mask]


def event_from_nodes(tx: int, nodes: Iterable[int]) -> ReceptionEvent:
    return _EVENTS[tx][mask_of(tx, nodes)]


def _validate_probs(probs, size: int, name: str) -> np.ndarray:
    arr = np.asarray(probs, dtype=float)
    if arr.shape != (size,):
        raise ValueError(f"{name} must have {size} entries, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(arr < 0):
        raise ValueError(f"{name} has negative entries: {arr}")
    total = arr.sum()
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise ValueError(f"{name} sums to {total!r}, not 1")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


class ErasureSpec:
    """Joint per-slot reception law of both transmitters.

    Parameters
    ----------
    tx1_pattern_probs : array_like, shape (8,)
        Probability that a node-1 transmission is received by exactly the
        node set encoded by each mask (bit order 2, 3, 4).
    tx2_pattern_probs : array_like, shape (4,)
        Same for node 2 (bit order 3, 4).
    admissible : bool
        If set, require that node 2 reaches node 3 at least as well as node 1
        does, i.e. ``eps(1, {3}) >= eps(2, {3})``.
    """

    __slots__ = ("tx1_pattern_probs", "tx2_pattern_probs", "admissible", "_cum")

    def __init__(self, tx1_pattern_probs, tx2_pattern_probs, admissible: bool = False):
        p1 = _validate_probs(tx1_pattern_probs, 8, "tx1_pattern_probs")
        p2 = _validate_probs(tx2_pattern_probs, 4, "tx2_pattern_probs")
        object.__setattr__(self, "tx1_pattern_probs", p1)
        object.__setattr__(self, "tx2_pattern_probs", p2)
        object.__setattr__(self, "admissible", bool(admissible))
        cum = {}
        for tx, p in ((1, p1), (2, p2)):
            c = np.cumsum(p)
            c[-1] = 1.0
            cum[tx] = c
        object.__setattr__(self, "_cum", cum)
        if admissible and not self.is_admissible():
            raise ValueError(
                "spec flagged admissible but eps(1,{3})=%.6g < eps(2,{3})=%.6g"
                % (self.eps(1, 3), self.eps(2, 3)))

    def __setattr__(self, name, value):
        raise AttributeError("ErasureSpec is immutable")

    def __reduce__(self):
        return (ErasureSpec, (self.tx1_pattern_probs, self.tx2_pattern_probs, self.admissible))

    def __eq__(self, other):
        if not isinstance(other, ErasureSpec):
            return NotImplemented
        return (np.array_equal(self.tx1_pattern_probs, other.tx1_pattern_probs)
                and np.array_equal(self.tx2_pattern_probs, other.tx2_pattern_probs)
                and self.admissible == other.admissible)

    def __hash__(self):
        return hash((self.tx1_pattern_probs.tobytes(), self.tx2_pattern_probs.tobytes(),
                     self.admissible))

    def __repr__(self):
        return (f"ErasureSpec(tx1={self.tx1_pattern_probs.tolist()}, "
                f"tx2={self.tx2_pattern_probs.tolist()}, admissible={self.admissible})")

    def pattern_probs(self, tx: int) -> np.ndarray:
        if tx == 1:
            return self.tx1_pattern_probs
        if tx == 2:
            return self.tx2_pattern_probs
        raise ValueError(f"transmitter must be 1 or 2, got {tx}")

    def eps(self, tx: int, *nodes: int) -> float:
        """Shorthand: ``spec.eps(1, 2, 3)`` is the probability of erasure at 2 and 3."""
        return erasure_prob(self, tx, nodes)

    def is_admissible(self) -> bool:
        return self.eps(1, 3) >= self.eps(2, 3)

    def to_dict(self) -> dict:
        return {
            "mode": "joint",
            "tx1_patterns": self.tx1_pattern_probs.tolist(),
            "tx2_patterns": self.tx2_pattern_probs.tolist(),
            "admissible": self.admissible,
        }


def erasure_prob(spec: ErasureSpec, tx: int, S: Iterable[int]) -> float:
    """Probability that a transmission by `tx` is erased at every node in `S`.

    Raises ValueError if `S` contains the transmitter itself, node 1 when
    node 2 transmits, or an id outside 1..4.
    """
    nodes = tuple(S)
    for n in nodes:
        if n not in (1, 2, 3, 4):
            raise ValueError(f"unknown node id {n}")
        if n == tx:
            raise ValueError(f"erasure set contains the transmitter {tx}")
    s_mask = mask_of(tx, nodes)
    probs = spec.pattern_probs(tx)
    return float(sum(p for m, p in enumerate(probs) if m & s_mask == 0))


def _independent_patterns(tx: int, eps: Mapping[int, float]) -> np.ndarray:
    receivers = RECEIVERS[tx]
    marg = []
    for node in receivers:
        e = float(eps[node])
        if not 0.0 <= e <= 1.0:
            raise ValueError(f"marginal erasure probability {e} at node {node} outside [0, 1]")
        marg.append(e)
    probs = np.empty(1 << len(receivers))
    for m in range(len(probs)):
        p = 1.0
        for i, e in enumerate(marg):
            p *= (1.0 - e) if m >> i & 1 else e
        probs[m] = p
    # Products of marginals can miss 1 by a few ulps.
    return probs / probs.sum()


def from_marginals_independent(eps: Mapping[int, Mapping[int, float]],
                               admissible: bool = False) -> ErasureSpec:
    """Build a spec whose receptions are independent across nodes.

    ``eps[tx][node]`` is the erasure probability at `node` of a transmission
    by `tx`, e.g. ``{1: {2: .2, 3: .8, 4: .5}, 2: {3: .2, 4: .2}}``.
    """
    eps = {int(k): {int(n): v for n, v in d.items()} for k, d in eps.items()}
    return ErasureSpec(_independent_patterns(1, eps[1]), _independent_patterns(2, eps[2]),
                       admissible=admissible)


def from_joint_table(tx1_patterns, tx2_patterns, admissible: bool = False) -> ErasureSpec:
    """Build a spec from explicit reception-pattern probabilities."""
    return ErasureSpec(tx1_patterns, tx2_patterns, admissible=admissible)


def tx2_from_erasures(e3: float, e4: float, e34: float) -> np.ndarray:
    """Node-2 pattern vector with the given marginals and joint erasure."""
    probs = np.array([e34, e4 - e34, e3 - e34, 1.0 - e3 - e4 + e34])
    if np.any(probs < -NORMALIZATION_TOL):
        raise ValueError(f"inconsistent erasures e3={e3}, e4={e4}, e34={e34}")
    return np.clip(probs, 0.0, None)


def sample(spec: ErasureSpec, tx: int, rng) -> ReceptionEvent:
    """Draw one reception event for a transmission by `tx`."""
    u = rng.random()
    mask = int(np.searchsorted(spec._cum[tx], u, side="right"))
    return _EVENTS[tx][min(mask, len(_EVENTS[tx]) - 1)]


def sample_masks(spec: ErasureSpec, tx: int, rng: np.random.Generator, size: int) -> np.ndarray:
    """Vectorised draw of `size` reception masks for transmitter `tx`."""
    u = rng.random(size)
    masks = np.searchsorted(spec._cum[tx], u, side="right")
    np.minimum(masks, len(_EVENTS[tx]) - 1, out=masks)
    return masks.astype(np.int8)


def spec_from_dict(data: Mapping) -> ErasureSpec:
    """Parse the JSON form of a spec (``independent`` or ``joint`` mode)."""
    mode = data.get("mode")
    admissible = bool(data.get("admissible", False))
    if mode == "independent":
        return from_marginals_independent({1: data["tx1"], 2: data["tx2"]}, admissible=admissible)
    if mode == "joint":
        return from_joint_table(data["tx1_patterns"], data["tx2_patterns"], admissible=admissible)
    raise ValueError(f"unknown spec mode {mode!r}")


def load_spec(path) -> ErasureSpec:
    with open(path) as fh:
        data = json.load(fh)
    return spec_from_dict(data.get("channel", data))


def baseline_spec(eps4_tx1: float = 0.5) -> ErasureSpec:
    """Independent erasures with eps(1,{3})=.8, eps(1,{2})=eps(2,{3})=eps(2,{4})=.2.

    The node-1 to node-4 erasure is not pinned down by the baseline example;
    it only matters for the network-coding algorithms.
    """
    return from_marginals_independent({1: {2: 0.2, 3: 0.8, 4: eps4_tx1}, 2: {3: 0.2, 4: 0.2}},
                                      admissible=True)


def retx_spec() -> ErasureSpec:
    """Parameters where retransmission by node 1 helps the secondary session.

    Node 1 erasures are independent (.3, .77, .6 at nodes 2, 3, 4); node 2 has
    eps3=.75, eps4=.85 and a joint erasure eps34=.75.
    """
    tx1 = _independent_patterns(1, {2: 0.3, 3: 0.77, 4: 0.6})
    return ErasureSpec(tx1, tx2_from_erasures(0.75, 0.85, 0.75), admissible=True)


def perfect_spec() -> ErasureSpec:
    tx1 = np.zeros(8)
    tx1[7] = 1.0
    tx2 = np.zeros(4)
    tx2[3] = 1.0
    return ErasureSpec(tx1, tx2, admissible=True)


def random_spec(rng: np.random.Generator, admissible: bool = True,
                independent: bool = False) -> ErasureSpec:
    """Random spec, optionally conditioned on eps(1,{3}) >= eps(2,{3}).

    Joint tables are drawn from a Dirichlet(1) law; rejection sampling is used
    for the admissibility condition.
    """
    for _ in range(10_000):
        if independent:
            e = rng.uniform(0.05, 0.95, size=5)
            spec = from_marginals_independent({1: {2: e[0], 3: e[1], 4: e[2]},
                                               2: {3: e[3], 4: e[4]}})
        else:
            spec = ErasureSpec(rng.dirichlet(np.ones(8)), rng.dirichlet(np.ones(4)))
        if not admissible or spec.is_admissible():
            if admissible:
                spec = ErasureSpec(spec.tx1_pattern_probs, spec.tx2_pattern_probs, admissible=True)
            return spec
    raise RuntimeError("could not draw an admissible spec")
