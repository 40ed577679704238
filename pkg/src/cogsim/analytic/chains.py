"""Markov chains describing primary-packet service under algorithms 4 and 5.

One service cycle runs from the slot in which node 1 first sends a packet to
the slot in which node 3 gets it.  States:

``1``   node 1 sends a packet for the first time (entered once per packet)
``1r``  node 1 resends a packet that node 4 does not hold
``2``   a packet seen only by node 2 is (re)sent, by node 2 or, under
        algorithm 5, by node 1 with probability q
``3``   node 2 relays a packet node 4 holds (coded when possible)
``4``   node 1 resends a packet node 4 already holds

Because ``1`` is visited exactly once per packet, its stationary probability
is the service rate, and ``pi[3] / pi[1]`` is the mean number of slots per
packet in which a coded transmission can be made.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channel import ErasureSpec

LABELS = ("1", "1r", "2", "3", "4")
STOCHASTIC_TOL = 1e-12


class ChainConstructionError(ValueError):
    pass


def stationary(P: np.ndarray) -> np.ndarray:
    """Stationary law of a row-stochastic matrix by a direct linear solve."""
    n = P.shape[0]
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        pi = np.linalg.lstsq(np.vstack([P.T - np.eye(n), np.ones(n)]),
                             np.r_[np.zeros(n), 1.0], rcond=None)[0]
    pi[np.abs(pi) < 1e-15] = 0.0
    return pi


@dataclass(frozen=True)
class MarkovChainModel:
    labels: tuple
    P: np.ndarray
    pi: np.ndarray

    @classmethod
    def from_matrix(cls, labels, P) -> "MarkovChainModel":
        P = np.array(P, dtype=float)
        if P.shape != (len(labels), len(labels)):
            raise ChainConstructionError(f"matrix shape {P.shape} does not match {len(labels)} labels")
        if np.any(P < -STOCHASTIC_TOL):
            raise ChainConstructionError(f"negative transition probability:\n{P}")
        P = np.clip(P, 0.0, None)
        rows = P.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > STOCHASTIC_TOL):
            raise ChainConstructionError(f"rows do not sum to 1: {rows}")
        P.setflags(write=False)
        pi = stationary(P)
        pi.setflags(write=False)
        return cls(tuple(labels), P, pi)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def prob(self, label: str) -> float:
        return float(self.pi[self.index(label)])

    def visits_per_cycle(self, label: str, start: str = "1") -> float:
        """Mean visits to `label` between successive visits to `start`."""
        return self.prob(label) / self.prob(start)

    def balance_residual(self) -> float:
        return float(np.max(np.abs(self.pi @ self.P - self.pi)))

    def sample_cycles(self, rng: np.random.Generator, n: int, start: str = "1",
                      count: str = "3") -> tuple:
        """Simulate `n` returns to `start`; return cycle lengths and visits to `count`."""
        s0, sc = self.index(start), self.index(count)
        cum = np.cumsum(self.P, axis=1)
        cum[:, -1] = 1.0
        lengths = np.empty(n, dtype=np.int64)
        visits = np.empty(n, dtype=np.int64)
        u = rng.random(1 << 16).tolist()
        k = 0
        for c in range(n):
            s, length, v = s0, 0, 0
            while True:
                if s == sc:
                    v += 1
                length += 1
                if k == len(u):
                    u = rng.random(1 << 16).tolist()
                    k = 0
                s = int(np.searchsorted(cum[s], u[k], side="right"))
                k += 1
                if s == s0:
                    break
            lengths[c], visits[c] = length, v
        return lengths, visits


def _node1_row(spec: ErasureSpec) -> dict:
    """Transitions out of a slot where node 1 sends a packet node 4 lacks."""
    e3, e23, e34, e234 = spec.eps(1, 3), spec.eps(1, 2, 3), spec.eps(1, 3, 4), spec.eps(1, 2, 3, 4)
    return {
        "1": 1.0 - e3,                       # received by 3
        "3": e3 - e23 - e34 + e234,          # erased at 3, received by 2 and 4
        "2": e34 - e234,                     # received by 2 only
        "4": e23 - e234,                     # received by 4 only
        "1r": e234,                          # erased everywhere
    }


def build_chain_alg5(spec: ErasureSpec, q: float) -> MarkovChainModel:
    """Service chain of algorithm 5 with per-slot retransmission probability `q`.

    In state ``2`` node 1 sends with probability `q` and node 2 otherwise;
    either way the packet leaves the state once node 3 or node 4 hears it.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    e3_1, e23_1, e34_1 = spec.eps(1, 3), spec.eps(1, 2, 3), spec.eps(1, 3, 4)
    e3_2, e34_2 = spec.eps(2, 3), spec.eps(2, 3, 4)
    stay2 = q * e34_1 + (1.0 - q) * e34_2
    if stay2 >= 1.0:
        raise ChainConstructionError("relay state never exits (both joint erasures at 3,4 are 1)")
    idx = {lab: i for i, lab in enumerate(LABELS)}
    P = np.zeros((5, 5))
    for src in ("1", "1r"):
        for dst, p in _node1_row(spec).items():
            P[idx[src], idx[dst]] += p
    P[idx["2"], idx["1"]] = q * (1.0 - e3_1) + (1.0 - q) * (1.0 - e3_2)
    P[idx["2"], idx["3"]] = q * (e3_1 - e34_1) + (1.0 - q) * (e3_2 - e34_2)
    P[idx["2"], idx["2"]] = stay2
    P[idx["3"], idx["1"]] = 1.0 - e3_2
    P[idx["3"], idx["3"]] = e3_2
    P[idx["4"], idx["1"]] = 1.0 - e3_1
    P[idx["4"], idx["3"]] = e3_1 - e23_1
    P[idx["4"], idx["4"]] = e23_1
    return MarkovChainModel.from_matrix(LABELS, P)


def build_chain_alg4(spec: ErasureSpec) -> MarkovChainModel:
    """Service chain of algorithm 4 (algorithm 5 with q = 0)."""
    return build_chain_alg5(spec, 0.0)


def build_chain_alg4_lumped(spec: ErasureSpec) -> MarkovChainModel:
    """Four-state variant with ``1`` and ``1r`` merged into ``1``.

    Here ``pi[1]`` is the fraction of slots in which node 1 sends a packet
    node 4 lacks, not the service rate; the latter is
    ``pi[1] * (1 - eps(1, {2,3,4}))``.  Time fractions of ``2``, ``3``,
    ``4`` are those of the five-state chain.
    """
    full = build_chain_alg4(spec)
    keep = [full.index(x) for x in ("1", "2", "3", "4")]
    P = full.P[np.ix_(keep, keep)].copy()
    P[0, 0] += full.P[full.index("1"), full.index("1r")]
    return MarkovChainModel.from_matrix(("1", "2", "3", "4"), P)
