"""Arrival process of the primary session (1,3).

The secondary session (2,4) is saturated and has no arrival process here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np


@dataclass(frozen=True)
class ArrivalProcess:
    """I.i.d. batch arrivals per slot with an explicit pmf.

    `support` and `probs` describe the pmf of the number of packets arriving
    at the beginning of each slot.
    """

    kind: str
    support: tuple
    probs: tuple
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("bernoulli", "pmf"):
            raise ValueError(f"unknown arrival kind {self.kind!r}")
        support = np.asarray(self.support, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=float)
        if support.shape != probs.shape or support.ndim != 1 or len(support) == 0:
            raise ValueError("support and probs must be equal-length, non-empty")
        if np.any(support < 0):
            raise ValueError("arrival counts must be nonnegative")
        if len(set(support.tolist())) != len(support):
            raise ValueError("duplicate arrival counts in pmf")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"arrival pmf must be nonnegative and sum to 1, got {probs}")
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        object.__setattr__(self, "_cum", cum)

    @property
    def lambda1(self) -> float:
        return float(np.dot(self.support, self.probs))

    @property
    def p_zero(self) -> float:
        """Pr(no arrival in a slot)."""
        return float(sum(p for k, p in zip(self.support, self.probs) if k == 0))

    @property
    def p_arrival(self) -> float:
        """Pr(at least one arrival in a slot)."""
        return 1.0 - self.p_zero

    def to_dict(self) -> dict:
        if self.kind == "bernoulli":
            return {"kind": "bernoulli", "lambda": self.lambda1}
        return {"kind": "pmf", "probs": {str(k): p for k, p in zip(self.support, self.probs)}}


def bernoulli(lam: float) -> ArrivalProcess:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"Bernoulli rate must lie in [0, 1], got {lam}")
    return ArrivalProcess("bernoulli", (0, 1), (1.0 - lam, lam))


def from_pmf(pmf: Mapping[int, float]) -> ArrivalProcess:
    items = sorted((int(k), float(v)) for k, v in pmf.items())
    return ArrivalProcess("pmf", tuple(k for k, _ in items), tuple(v for _, v in items))


def arrivals_from_dict(data: Mapping) -> ArrivalProcess:
    data = data.get("arrivals", data)
    if data["kind"] == "bernoulli":
        return bernoulli(float(data["lambda"]))
    if data["kind"] == "pmf":
        return from_pmf(data["probs"])
    raise ValueError(f"unknown arrival kind {data['kind']!r}")


def draw_arrivals(proc: ArrivalProcess, rng: np.random.Generator, size=None):
    """Number of packets arriving in one slot, or an array of `size` slots."""
    n = 1 if size is None else size
    idx = np.searchsorted(proc._cum, rng.random(n), side="right")
    np.minimum(idx, len(proc.support) - 1, out=idx)
    counts = np.asarray(proc.support, dtype=np.int64)[idx]
    return int(counts[0]) if size is None else counts
