"""Discrete-time queue formulas: busy/idle periods and the renewal queue."""

from __future__ import annotations

from dataclasses import dataclass


class UnstableQueueError(ValueError):
    """Arrival rate at or beyond the service rate."""


def busy_idle(lambda1: float, mu1: float, p_zero: float) -> tuple:
    """Mean busy and idle period lengths of the primary queue.

    `p_zero` is Pr(no arrival in a slot).  Idle periods end at the first slot
    with an arrival, so ``I1 = 1 / (1 - p_zero)`` and
    ``B1 = rho / ((1 - rho) (1 - p_zero))`` with ``rho = lambda1 / mu1``.
    For ``lambda1 = 0`` the queue is never busy and ``I1`` is infinite.
    """
    if lambda1 < 0 or mu1 <= 0:
        raise ValueError(f"need lambda1 >= 0 and mu1 > 0, got {lambda1}, {mu1}")
    if lambda1 >= mu1:
        raise UnstableQueueError(f"lambda1={lambda1} >= mu1={mu1}: queue is unstable")
    p_arrival = 1.0 - p_zero
    if lambda1 == 0:
        return 0.0, float("inf")
    rho = lambda1 / mu1
    return rho / ((1.0 - rho) * p_arrival), 1.0 / p_arrival


@dataclass(frozen=True)
class RenewalQueueParams:
    """Per-cycle means of the generic renewal queue.

    E_A0: packets arriving per cycle; E_H0: slots per cycle available to the
    queue; E_G0: cycle length; E_S1: available slots one packet needs.
    """

    E_A0: float
    E_H0: float
    E_G0: float
    E_S1: float

    def __post_init__(self):
        for name in ("E_A0", "E_H0", "E_G0", "E_S1"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.E_G0 == 0:
            raise ValueError("E_G0 must be positive")
        if self.E_G0 < 1:
            raise ValueError("cycles last at least one slot (E_G0 >= 1)")

    @property
    def capacity(self) -> float:
        """Packets per cycle the available slots can carry."""
        if self.E_S1 == 0:
            return float("inf")
        return self.E_H0 / self.E_S1


def generic_queue_rate(p: RenewalQueueParams) -> float:
    """Long-run departure rate (packets per slot) of the renewal queue."""
    if p.E_A0 <= p.capacity:
        return p.E_A0 / p.E_G0
    return p.E_H0 / (p.E_G0 * p.E_S1)
