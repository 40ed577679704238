"""Service rates and throughput regions of algorithms 1, 3, 4 and 5."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from ..channel import ErasureSpec
from .chains import build_chain_alg5
from .queueing import RenewalQueueParams, busy_idle, generic_queue_rate

DEFAULT_SAMPLES = 201
Q_GRID = 101


class _Eps:
    """The erasure probabilities the formulas use, read once from a spec."""

    def __init__(self, spec: ErasureSpec):
        self.e3_1 = spec.eps(1, 3)
        self.e23_1 = spec.eps(1, 2, 3)
        self.e34_1 = spec.eps(1, 3, 4)
        self.e234_1 = spec.eps(1, 2, 3, 4)
        self.e3_2 = spec.eps(2, 3)
        self.e4_2 = spec.eps(2, 4)
        self.e34_2 = spec.eps(2, 3, 4)

    def require_operational(self):
        for name, value in (("eps(1,{2,3})", self.e23_1), ("eps(2,{3})", self.e3_2),
                            ("eps(2,{3,4})", self.e34_2)):
            if value >= 1.0:
                raise ValueError(f"non-operational channel: {name} = 1")


def mu1_alg1(spec: ErasureSpec) -> float:
    """Primary service rate without cooperation."""
    return 1.0 - spec.eps(1, 3)


def mu1_alg3(spec: ErasureSpec) -> float:
    """Primary service rate with node 2 relaying (same under algorithm 4)."""
    e = _Eps(spec)
    den = 1.0 - e.e3_2 + e.e3_1 - e.e23_1
    if den == 0.0:
        return 0.0
    return (1.0 - e.e3_2) * (1.0 - e.e23_1) / den


mu1_alg4 = mu1_alg3


def pi3_alg4(spec: ErasureSpec) -> float:
    """Closed-form fraction of slots in which node 2 relays a packet node 4 holds."""
    e = _Eps(spec)
    e.require_operational()
    inner = (1.0 - e.e234_1) / (1.0 - e.e23_1) + (e.e34_1 - e.e234_1) / (1.0 - e.e34_2)
    return 1.0 - inner / (1.0 - e.e234_1) * mu1_alg3(spec)


def _mix_den(e: _Eps, q):
    return 1.0 - q * e.e34_1 - (1.0 - q) * e.e34_2


def _c1(e: _Eps, q):
    k = (e.e3_1 - e.e3_2) * (e.e34_1 - e.e234_1) / ((1.0 - e.e234_1) * (1.0 - e.e3_2))
    return k * q / _mix_den(e, q)


def _c2(e: _Eps, q):
    k = (e.e34_1 - e.e234_1) * (e.e34_2 - e.e34_1) / ((1.0 - e.e234_1) * (1.0 - e.e34_2))
    return k * q / _mix_den(e, q)


def _inv_pi1(e: _Eps, q):
    base = (1.0 + e.e3_1 - e.e3_2 - e.e23_1) / ((1.0 - e.e3_2) * (1.0 - e.e23_1))
    return base + _c1(e, q)


def _non_coding_time(e: _Eps, q):
    base = ((e.e34_1 - e.e234_1) / ((1.0 - e.e34_2) * (1.0 - e.e234_1))
            + 1.0 / (1.0 - e.e23_1))
    return base - _c2(e, q)


def _operational(spec: ErasureSpec) -> _Eps:
    e = _Eps(spec)
    e.require_operational()
    return e


def c1(spec: ErasureSpec, q):
    """Increase of the mean service time caused by node-1 retransmissions."""
    return _c1(_operational(spec), q)


def c2(spec: ErasureSpec, q):
    """Decrease of the mean non-coding time per packet caused by retransmissions."""
    return _c2(_operational(spec), q)


def inv_pi1(spec: ErasureSpec, q=0.0):
    """Mean primary service time under algorithm 5 (closed form)."""
    return _inv_pi1(_operational(spec), q)


def non_coding_time(spec: ErasureSpec, q=0.0):
    """Mean slots per primary packet without a coding opportunity, (1 - pi3) / pi1."""
    return _non_coding_time(_operational(spec), q)


def mu1_alg5(spec: ErasureSpec, q: float) -> float:
    return 1.0 / inv_pi1(spec, q)


def renewal_r2(spec: ErasureSpec, lambda1: float, q: float = 0.0,
               p_zero: Optional[float] = None) -> float:
    """Secondary throughput of algorithm 4/5 assembled from the renewal queue.

    Adds the direct throughput during idle periods of Q1^S to the throughput
    of the queue of packets node 3 holds and node 4 lacks, using the chain's
    stationary law.  Independent of the half-plane form of the region.
    """
    e = _Eps(spec)
    if e.e4_2 >= 1.0:
        return 0.0
    if lambda1 == 0:
        return 1.0 - e.e4_2
    chain = build_chain_alg5(spec, q)
    pi1, pi3 = chain.prob("1"), chain.prob("3")
    if p_zero is None:
        p_zero = 1.0 - lambda1
    B1, I1 = busy_idle(lambda1, pi1, p_zero)
    params = RenewalQueueParams(E_A0=I1 * (e.e4_2 - e.e34_2), E_H0=pi3 * B1,
                                E_G0=B1 + I1, E_S1=1.0 / (1.0 - e.e4_2))
    r_q = generic_queue_rate(params)
    r_d = I1 * (1.0 - e.e4_2) / (B1 + I1)
    return r_q + r_d


@dataclass(frozen=True)
class HalfPlane:
    """``a * r1 + b * r2 <= 1``."""

    a: float
    b: float

    def r2_bound(self, r1):
        if self.b == 0:
            return np.where(self.a * np.asarray(r1) <= 1.0, np.inf, -np.inf)
        return (1.0 - self.a * np.asarray(r1, dtype=float)) / self.b


class ThroughputRegion:
    """Intersection of half-planes with the nonnegative quadrant."""

    def __init__(self, algorithm: int, constraints):
        self.algorithm = algorithm
        self.constraints = tuple(constraints)
        if not self.constraints:
            raise ValueError("a region needs at least one constraint")
        self.r1_max = min((1.0 / c.a if c.a > 0 else np.inf) for c in self.constraints)

    def __repr__(self):
        cs = ", ".join(f"{c.a:.6g} r1 + {c.b:.6g} r2 <= 1" for c in self.constraints)
        return f"ThroughputRegion(alg={self.algorithm}: {cs})"

    def r2_max(self, r1):
        r1 = np.asarray(r1, dtype=float)
        bound = np.min([c.r2_bound(r1) for c in self.constraints], axis=0)
        out = np.where((r1 >= 0) & (r1 <= self.r1_max), np.maximum(bound, 0.0), 0.0)
        return float(out) if out.ndim == 0 else out

    def contains(self, r1: float, r2: float, tol: float = 0.0) -> bool:
        return r1 >= -tol and r2 >= -tol and all(c.a * r1 + c.b * r2 <= 1.0 + tol for c in self.constraints)

    def boundary(self, n: int = DEFAULT_SAMPLES) -> np.ndarray:
        """(n, 2) polyline of (r1, r2_max(r1)) for r1 from 0 to the largest stable rate."""
        r1 = np.linspace(0.0, self.r1_max, n)
        return np.column_stack([r1, self.r2_max(r1)])

    def to_dict(self, n: int = DEFAULT_SAMPLES) -> dict:
        return {
            "algorithm": self.algorithm,
            "constraints": [{"a": c.a, "b": c.b} for c in self.constraints],
            "boundary": self.boundary(n).tolist(),
        }


def region_alg1(spec: ErasureSpec) -> ThroughputRegion:
    return ThroughputRegion(1, [HalfPlane(1.0 / mu1_alg1(spec), 1.0 / (1.0 - spec.eps(2, 4)))])


def region_alg3(spec: ErasureSpec) -> ThroughputRegion:
    return ThroughputRegion(3, [HalfPlane(1.0 / mu1_alg3(spec), 1.0 / (1.0 - spec.eps(2, 4)))])


def _alg5_constraints(spec: ErasureSpec, q: float) -> tuple:
    e = _operational(spec)
    return (HalfPlane(float(_inv_pi1(e, q)), 1.0 / (1.0 - e.e34_2)),
            HalfPlane(float(_non_coding_time(e, q)), 1.0 / (1.0 - e.e4_2)))


def region_alg4(spec: ErasureSpec) -> ThroughputRegion:
    return ThroughputRegion(4, _alg5_constraints(spec, 0.0))


@dataclass(frozen=True)
class QChoice:
    r1: float
    q: float
    r2: float
    feasible: bool


def _f(e: _Eps, r1: float, q):
    return np.minimum((1.0 - e.e34_2) * (1.0 - r1 * _inv_pi1(e, q)),
                      (1.0 - e.e4_2) * (1.0 - _non_coding_time(e, q) * r1))


def optimize_q(spec: ErasureSpec, r1: float, grid: int = Q_GRID) -> QChoice:
    """Best retransmission probability for algorithm 5 at primary rate `r1`.

    A coarse grid picks the bracket; bounded Brent refines it.  The objective
    is a minimum of two smooth curves and may have a kink at the optimum, so
    only derivative-free refinement is used, and the grid point is kept unless
    refinement strictly improves on it.  Ties resolve to the smallest q.
    """
    e = _operational(spec)
    qs = np.linspace(0.0, 1.0, grid)
    fs = _f(e, r1, qs)
    i = int(np.argmax(fs))
    best_q, best_f = float(qs[i]), float(fs[i])
    lo, hi = qs[max(i - 1, 0)], qs[min(i + 1, grid - 1)]
    res = minimize_scalar(lambda x: -float(_f(e, r1, x)), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-12})
    if -res.fun > best_f + 1e-12:
        best_q, best_f = float(res.x), float(-res.fun)
    feasible = best_f >= 0.0 and r1 <= 1.0 / min(_inv_pi1(e, 0.0), _inv_pi1(e, 1.0))
    return QChoice(r1, best_q, max(best_f, 0.0) if feasible else 0.0, feasible)


class Alg5Region:
    """Union over q of the algorithm-5 regions, with the maximising q per r1."""

    algorithm = 5

    def __init__(self, spec: ErasureSpec):
        self.spec = spec
        self.r1_max = max(mu1_alg5(spec, 0.0), mu1_alg5(spec, 1.0))

    def constraints_at(self, q: float) -> tuple:
        return _alg5_constraints(self.spec, q)

    def choice(self, r1: float) -> QChoice:
        return optimize_q(self.spec, r1)

    def r2_max(self, r1):
        r1 = np.asarray(r1, dtype=float)
        vals = np.array([self.choice(x).r2 for x in r1.ravel()]).reshape(r1.shape)
        return float(vals) if vals.ndim == 0 else vals

    def optimal_q(self, r1):
        r1 = np.asarray(r1, dtype=float)
        vals = np.array([self.choice(x).q for x in r1.ravel()]).reshape(r1.shape)
        return float(vals) if vals.ndim == 0 else vals

    def contains(self, r1: float, r2: float, tol: float = 0.0) -> bool:
        return r1 >= -tol and r2 >= -tol and r1 <= self.r1_max + tol and r2 <= self.r2_max(r1) + tol

    def boundary(self, n: int = DEFAULT_SAMPLES) -> np.ndarray:
        """(n, 3) array of r1, r2_max(r1), optimal q."""
        r1 = np.linspace(0.0, self.r1_max, n)
        rows = [self.choice(x) for x in r1]
        return np.array([[c.r1, c.r2, c.q] for c in rows])

    def to_dict(self, n: int = DEFAULT_SAMPLES) -> dict:
        b = self.boundary(n)
        return {
            "algorithm": 5,
            "constraints": [{"q": q, "a": c.a, "b": c.b}
                            for q in b[:, 2] for c in self.constraints_at(q)],
            "boundary": b[:, :2].tolist(),
            "optimal_q": b[:, 2].tolist(),
        }


def region_alg5(spec: ErasureSpec) -> Alg5Region:
    return Alg5Region(spec)


def region(spec: ErasureSpec, algorithm: int):
    try:
        return {1: region_alg1, 3: region_alg3, 4: region_alg4, 5: region_alg5}[algorithm](spec)
    except KeyError:
        raise ValueError(f"no region for algorithm {algorithm}") from None


def dphi_dq(spec: ErasureSpec, q):
    """Derivative of the mean service time 1/pi1(q) in q, closed form."""
    e = _Eps(spec)
    num = (e.e3_1 - e.e3_2) * (e.e34_1 - e.e234_1) * (1.0 - e.e34_2)
    den = (1.0 - e.e3_2) * (e.e34_2 + q * (e.e34_1 - e.e34_2) - 1.0) ** 2 * (1.0 - e.e234_1)
    return num / den


@dataclass(frozen=True)
class PhiCheck:
    nondecreasing: bool
    min_slope: float
    max_formula_error: float
    formula_ok: bool


def derivative_check_phi(spec: ErasureSpec, n: int = 41, h: float = 1e-5) -> PhiCheck:
    """Monotonicity of 1/pi1(q), computed from chain solves, plus a check of `dphi_dq`.

    The formula is compared with central differences on the interior grid by
    relative error, floored at a scale of 1e-3 where the derivative is ~0.
    """
    qs = np.linspace(0.0, 1.0, n)
    phi = np.array([1.0 / build_chain_alg5(spec, q).prob("1") for q in qs])
    slopes = np.diff(phi) / np.diff(qs)
    errs = []
    for q in qs[1:-1]:
        fd = (1.0 / build_chain_alg5(spec, q + h).prob("1")
              - 1.0 / build_chain_alg5(spec, q - h).prob("1")) / (2 * h)
        exact = float(dphi_dq(spec, q))
        errs.append(abs(fd - exact) / max(abs(exact), 1e-3))
    worst = max(errs) if errs else 0.0
    min_slope = float(slopes.min())
    return PhiCheck(min_slope >= -1e-9, min_slope, worst, worst < 1e-6)
