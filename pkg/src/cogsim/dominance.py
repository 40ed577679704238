"""Coupling construction showing that relaying shortens primary service times.

On one probability space we draw, per slot, the reception pair at nodes 2
and 3 of a node-1 transmission and an independent coin ``theta``.  The coin
turns node 3's erasures into the node-2-to-node-3 channel:

    J(t) = theta(t) if Z3(t) == 0 else 1,    Pr(theta = 0) = eps2_3 / eps1_3

so ``J >= Z3`` slot by slot and ``Pr(J = 0) = eps2_3``.  The service time
without cooperation is the first slot with ``Z3 = 1``; with forwarding it is
the first slot node 2 or 3 hears node 1, followed (if only node 2 heard it)
by the first later slot with ``J = 1``.  Service times are counted in slots,
starting at 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import stats

from .channel import ErasureSpec
from .engine import RunConfig, UniformStream, simulate
from .traffic import bernoulli


@dataclass
class CoupledSample:
    z2: list
    z3: list
    theta: list
    j: list
    t23: int     # slot index (from 0) at which node 2 or 3 first hears node 1
    s_nc: int    # service time without cooperation
    s_c: int     # service time with forwarding


class _Coupling:
    """Per-slot laws of (Z2, Z3) and theta for one spec."""

    def __init__(self, spec: ErasureSpec):
        e3_1, e3_2 = spec.eps(1, 3), spec.eps(2, 3)
        if e3_1 >= 1.0:
            raise ValueError("node 3 never hears node 1; the non-cooperative service never ends")
        if e3_1 == 0.0:
            if e3_2 > 0.0:
                raise ValueError("eps(1,{3}) = 0 < eps(2,{3}): theta law undefined")
            self.theta_zero = 0.0
        else:
            if e3_2 > e3_1:
                raise ValueError(f"inadmissible spec: eps(2,{{3}})={e3_2} > eps(1,{{3}})={e3_1}")
            self.theta_zero = e3_2 / e3_1
        # marginalise node 1's patterns over node 4: mask bit 0 = node 2, bit 1 = node 3
        pair = np.zeros(4)
        for m, p in enumerate(spec.tx1_pattern_probs):
            pair[m & 3] += p
        self.pair_probs = pair
        cum = np.cumsum(pair)
        cum[-1] = 1.0
        self.cum = cum.tolist()

    def pair(self, u: float) -> int:
        c = self.cum
        return 0 if u < c[0] else 1 if u < c[1] else 2 if u < c[2] else 3


def draw_coupled(spec: ErasureSpec, rng, _coupling: Optional[_Coupling] = None) -> CoupledSample:
    """Build one coupled pair of service times, slot by slot.

    Only the current slot is read when deciding whether a stopping time has
    been reached; the draw stops as soon as both service times are known.
    `rng` needs a ``random()`` method.
    """
    cp = _coupling or _Coupling(spec)
    theta_zero = cp.theta_zero
    z2s, z3s, ths, js = [], [], [], []
    t23 = s_nc = s_c = None
    t = 0
    while s_nc is None or s_c is None:
        k = cp.pair(rng.random())
        z2, z3 = k & 1, k >> 1 & 1
        th = 0 if rng.random() < theta_zero else 1
        j = th if z3 == 0 else 1
        z2s.append(z2)
        z3s.append(z3)
        ths.append(th)
        js.append(j)
        if t23 is None:
            if z2 or z3:
                t23 = t
                if z3:
                    s_c = t + 1
        elif s_c is None and j:
            s_c = t + 1
        if s_nc is None and z3:
            s_nc = t + 1
        t += 1
    return CoupledSample(z2s, z3s, ths, js, t23, s_nc, s_c)


def ks_discrete(sample, cdf) -> tuple:
    """One-sample KS statistic and p-value for an integer-valued law.

    The supremum is taken over the support (both CDFs are right-continuous
    step functions with jumps there); the continuous-law p-value is then
    conservative.
    """
    x = np.asarray(sample)
    n = len(x)
    support, counts = np.unique(x, return_counts=True)
    emp = np.cumsum(counts) / n
    grid = np.arange(int(support[0]) - 1, int(support[-1]) + 1)
    idx = np.searchsorted(support, grid, side="right") - 1
    emp_grid = np.where(idx >= 0, emp[np.maximum(idx, 0)], 0.0)
    d = float(np.max(np.abs(emp_grid - cdf(grid))))
    return d, float(stats.kstwo.sf(d, n))


def ks_two_sample(a, b) -> tuple:
    res = stats.ks_2samp(a, b, method="asymp")
    return float(res.statistic), float(res.pvalue)


def protocol_service_times(spec: ErasureSpec, algorithm: int, n: int, seed: int = 0,
                           q: float = 0.0) -> np.ndarray:
    """Service times of `n` primary packets from a lightly loaded simulation."""
    from .analytic import mu1_alg1, mu1_alg3
    mu = mu1_alg1(spec) if algorithm == 1 else mu1_alg3(spec)
    lam = 0.5 * mu
    horizon = int(1.3 * n / lam) + 1000
    run = simulate(RunConfig(algorithm, spec, bernoulli(lam), horizon, q=q, warmup=0, seed=seed))
    times = run.service_times
    if len(times) < n:
        raise RuntimeError(f"only {len(times)} packets delivered, wanted {n}")
    return times[:n]


@dataclass
class DominanceReport:
    n_samples: int
    violations: int
    s_nc_mean: float
    s_c_mean: float
    geometric_mean: float
    j_zero_freq: float
    theta_corr_z2: float
    theta_corr_z3: float
    ks_nc_geometric: tuple
    ks_nc_alg1: Optional[tuple] = None
    ks_c_alg3: Optional[tuple] = None
    alpha: float = 0.01

    @property
    def passed(self) -> bool:
        tests = [self.ks_nc_geometric, self.ks_nc_alg1, self.ks_c_alg3]
        return self.violations == 0 and all(t[1] >= self.alpha for t in tests if t is not None)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def dominance_report(spec: ErasureSpec, n_samples: int, seed: int = 0,
                     compare_protocol: bool = True, alpha: float = 0.01) -> DominanceReport:
    """Check the coupling on `n_samples` draws.

    Counts pathwise violations of ``s_c <= s_nc`` and KS-tests the
    non-cooperative marginal against the geometric law.  With
    `compare_protocol`, both coupled marginals are also compared with service
    times simulated under algorithms 1 and 3.
    """
    if n_samples < 1000:
        raise ValueError("dominance_report needs at least 1000 samples")
    cp = _Coupling(spec)
    rng = UniformStream(np.random.default_rng(seed))
    s_nc = np.empty(n_samples, dtype=np.int64)
    s_c = np.empty(n_samples, dtype=np.int64)
    j_zero = j_total = 0
    th_all, z2_all, z3_all = [], [], []
    for i in range(n_samples):
        cs = draw_coupled(spec, rng, cp)
        s_nc[i], s_c[i] = cs.s_nc, cs.s_c
        j_zero += len(cs.j) - sum(cs.j)
        j_total += len(cs.j)
        if len(th_all) < 1_000_000:
            th_all.extend(cs.theta)
            z2_all.extend(cs.z2)
            z3_all.extend(cs.z3)
    violations = int(np.count_nonzero(s_c > s_nc))
    p = 1.0 - spec.eps(1, 3)
    ks_geo = ks_discrete(s_nc, lambda x: stats.geom.cdf(x, p))

    def corr(a, b):
        a, b = np.asarray(a, float), np.asarray(b, float)
        if a.std() == 0 or b.std() == 0:
            return 0.0
        return float(np.corrcoef(a, b)[0, 1])

    report = DominanceReport(
        n_samples=n_samples, violations=violations,
        s_nc_mean=float(s_nc.mean()), s_c_mean=float(s_c.mean()),
        geometric_mean=1.0 / p,
        j_zero_freq=j_zero / j_total,
        theta_corr_z2=corr(th_all, z2_all), theta_corr_z3=corr(th_all, z3_all),
        ks_nc_geometric=ks_geo, alpha=alpha,
    )
    if compare_protocol:
        report.ks_nc_alg1 = ks_two_sample(s_nc, protocol_service_times(spec, 1, n_samples, seed + 1))
        report.ks_c_alg3 = ks_two_sample(s_c, protocol_service_times(spec, 3, n_samples, seed + 2))
    return report


def dkw_band(n: int, alpha: float = 0.01) -> float:
    """Two-sided Dvoretzky-Kiefer-Wolfowitz band half-width for an empirical CDF."""
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))
