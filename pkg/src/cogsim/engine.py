"""Slotted simulation runs and the statistics collected from them."""

from __future__ import annotations

import csv
import math
from array import array
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import protocols as proto
from .channel import ErasureSpec, RECEIVERS, event, nodes_of, sample_masks
from .traffic import ArrivalProcess, bernoulli, draw_arrivals

CHUNK = 1 << 16
MIN_CYCLES = 100


class UniformStream:
    """Buffered ``random()`` over a numpy Generator; cheap per-call draws."""

    def __init__(self, rng: np.random.Generator, chunk: int = 4096):
        self._rng = rng
        self._chunk = chunk
        self._buf: list = []
        self._i = 0

    def random(self) -> float:
        if self._i >= len(self._buf):
            self._buf = self._rng.random(self._chunk).tolist()
            self._i = 0
        u = self._buf[self._i]
        self._i += 1
        return u


def streams(seed: int, n: int = 4) -> list:
    """Independent generators derived from one seed (arrivals, tx1, tx2, coin)."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


@dataclass(frozen=True)
class RunConfig:
    algorithm: int
    spec: ErasureSpec
    arrivals: ArrivalProcess
    horizon: int
    q: float = 0.0
    warmup: Optional[int] = None  # default: 10% of horizon
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in proto.ALGORITHMS:
            raise ValueError(f"unsupported algorithm {self.algorithm}")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {self.q}")
        if self.warmup is None:
            object.__setattr__(self, "warmup", self.horizon // 10)
        if not self.horizon > self.warmup >= 0:
            raise ValueError(f"need horizon > warmup >= 0, got {self.horizon}, {self.warmup}")

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "channel": self.spec.to_dict(),
            "arrivals": self.arrivals.to_dict(),
            "horizon": self.horizon,
            "q": self.q,
            "warmup": self.warmup,
            "seed": self.seed,
        }


@dataclass
class RunMetrics:
    algorithm: int
    seed: int
    horizon: int
    warmup: int
    q: float
    lambda1: float
    r1: float
    r2: float
    delivered1: int
    delivered2: int
    service_mean: float
    service_p50: float
    service_p90: float
    service_p99: float
    busy_mean: float
    idle_mean: float
    cycles: int
    busy_idle_sufficient: bool
    q1s_max: int
    q1s_mean: float
    violations: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Run:
    config: RunConfig
    metrics: RunMetrics
    service_ids: np.ndarray
    service_times: np.ndarray
    q1s: np.ndarray
    deliveries: Optional[list] = None
    violation_messages: list = field(default_factory=list)


def _busy_idle_runs(q1s: np.ndarray):
    """Lengths of complete busy and idle periods in a Q1^S trajectory.

    Periods touching either end of the window are incomplete and dropped.
    """
    busy = q1s > 0
    if len(busy) == 0:
        return np.array([], dtype=int), np.array([], dtype=int)
    edges = np.flatnonzero(np.diff(busy.astype(np.int8))) + 1
    starts = np.r_[0, edges]
    lengths = np.diff(np.r_[starts, len(busy)])
    kinds = busy[starts]
    inner = slice(1, len(starts) - 1)
    lengths, kinds = lengths[inner], kinds[inner]
    return lengths[kinds], lengths[~kinds]


@dataclass(frozen=True)
class BusyIdle:
    busy_mean: float
    idle_mean: float
    cycles: int
    sufficient: bool


def busy_idle_stats(run: Run, min_cycles: int = MIN_CYCLES) -> BusyIdle:
    """Mean busy and idle period lengths of Q1^S after warmup.

    With no arrivals there are no busy periods; both means are then NaN and
    the result is flagged insufficient.
    """
    busy, idle = _busy_idle_runs(run.q1s[run.config.warmup:])
    cycles = min(len(busy), len(idle))
    b = float(busy.mean()) if len(busy) else math.nan
    i = float(idle.mean()) if len(idle) else math.nan
    return BusyIdle(b, i, cycles, cycles >= min_cycles)


def service_time_records(run: Run) -> list:
    """(packet id, service time in slots) for every delivered primary packet."""
    return list(zip(run.service_ids.tolist(), run.service_times.tolist()))


def simulate(config: RunConfig, record_deliveries: bool = False,
             on_violation: str = "raise", full_check_every: int = 0,
             trace=None) -> Run:
    """Run one slotted simulation.

    Slot order: arrivals, Q1^S sample, schedule, channel draw, feedback.
    Both transmitters' reception patterns are drawn every slot from their own
    streams, so algorithms run on the same seed see the same channel.

    Parameters
    ----------
    record_deliveries : keep every `Delivery` (memory heavy for long runs).
    on_violation : ``"raise"`` aborts on the first broken invariant with the
        last slots attached; ``"count"`` keeps going and counts them.
    full_check_every : compare the mirror queues element-wise every this many
        slots (0 disables; the cheap per-slot check always runs).
    trace : optional text stream receiving a per-slot CSV trace.
    """
    alg, spec, q = config.algorithm, config.spec, config.q
    horizon, warmup = config.horizon, config.warmup
    g_arr, g_tx1, g_tx2, g_coin = streams(config.seed)
    coin = UniformStream(g_coin)

    state = proto.SystemState(alg)
    q1s = np.zeros(horizon, dtype=np.int32)
    service_ids = array("q")
    service_times = array("q")
    deliveries = [] if record_deliveries else None
    messages: list = []
    tail: deque = deque(maxlen=32)
    ev1 = [event(1, m) for m in range(8)]
    ev2 = [event(2, m) for m in range(4)]
    last_primary = -1
    n1 = n2 = 0
    violations = 0
    writer = None
    if trace is not None:
        writer = csv.writer(trace)
        writer.writerow(["slot", "transmitter", "kind", "payload", "received_by",
                         *state.occupancy().keys()])

    schedule, apply_outcome, check = proto.schedule, proto.apply_outcome, proto.check_invariants
    NODE1, CODED, PRIMARY = proto.NODE1, proto.CODED, proto.PRIMARY

    def fail(msg: str):
        nonlocal violations
        violations += 1
        if len(messages) < 100:
            messages.append(msg)
        if on_violation == "raise":
            lines = "\n".join(f"  slot {s}: {d} rx={nodes_of(d.transmitter, mk)}" for s, d, mk in tail)
            raise proto.InvariantViolation(f"{msg}\nlast slots:\n{lines}")

    for start in range(0, horizon, CHUNK):
        n = min(CHUNK, horizon - start)
        arr = draw_arrivals(config.arrivals, g_arr, n).tolist()
        m1 = sample_masks(spec, 1, g_tx1, n).tolist()
        m2 = sample_masks(spec, 2, g_tx2, n).tolist()
        for i in range(n):
            t = start + i
            state.slot = t
            a = arr[i]
            if a:
                state.add_arrivals(a)
            q1s[t] = state.q1_system()

            d = schedule(alg, state, q, coin)
            tx = d.transmitter
            if tx == 1:
                mask = m1[i]
                ev = ev1[mask]
                if d.kind != NODE1:
                    fail(f"slot {t}: node 1 asked to send {d.kind}")
            elif tx == 2:
                mask = m2[i]
                ev = ev2[mask]
            else:
                fail(f"slot {t}: transmitter {tx} is not a single valid node")
                continue
            tail.append((t, d, mask))
            if writer is not None:
                writer.writerow([t, tx, d.kind, "^".join(map(str, d.payload_ids)),
                                 "|".join(map(str, sorted(nodes_of(tx, mask)))),
                                 *state.occupancy().values()])

            # the primary packet this slot can deliver
            holder = state.B1_2_e3r4 if d.kind == CODED else d.payload
            out = apply_outcome(alg, state, d, ev)
            for rec in out:
                if rec.session == PRIMARY:
                    if rec.packet_id <= last_primary:
                        fail(f"slot {t}: primary packet {rec.packet_id} delivered after {last_primary}")
                    last_primary = rec.packet_id
                    if t >= warmup:
                        n1 += 1
                    service_ids.append(rec.packet_id)
                    service_times.append(t - holder.head_slot + 1)
                elif t >= warmup:
                    n2 += 1
                if deliveries is not None:
                    deliveries.append(rec)

            bad = check(state, full=bool(full_check_every) and t % full_check_every == 0)
            if bad:
                fail(f"slot {t}: " + "; ".join(bad))

    window = horizon - warmup
    st = np.frombuffer(service_times, dtype=np.int64) if service_times else np.zeros(0, np.int64)
    sid = np.frombuffer(service_ids, dtype=np.int64) if service_ids else np.zeros(0, np.int64)
    run = Run(config, None, sid.copy(), st.copy(), q1s, deliveries, messages)
    bi = busy_idle_stats(run)
    post = q1s[warmup:]
    if len(st):
        p50, p90, p99 = (float(x) for x in np.percentile(st, [50, 90, 99]))
        smean = float(st.mean())
    else:
        p50 = p90 = p99 = smean = math.nan
    run.metrics = RunMetrics(
        algorithm=alg, seed=config.seed, horizon=horizon, warmup=warmup, q=q,
        lambda1=config.arrivals.lambda1,
        r1=n1 / window, r2=n2 / window, delivered1=n1, delivered2=n2,
        service_mean=smean, service_p50=p50, service_p90=p90, service_p99=p99,
        busy_mean=bi.busy_mean, idle_mean=bi.idle_mean, cycles=bi.cycles,
        busy_idle_sufficient=bi.sufficient,
        q1s_max=int(post.max()), q1s_mean=float(post.mean()), violations=violations,
    )
    return run


def run(config: RunConfig, **kwargs) -> RunMetrics:
    """Simulate and return only the summary metrics."""
    return simulate(config, **kwargs).metrics


@dataclass(frozen=True)
class StabilityVerdict:
    lambda1: float
    stable: bool
    slope: float
    threshold: float
    q1s_mean: float
    q1s_max: int
    q1s_final: int


def q1s_slope(q1s: np.ndarray) -> float:
    """Least-squares growth rate of Q1^S over the second half of the run."""
    half = q1s[len(q1s) // 2:]
    stride = max(1, len(half) // 20_000)
    y = half[::stride].astype(float)
    x = np.arange(len(y), dtype=float) * stride
    return float(np.polyfit(x, y, 1)[0])


def stability_probe(config: RunConfig, lambda_grid: Sequence[float]) -> list:
    """Empirical stability verdict of Q1^S for each Bernoulli rate in the grid.

    Unstable iff the fitted slope over the last half of the horizon exceeds
    ``10 / sqrt(horizon)`` packets per slot.
    """
    threshold = 10.0 / math.sqrt(config.horizon)
    out = []
    for lam in lambda_grid:
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"lambda {lam} outside [0, 1]")
        cfg = RunConfig(config.algorithm, config.spec, bernoulli(lam), config.horizon,
                        q=config.q, warmup=config.warmup, seed=config.seed)
        r = simulate(cfg)
        slope = q1s_slope(r.q1s)
        out.append(StabilityVerdict(lam, slope <= threshold, slope, threshold,
                                    r.metrics.q1s_mean, r.metrics.q1s_max, int(r.q1s[-1])))
    return out
