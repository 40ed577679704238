"""Command-line front end: single runs, sweeps, regions, validation and the coupling check.

Every output starts with the fully resolved configuration, so a file can be
regenerated from its own header.  Exit codes: 0 success, 2 validation
failure, 3 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .analytic import (build_chain_alg5, derivative_check_phi, inv_pi1, mu1_alg1, mu1_alg3,
                       non_coding_time, optimize_q, pi3_alg4, region, region_alg4, renewal_r2)
from .analytic.queueing import busy_idle
from .analytic.regions import ThroughputRegion, _alg5_constraints
from .channel import ErasureSpec, baseline_spec, load_spec, retx_spec
from .dominance import dominance_report, ks_two_sample
from .engine import RunConfig, busy_idle_stats, q1s_slope, simulate
from .protocols import ALGORITHMS, InvariantViolation
from .traffic import bernoulli

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG = 0, 2, 3
PRESETS = {"baseline": baseline_spec, "retx": retx_spec}
COMMANDS = ("simulate", "region", "sweep", "validate", "dominance")

# validation tolerances and data guards
R2_TOL = 0.01
R1_TOL = 0.01
CHAIN_TOL = 1e-10
BUSY_REL_TOL = 0.05
STABILITY_GAP = 0.02
MIN_RATE_WINDOW = 40_000       # 2 sigma of a rate estimate stays below R2_TOL / 2
MIN_STABILITY_HORIZON = 10**6  # drift of STABILITY_GAP must clear twice the slope threshold
MIN_CYCLES = 1000
MIN_PACKETS = 1000
TRACE_SLOTS = 10**5
DOMINANCE_SAMPLES = 10**4
KS_ALPHA = 0.01


class ConfigError(ValueError):
    """Bad command-line or file configuration (exit code 3)."""


@dataclass
class ExperimentSpec:
    command: str
    spec_source: str
    spec: ErasureSpec
    algorithms: tuple
    lambdas: tuple
    q: object               # tuple of floats or "auto"
    horizon: int
    warmup: Optional[int]
    seeds: tuple
    out: Optional[str]
    fmt: str
    samples: int = DOMINANCE_SAMPLES

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if not self.algorithms:
            raise ConfigError("algorithm list is empty")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ConfigError(f"unsupported algorithms {bad}; choose from {ALGORITHMS}")
        for name, grid in (("lambda", self.lambdas), ("q", () if self.q == "auto" else self.q)):
            if name == "lambda" and not grid:
                raise ConfigError("lambda grid is empty")
            if any(not 0.0 <= x <= 1.0 for x in grid):
                raise ConfigError(f"{name} grid must lie in [0, 1], got {list(grid)}")
        if self.q != "auto" and not self.q:
            raise ConfigError("q grid is empty")
        if self.fmt not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.fmt!r}")
        if self.horizon <= 0:
            raise ConfigError("horizon must be positive")
        if self.warmup is not None and not 0 <= self.warmup < self.horizon:
            raise ConfigError("need 0 <= warmup < horizon")
        if not self.seeds:
            raise ConfigError("seed list is empty")

    def header(self) -> dict:
        return {
            "tool": "cogsim",
            "version": __version__,
            "command": self.command,
            "spec_source": self.spec_source,
            "channel": self.spec.to_dict(),
            "algorithms": list(self.algorithms),
            "lambda": list(self.lambdas),
            "q": self.q if self.q == "auto" else list(self.q),
            "horizon": self.horizon,
            "warmup": self.horizon // 10 if self.warmup is None else self.warmup,
            "seeds": list(self.seeds),
            "samples": self.samples,
            "format": self.fmt,
        }


# ---------------------------------------------------------------- parsing

def parse_grid(text: str) -> tuple:
    """``a:b:step`` (inclusive of b), a comma list, or a single number."""
    try:
        if ":" in text:
            parts = [float(x) for x in text.split(":")]
            if len(parts) != 3:
                raise ConfigError(f"grid {text!r} must have the form a:b:step")
            a, b, step = parts
            if step <= 0 or b < a:
                raise ConfigError(f"grid {text!r} needs step > 0 and a <= b")
            n = int(math.floor((b - a) / step + 1e-9)) + 1
            return tuple(round(a + i * step, 12) for i in range(n))
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot parse grid {text!r}") from None


def parse_int_list(text: str, what: str) -> tuple:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"cannot parse {what} list {text!r}") from None


def resolve_spec(source: str) -> ErasureSpec:
    if source in PRESETS and not os.path.exists(source):
        return PRESETS[source]()
    try:
        return load_spec(source)
    except FileNotFoundError:
        raise ConfigError(f"spec file {source!r} not found (presets: {sorted(PRESETS)})") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid spec {source!r}: {exc}") from None


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 3); 2 is reserved for failed validation."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: configuration error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--spec", default="baseline",
                        help="channel spec JSON file, or a preset name (baseline, retx)")
    common.add_argument("--alg", default=None, help="comma list of algorithms from 1,3,4,5")
    common.add_argument("--lambda", dest="lam", default="0.1", help="a:b:step, list or value")
    common.add_argument("--q", default="auto", help="a:b:step, list, value or 'auto'")
    common.add_argument("--horizon", type=int, default=10**6)
    common.add_argument("--warmup", type=int, default=None)
    common.add_argument("--seed", default="0", help="S[,S...]")
    common.add_argument("--samples", type=int, default=DOMINANCE_SAMPLES,
                        help="coupled draws for the dominance check")
    common.add_argument("--out", default=None, help="output path (default stdout)")
    common.add_argument("--format", dest="fmt", default=None, help="csv or json")

    parser = _Parser(prog="cogsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cogsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "run each algorithm and seed at one primary arrival rate",
        "region": "export analytic throughput regions",
        "sweep": "simulate over a lambda x algorithm x seed grid",
        "validate": "simulation versus analysis checks with a pass/fail report",
        "dominance": "coupled service-time draws and their tests",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def experiment_from_args(args) -> ExperimentSpec:
    default_fmt = "json" if args.command in ("region", "validate", "dominance") else "csv"
    algs = parse_int_list(args.alg, "algorithm") if args.alg is not None else ALGORITHMS
    q = "auto" if args.q.strip().lower() == "auto" else parse_grid(args.q)
    if args.samples < 1000:
        raise ConfigError("--samples must be at least 1000")
    return ExperimentSpec(
        command=args.command, spec_source=args.spec, spec=resolve_spec(args.spec),
        algorithms=algs, lambdas=parse_grid(args.lam), q=q, horizon=args.horizon,
        warmup=args.warmup, seeds=parse_int_list(args.seed, "seed"), out=args.out,
        fmt=args.fmt or default_fmt, samples=args.samples,
    )


# ---------------------------------------------------------------- execution

def worker_count() -> int:
    env = os.environ.get("COGSIM_THREADS")
    if env is None:
        return os.cpu_count() or 1
    try:
        n = int(env)
    except ValueError:
        raise ConfigError(f"COGSIM_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise ConfigError("COGSIM_THREADS must be at least 1")
    return n


def pool_map(fn, jobs: list) -> list:
    """Map over a bounded process pool; results keep the job order."""
    workers = min(worker_count(), len(jobs))
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def q_values(exp: ExperimentSpec, alg: int, lam: float) -> tuple:
    if alg != 5:
        return (0.0,)
    if exp.q == "auto":
        return (optimize_q(exp.spec, lam).q,)
    return exp.q


def _r2_boundary(spec: ErasureSpec, alg: int, lam: float, q: float) -> float:
    """Analytic r2 at r1 = lam for the q actually simulated (NaN outside the region)."""
    if alg == 5:
        reg = ThroughputRegion(5, _alg5_constraints(spec, q))
    else:
        reg = region(spec, alg)
    return float(reg.r2_max(lam)) if lam < reg.r1_max else math.nan


def _sweep_point(cfg: RunConfig) -> dict:
    m = simulate(cfg).metrics.to_dict()
    try:
        m["r2_boundary"] = _r2_boundary(cfg.spec, cfg.algorithm, cfg.arrivals.lambda1, cfg.q)
    except ValueError:
        m["r2_boundary"] = math.nan
    return m


def sweep_configs(exp: ExperimentSpec) -> list:
    """Deterministic order: algorithm, lambda, q, seed."""
    out = []
    for alg in exp.algorithms:
        for lam in exp.lambdas:
            for q in q_values(exp, alg, lam):
                for seed in exp.seeds:
                    out.append(RunConfig(alg, exp.spec, bernoulli(lam), exp.horizon,
                                         q=q, warmup=exp.warmup, seed=seed))
    return out


def cmd_sweep(exp: ExperimentSpec) -> tuple:
    rows = pool_map(_sweep_point, sweep_configs(exp))
    return {"rows": rows}, EXIT_OK


def cmd_simulate(exp: ExperimentSpec) -> tuple:
    if len(exp.lambdas) != 1:
        raise ConfigError("simulate takes a single lambda value; use sweep for grids")
    return cmd_sweep(exp)


def cmd_region(exp: ExperimentSpec) -> tuple:
    regions = []
    for alg in exp.algorithms:
        try:
            regions.append(region(exp.spec, alg).to_dict())
        except ValueError as exc:
            raise ConfigError(f"algorithm {alg}: {exc}") from None
    return {"regions": regions}, EXIT_OK


def cmd_dominance(exp: ExperimentSpec) -> tuple:
    try:
        rep = dominance_report(exp.spec, exp.samples, seed=exp.seeds[0])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return {"report": rep.to_dict()}, EXIT_OK if rep.passed else EXIT_VALIDATION


# ---------------------------------------------------------------- validation

@dataclass
class Check:
    name: str
    status: str           # pass | fail | insufficient | skipped
    detail: dict = field(default_factory=dict)


def _status(ok: bool, enough: bool = True) -> str:
    if not enough:
        return "insufficient"
    return "pass" if ok else "fail"


def _is_operational(spec: ErasureSpec) -> bool:
    return spec.eps(1, 2, 3) < 1.0 and spec.eps(2, 3) < 1.0 and spec.eps(2, 3, 4) < 1.0


def _analytic_checks(spec: ErasureSpec) -> list:
    checks = []
    if not _is_operational(spec):
        return [Check("chain_closed_forms", "skipped", {"reason": "channel not operational"})]
    worst = 0.0
    for q in (0.0, 0.25, 0.5, 0.75, 1.0):
        ch = build_chain_alg5(spec, q)
        p1, p3 = ch.prob("1"), ch.prob("3")
        worst = max(worst, abs(1.0 / p1 - float(inv_pi1(spec, q))),
                    abs((1.0 - p3) / p1 - float(non_coding_time(spec, q))))
    ch0 = build_chain_alg5(spec, 0.0)
    worst = max(worst, abs(ch0.prob("1") - mu1_alg3(spec)), abs(ch0.prob("3") - pi3_alg4(spec)))
    checks.append(Check("chain_closed_forms", _status(worst <= CHAIN_TOL),
                        {"max_abs_error": worst, "tol": CHAIN_TOL}))

    reg4 = region_alg4(spec)
    lams = np.linspace(0.0, reg4.r1_max, 12)[1:-1]
    diff = max(abs(renewal_r2(spec, lam) - reg4.r2_max(lam)) for lam in lams)
    checks.append(Check("renewal_vs_region_alg4", _status(diff <= 1e-9),
                        {"max_abs_error": diff, "tol": 1e-9}))

    phi = derivative_check_phi(spec)
    checks.append(Check("retransmission_derivative", _status(phi.formula_ok),
                        asdict(phi)))
    return checks


def _val_run(job: tuple):
    cfg, full = job
    r = simulate(cfg, on_violation="count", full_check_every=1000 if full else 0)
    return r.metrics, r.service_times, busy_idle_stats(r, MIN_CYCLES)


def _stability_run(cfg: RunConfig) -> tuple:
    r = simulate(cfg, on_violation="count")
    return q1s_slope(r.q1s), 10.0 / math.sqrt(cfg.horizon), r.metrics.violations


def _trace_run(cfg: RunConfig) -> list:
    r = simulate(cfg, record_deliveries=True, on_violation="count")
    return [(d.slot, d.session, d.packet_id) for d in r.deliveries]


def cmd_validate(exp: ExperimentSpec) -> tuple:
    spec, horizon, seed = exp.spec, exp.horizon, exp.seeds[0]
    warmup = horizon // 10 if exp.warmup is None else exp.warmup
    window = horizon - warmup
    t0 = time.perf_counter()
    checks = [Check("admissible", _status(spec.is_admissible()),
                    {"eps1_3": spec.eps(1, 3), "eps2_3": spec.eps(2, 3)})]
    checks += _analytic_checks(spec)

    algs = [a for a in exp.algorithms if a in (1, 3) or _is_operational(spec)]
    for a in exp.algorithms:
        if a not in algs:
            checks.append(Check(f"region_sim_alg{a}", "skipped", {"reason": "channel not operational"}))

    # simulated rates against the region boundary at half of the largest primary rate
    jobs, meta = [], []
    for a in algs:
        reg = region(spec, a)
        lam = 0.5 * reg.r1_max
        q = optimize_q(spec, lam).q if a == 5 else 0.0
        r2_exp = (float(reg.r2_max(lam)) if a != 5 else optimize_q(spec, lam).r2)
        jobs.append((RunConfig(a, spec, bernoulli(lam), horizon, q=q, warmup=warmup,
                               seed=seed + a), True))
        meta.append((a, lam, q, r2_exp))
    results = pool_map(_val_run, jobs)
    service = {}
    for (a, lam, q, r2_exp), (m, st, bi) in zip(meta, results):
        enough = window >= MIN_RATE_WINDOW
        ok = abs(m.r2 - r2_exp) <= R2_TOL and abs(m.r1 - lam) <= R1_TOL
        checks.append(Check(f"region_sim_alg{a}", _status(ok, enough),
                            {"lambda1": lam, "q": q, "r1": m.r1, "r2": m.r2,
                             "r2_analytic": r2_exp, "tol": R2_TOL}))
        checks.append(Check(f"invariants_alg{a}", _status(m.violations == 0),
                            {"violations": m.violations, "slots": horizon}))
        service[a] = st
        if a == 1:
            p = 1.0 - lam
            b_exp, i_exp = busy_idle(lam, mu1_alg1(spec), p)
            ok = (abs(bi.busy_mean - b_exp) <= BUSY_REL_TOL * b_exp
                  and abs(bi.idle_mean - i_exp) <= BUSY_REL_TOL * i_exp)
            checks.append(Check("busy_idle_alg1", _status(ok, bi.cycles >= MIN_CYCLES),
                                {"busy": bi.busy_mean, "busy_analytic": b_exp,
                                 "idle": bi.idle_mean, "idle_analytic": i_exp,
                                 "cycles": bi.cycles, "rel_tol": BUSY_REL_TOL}))

    if 3 in service and 4 in service:
        a, b = service[3], service[4]
        enough = min(len(a), len(b)) >= MIN_PACKETS
        d, pv = ks_two_sample(a, b) if enough else (math.nan, math.nan)
        checks.append(Check("service_alg4_vs_alg3", _status(pv >= KS_ALPHA, enough),
                            {"ks": d, "pvalue": pv, "packets": [len(a), len(b)]}))

    # stability verdicts on either side of the service rate
    stab_jobs, stab_meta = [], []
    for a in (x for x in algs if x in (1, 3)):
        mu = mu1_alg1(spec) if a == 1 else mu1_alg3(spec)
        for lam, want_stable in ((mu - STABILITY_GAP, True), (mu + STABILITY_GAP, False)):
            if 0.0 <= lam <= 1.0:
                stab_jobs.append(RunConfig(a, spec, bernoulli(lam), horizon, warmup=warmup, seed=seed))
                stab_meta.append((a, lam, want_stable))
    for (a, lam, want), (slope, thr, _) in zip(stab_meta, pool_map(_stability_run, stab_jobs)):
        stable = slope <= thr
        checks.append(Check(f"stability_alg{a}_{'below' if want else 'above'}",
                            _status(stable == want, horizon >= MIN_STABILITY_HORIZON),
                            {"lambda1": lam, "slope": slope, "threshold": thr,
                             "expected_stable": want}))

    if 4 in algs and 5 in algs:
        n = min(horizon, TRACE_SLOTS)
        tr = pool_map(_trace_run, [RunConfig(4, spec, bernoulli(0.5 * mu1_alg3(spec)), n, warmup=0, seed=seed),
                                   RunConfig(5, spec, bernoulli(0.5 * mu1_alg3(spec)), n, q=0.0, warmup=0,
                                             seed=seed)])
        checks.append(Check("trace_alg5_q0_equals_alg4", _status(tr[0] == tr[1]),
                            {"slots": n, "deliveries": len(tr[0])}))

    if spec.is_admissible() and spec.eps(1, 3) < 1.0:
        try:
            rep = dominance_report(spec, exp.samples, seed=seed)
            checks.append(Check("dominance", _status(rep.passed), rep.to_dict()))
        except InvariantViolation as exc:
            checks.append(Check("dominance", "fail", {"error": str(exc).splitlines()[0]}))
    else:
        checks.append(Check("dominance", "skipped", {"reason": "spec not admissible"}))

    statuses = {c.status for c in checks}
    overall = "fail" if "fail" in statuses else "insufficient" if "insufficient" in statuses else "pass"
    report = {"status": overall, "elapsed_s": time.perf_counter() - t0,
              "checks": [asdict(c) for c in checks]}
    return report, EXIT_VALIDATION if overall == "fail" else EXIT_OK


# ---------------------------------------------------------------- output

def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not serialisable: {type(o)}")


def _csv_rows(command: str, payload: dict) -> tuple:
    if command in ("simulate", "sweep"):
        rows = payload["rows"]
        return (list(rows[0].keys()) if rows else []), [list(r.values()) for r in rows]
    if command == "region":
        out = []
        for reg in payload["regions"]:
            qs = reg.get("optimal_q")
            for i, (r1, r2) in enumerate(reg["boundary"]):
                out.append([reg["algorithm"], r1, r2, qs[i] if qs else ""])
        return ["algorithm", "r1", "r2", "q"], out
    if command == "validate":
        return (["name", "status", "detail"],
                [[c["name"], c["status"], json.dumps(c["detail"], default=_json_default)]
                 for c in payload["checks"]])
    rep = payload["report"]
    return ["field", "value"], [[k, json.dumps(v, default=_json_default)] for k, v in rep.items()]


def render(exp: ExperimentSpec, payload: dict) -> str:
    header = exp.header()
    if exp.fmt == "json":
        return json.dumps({"config": header, **payload}, indent=2, default=_json_default) + "\n"
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(header, default=_json_default) + "\n")
    if exp.command == "validate":
        buf.write(f"# status: {payload['status']}\n")
    cols, rows = _csv_rows(exp.command, payload)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    w.writerows(rows)
    return buf.getvalue()


def read_header(path: str) -> dict:
    """Configuration embedded in a file written by this tool."""
    with open(path) as fh:
        first = fh.readline()
        if first.startswith("# config: "):
            return json.loads(first[len("# config: "):])
        fh.seek(0)
        return json.load(fh)["config"]


HANDLERS = {"simulate": cmd_simulate, "region": cmd_region, "sweep": cmd_sweep,
            "validate": cmd_validate, "dominance": cmd_dominance}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        exp = experiment_from_args(args)
        worker_count()
        payload, code = HANDLERS[exp.command](exp)
    except ConfigError as exc:
        print(f"cogsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = render(exp, payload)
    if exp.out:
        with open(exp.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if code == EXIT_VALIDATION:
        print(f"cogsim: {exp.command} failed", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
