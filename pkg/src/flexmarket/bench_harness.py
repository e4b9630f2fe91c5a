"""Monte Carlo runtime/optimality comparison of the convex and MIP solvers.

Each trial draws a fresh instance (device mix, curvatures, current device
powers and the requested imbalance), solves it with the convex solver and
optionally with the big-M branch-and-bound and the brute-force oracle, and
records runtimes and a verdict. Trials are seeded individually from
``(seed, n, trial)`` so results do not depend on scheduling or thread
count.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import convex_solver, oracle
from .best_response import best_response_vec
from .errors import MarketError
from .market_model import (
    DEFAULT_DT_HOURS,
    DEFAULT_PRICES,
    HP_TYPES,
    MCHP_TYPES,
    Direction,
    MarketInstance,
    PriceBook,
    Prosumer,
    derive_b,
    free_flexibility,
)
from .mpec_mip import build_big_m_mip, choose_big_m, export_lp, solve_mip_bb

log = logging.getLogger(__name__)

__all__ = [
    "BenchmarkReport",
    "Scenario",
    "ScenarioConfig",
    "TrialRecord",
    "Verdict",
    "compare_solutions",
    "generate_scenarios",
    "run_benchmark",
]

SOLVERS = ("convex", "mip", "oracle")
TRIAL_COLUMNS = [
    "trial_id", "n", "seed", "convex_runtime_s", "mip_runtime_s",
    "convex_obj", "mip_obj", "verdict", "oracle_obj", "oracle_verdict",
]
FEAS_TOL = 1e-9


class Verdict(str, enum.Enum):
    MATCH = "match"
    OTHER_WORSE = "other_worse"
    OTHER_INFEASIBLE = "other_infeasible"
    # only possible if the convex solver were wrong
    OTHER_BETTER = "other_better"


@dataclass(frozen=True)
class ScenarioConfig:
    """Random-instance protocol.

    ``n`` may be a single size or a sequence of sizes. ``m_range = None``
    derives ``m`` from a uniformly drawn current device power, so ``m`` is
    uniform on ``[0, P_max * dt]``. ``f_policy = "fraction"`` draws ``f``
    as a uniform fraction (``f_range``) of the total flexibility;
    ``"absolute"`` draws it directly from ``f_range`` in kWh.
    """

    n: object = 10
    trials: int = 1000
    seed: int = 0
    a_range: Tuple[float, float] = (0.05, 2.0)
    m_range: Optional[Tuple[float, float]] = None
    f_policy: str = "fraction"
    f_range: Tuple[float, float] = (0.25, 1.0)
    device_mix: float = 0.5
    direction: Direction = Direction.DOWN
    prices: PriceBook = DEFAULT_PRICES
    dt_hours: float = DEFAULT_DT_HOURS
    b_source: str = "table"
    cap_enabled: bool = True
    f_retries: int = 20
    big_m: Optional[float] = None
    mip_max_n: int = 2000
    mip_max_nodes: int = 200_000
    mip_time_limit: Optional[float] = 60.0
    oracle_max_n: int = 8
    tol: float = 1e-6

    def __post_init__(self):
        sizes = (self.n,) if isinstance(self.n, (int, np.integer)) else tuple(self.n)
        object.__setattr__(self, "n", sizes if len(sizes) > 1 else int(sizes[0]))
        object.__setattr__(self, "direction", Direction(self.direction))
        if isinstance(self.prices, dict):
            object.__setattr__(self, "prices", PriceBook(**self.prices))
        for name in ("a_range", "m_range", "f_range"):
            rng = getattr(self, name)
            if rng is None:
                continue
            lo, hi = (float(v) for v in rng)
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} must satisfy 0 <= low <= high")
            object.__setattr__(self, name, (lo, hi))
        if not self.a_range[0] > 0:
            raise ValueError("a_range must be strictly positive")
        if not 0.0 <= self.device_mix <= 1.0:
            raise ValueError("device_mix must lie in [0, 1]")
        if self.f_policy not in ("fraction", "absolute"):
            raise ValueError(f"unknown f_policy {self.f_policy!r}")
        if self.b_source not in ("table", "formula"):
            raise ValueError(f"unknown b_source {self.b_source!r}")
        if self.trials < 0 or any(s < 0 for s in self.sizes):
            raise ValueError("trials and sizes must be nonnegative")

    @property
    def sizes(self) -> Tuple[int, ...]:
        return (self.n,) if isinstance(self.n, int) else tuple(self.n)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["direction"] = self.direction.value
        d["prices"] = asdict(self.prices)
        for key in ("a_range", "m_range", "f_range", "n"):
            if isinstance(d[key], tuple):
                d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class Scenario:
    trial_id: int
    trial: int
    n: int
    seed: int
    instance: MarketInstance
    adjustments: Dict[str, int] = field(default_factory=dict)


def _trial_seed(seed: int, n: int, trial: int) -> int:
    ss = np.random.SeedSequence([seed, n, trial])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _device_catalogue(cfg: ScenarioConfig):
    """(template, b) for the heat pump and each micro-CHP type."""
    def b_of(entry):
        b = derive_b(entry.spec, cfg.direction, cfg.prices)
        if cfg.b_source == "table" and entry.table_direction is cfg.direction:
            return math.copysign(entry.table_abs_b, b)
        return b

    hp = HP_TYPES[1]
    chps = [MCHP_TYPES[k] for k in sorted(MCHP_TYPES)]
    return (hp.spec, b_of(hp)), [(e.spec, b_of(e)) for e in chps]


def make_scenario(cfg: ScenarioConfig, n: int, trial: int, trial_id: int) -> Scenario:
    """Draw one instance; see :class:`ScenarioConfig` for the protocol."""
    seed = _trial_seed(cfg.seed, n, trial)
    rng = np.random.default_rng(seed)
    (hp_spec, hp_b), chps = _device_catalogue(cfg)

    n_hp = int(math.floor(n * cfg.device_mix + 0.5))
    order = rng.permutation(n)
    is_hp = np.zeros(n, dtype=bool)
    is_hp[order[:n_hp]] = True
    chp_type = rng.integers(0, len(chps), size=n)

    specs = [hp_spec if is_hp[i] else chps[chp_type[i]][0] for i in range(n)]
    p_max = np.array([s.nominal_electric_power_kw for s in specs])
    b = np.where(is_hp, hp_b, np.array([c[1] for c in chps])[chp_type])
    a = rng.uniform(*cfg.a_range, size=n)
    if cfg.m_range is None:
        # uniform current power gives uniform headroom and uniform output alike
        m = rng.uniform(0.0, 1.0, size=n) * p_max * cfg.dt_hours
    else:
        m = rng.uniform(*cfg.m_range, size=n)

    adjustments = {}
    # free flexibility -b/a above m makes a prosumer infeasible: raise a
    bad = (b < 0) & (-b / a > m)
    stuck = bad & (m <= 0)
    if stuck.any():
        b = np.where(stuck, 0.0, b)
        adjustments["b_zeroed"] = int(stuck.sum())
    bad &= ~stuck
    if bad.any():
        a = np.where(bad, -b / np.where(bad, m, 1.0), a)
        while True:
            over = bad & (np.maximum(0.0, -b / a) > m)
            if not over.any():
                break
            a = np.where(over, np.nextafter(a, np.inf), a)
        adjustments["a_raised"] = int(bad.sum())

    free = free_flexibility(a, b) if n else 0.0
    total_m = float(m.sum())

    def draw_f():
        u = rng.uniform(*cfg.f_range)
        return u * total_m if cfg.f_policy == "fraction" else u

    f = draw_f()
    if cfg.cap_enabled and free > f:
        for k in range(cfg.f_retries):
            f = draw_f()
            if free <= f:
                adjustments["f_resampled"] = k + 1
                break
        else:
            adjustments["f_clamped"] = 1
            f = free
    if adjustments:
        log.debug("trial %d (n=%d): adjustments %s", trial_id, n, adjustments)

    prosumers = [
        Prosumer(float(a[i]), float(b[i]), float(m[i]), specs[i]) for i in range(n)
    ]
    inst = MarketInstance(prosumers, cfg.prices.p, float(f), cfg.cap_enabled)
    return Scenario(trial_id, trial, n, seed, inst, adjustments)


def _plan(cfg: ScenarioConfig):
    tid = 0
    for n in cfg.sizes:
        for trial in range(cfg.trials):
            yield tid, n, trial
            tid += 1


def generate_scenarios(cfg: ScenarioConfig) -> Iterator[Scenario]:
    """Deterministic stream of instances, size-major then trial order."""
    for tid, n, trial in _plan(cfg):
        yield make_scenario(cfg, n, trial, tid)


def _violation(x, y, inst: MarketInstance) -> float:
    if inst.n == 0:
        return 0.0
    terms = [
        np.max(-x),
        np.max(-y),
        np.max(y - inst.m),
        np.max(np.abs(y - best_response_vec(x, inst.a, inst.b, inst.m))),
    ]
    if inst.cap_enabled:
        terms.append(y.sum() - inst.f)
    return max(0.0, *(float(t) for t in terms))


def compare_solutions(convex, other, inst: MarketInstance, tol: float = 1e-6,
                      feas_tol: float = FEAS_TOL) -> Verdict:
    """Judge a competing solution against the convex optimum.

    ``other`` needs ``x``, ``y`` and ``objective`` attributes; ``None`` or a
    missing ``y`` counts as infeasible. Objectives are compared with a
    relative tolerance floored at 1.
    """
    if other is None or getattr(other, "y", None) is None:
        return Verdict.OTHER_INFEASIBLE
    x = np.asarray(other.x, dtype=float)
    y = np.asarray(other.y, dtype=float)
    if not np.isfinite(other.objective) or _violation(x, y, inst) > feas_tol:
        return Verdict.OTHER_INFEASIBLE
    gap = float(other.objective) - float(convex.objective)
    scale = tol * max(1.0, abs(float(convex.objective)))
    if gap > scale:
        return Verdict.OTHER_WORSE
    if gap < -scale:
        return Verdict.OTHER_BETTER
    return Verdict.MATCH


@dataclass
class TrialRecord:
    trial_id: int
    n: int
    seed: int
    convex_runtime_s: Optional[float] = None
    mip_runtime_s: Optional[float] = None
    convex_obj: Optional[float] = None
    mip_obj: Optional[float] = None
    verdict: str = ""
    oracle_obj: Optional[float] = None
    oracle_verdict: str = ""
    mip_status: str = ""


@dataclass
class AggregateRow:
    n: int
    trials: int
    convex_avg_s: float
    convex_max_s: float
    mip_avg_s: Optional[float] = None
    mip_max_s: Optional[float] = None
    mip_nonoptimal: Optional[int] = None
    oracle_mismatch: Optional[int] = None


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class BenchmarkReport:
    header: dict
    trials: List[TrialRecord]
    aggregates: List[AggregateRow]
    solvers: Tuple[str, ...]

    def header_line(self) -> str:
        return "# " + json.dumps(self.header, sort_keys=True) + "\n"

    def trial_csv(self) -> str:
        buf = io.StringIO()
        buf.write(self.header_line())
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRIAL_COLUMNS)
        for r in self.trials:
            w.writerow([_fmt(getattr(r, c)) for c in TRIAL_COLUMNS])
        return buf.getvalue()

    def aggregate_columns(self) -> List[str]:
        cols = ["n", "trials", "convex_avg_s", "convex_max_s"]
        if "mip" in self.solvers:
            cols += ["mip_avg_s", "mip_max_s", "mip_nonoptimal"]
        if "oracle" in self.solvers:
            cols += ["oracle_mismatch"]
        return cols

    def aggregate_csv(self) -> str:
        cols = self.aggregate_columns()
        buf = io.StringIO()
        buf.write(self.header_line())
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in self.aggregates:
            w.writerow([_fmt(getattr(row, c)) for c in cols])
        return buf.getvalue()

    def write(self, out_dir) -> Tuple[str, str]:
        os.makedirs(out_dir, exist_ok=True)
        paths = (os.path.join(out_dir, "trials.csv"), os.path.join(out_dir, "aggregate.csv"))
        for path, text in zip(paths, (self.trial_csv(), self.aggregate_csv())):
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return paths


def default_threads() -> int:
    raw = os.environ.get("FLEXMARKET_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _run_trial(cfg, solvers, timings, export_dir, tid, n, trial) -> TrialRecord:
    sc = make_scenario(cfg, n, trial, tid)
    inst = sc.instance
    rec = TrialRecord(tid, n, sc.seed)

    t0 = time.perf_counter()
    try:
        alloc = convex_solver.solve(inst)
    except MarketError as exc:
        rec.verdict = f"convex_error:{type(exc).__name__}"
        return rec
    if timings:
        rec.convex_runtime_s = time.perf_counter() - t0
    rec.convex_obj = alloc.objective

    if "mip" in solvers:
        big_m = cfg.big_m if cfg.big_m is not None else choose_big_m(inst)
        model = build_big_m_mip(inst, big_m, name=f"instance_{tid}")
        if export_dir is not None:
            with open(os.path.join(export_dir, f"instance_{tid}.lp"), "w", encoding="utf-8") as fh:
                fh.write(export_lp(model))
        if n <= cfg.mip_max_n:
            t0 = time.perf_counter()
            sol = solve_mip_bb(model, cfg.mip_max_nodes, cfg.mip_time_limit)
            if timings:
                rec.mip_runtime_s = time.perf_counter() - t0
            rec.mip_status = sol.status
            rec.mip_obj = sol.objective if sol.has_incumbent else None
            rec.verdict = compare_solutions(alloc, sol, inst, cfg.tol).value
        else:
            rec.verdict = "mip_skipped"

    if "oracle" in solvers and n <= cfg.oracle_max_n:
        try:
            cand = oracle.brute_force_optimum(inst)
        except MarketError:
            cand = None
        rec.oracle_obj = cand.objective if cand is not None else None
        rec.oracle_verdict = compare_solutions(alloc, cand, inst, 1e-8).value
    return rec


def _aggregate(n: int, recs: Sequence[TrialRecord], solvers) -> AggregateRow:
    conv = [r.convex_runtime_s for r in recs if r.convex_runtime_s is not None]
    row = AggregateRow(
        n,
        len(recs),
        float(np.mean(conv)) if conv else None,
        float(np.max(conv)) if conv else None,
    )
    if "mip" in solvers:
        mip = [r.mip_runtime_s for r in recs if r.mip_runtime_s is not None]
        row.mip_avg_s = float(np.mean(mip)) if mip else None
        row.mip_max_s = float(np.max(mip)) if mip else None
        # left empty when every trial of this size skipped the MIP
        if any(r.mip_status for r in recs):
            row.mip_nonoptimal = sum(
                r.verdict in (Verdict.OTHER_WORSE.value, Verdict.OTHER_INFEASIBLE.value) for r in recs
            )
    if "oracle" in solvers and any(r.oracle_verdict for r in recs):
        row.oracle_mismatch = sum(
            r.oracle_verdict not in ("", Verdict.MATCH.value) for r in recs
        )
    return row


def run_benchmark(
    cfg: ScenarioConfig,
    solvers: Sequence[str] = ("convex",),
    threads: Optional[int] = None,
    timings: bool = True,
    export_dir=None,
) -> BenchmarkReport:
    """Run every trial of ``cfg`` and aggregate per size.

    Solver failures become per-trial verdicts; the sweep never aborts on
    them. With ``timings=False`` runtime columns are left empty so that the
    CSV output is a pure function of the configuration.
    """
    solvers = tuple(dict.fromkeys(("convex",) + tuple(solvers)))
    unknown = [s for s in solvers if s not in SOLVERS]
    if unknown:
        raise ValueError(f"unknown solver(s): {', '.join(unknown)}")
    threads = threads or default_threads()
    if export_dir is not None:
        os.makedirs(export_dir, exist_ok=True)

    plan = list(_plan(cfg))

    def work(item):
        return _run_trial(cfg, solvers, timings, export_dir, *item)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(work, plan))
    else:
        records = [work(item) for item in plan]

    aggregates = [
        _aggregate(n, [r for r in records if r.n == n], solvers) for n in cfg.sizes
    ]
    header = {
        "config": cfg.to_dict(),
        "solvers": list(solvers),
        "timings": timings,
        "hardware": f"{platform.machine()} {platform.processor() or platform.system()}".strip(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    return BenchmarkReport(header, records, aggregates, solvers)
