"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N [PASS|FAIL] ...`` line, which is
also repeated in the terminal summary.
"""

import time
from pathlib import Path

import numpy as np

from flexmarket.best_response import best_response_vec
from flexmarket.bench_harness import ScenarioConfig, Verdict, compare_solutions, generate_scenarios, run_benchmark
from flexmarket.convex_solver import solve, verify_kkt
from flexmarket.lp_format import export_lp, parse_lp
from flexmarket.market_model import MarketInstance
from flexmarket.mpec_mip import build_big_m_mip, choose_big_m, solve_mip_bb
from flexmarket.oracle import brute_force_optimum, grid_search_bilevel

from instances import EXAMPLE_ONE, random_instance

DATA = Path(__file__).parent / "data"


def rel_gap(u, v):
    return abs(u - v) / max(1.0, abs(u), abs(v))


def test_certification_against_brute_force(criterion):
    rng = np.random.default_rng(20240101)
    start = time.perf_counter()
    mismatches, worst = [], 0.0
    for n in range(1, 7):
        for trial in range(1000):
            inst = random_instance(rng, n, cap_prob=1.0)
            gap = rel_gap(solve(inst).objective, brute_force_optimum(inst).objective)
            worst = max(worst, gap)
            if gap > 1e-8:
                mismatches.append((n, trial, gap))
    elapsed = time.perf_counter() - start
    ok = not mismatches and elapsed < 120.0
    assert criterion(
        1, "convex optimum equals exhaustive piece enumeration",
        ok, f"6000 instances, {len(mismatches)} mismatches, worst rel gap {worst:.2e}, {elapsed:.1f} s",
    ), mismatches[:5]


def test_example_one_replication(criterion):
    alloc = solve(EXAMPLE_ONE)
    grid = grid_search_bilevel(EXAMPLE_ONE, 401).objective
    ok = (
        alloc.y.tolist() == [4.0, 4.0]
        and alloc.x.tolist() == [6.0, 6.0]
        and alloc.objective == 268.0
        and brute_force_optimum(EXAMPLE_ONE).objective == 268.0
        and 268.0 <= grid <= 268.5
    )
    assert criterion(
        2, "two-prosumer example", ok,
        f"y={alloc.y.tolist()} x={alloc.x.tolist()} objective={alloc.objective} grid(401)={grid:.6f}",
    )


def _fixed_point_instances():
    rng = np.random.default_rng(7)
    for n in (0, 1, 2, 3, 5, 8, 20, 100, 1000):
        for _ in range(200 if n <= 100 else 20):
            yield random_instance(rng, n)
    cfg = ScenarioConfig(n=[1, 5, 10, 100, 1000], trials=100, seed=3)
    for sc in generate_scenarios(cfg):
        yield sc.instance
    for direction in ("up", "down"):
        for sc in generate_scenarios(ScenarioConfig(n=50, trials=100, seed=5, direction=direction)):
            yield sc.instance


def test_fixed_point_suite(criterion):
    count, failures, worst = 0, [], 0.0
    for inst in _fixed_point_instances():
        alloc = solve(inst)
        rep = verify_kkt(alloc, inst)
        fixed = np.array_equal(best_response_vec(alloc.x, inst.a, inst.b, inst.m), alloc.y)
        worst = max(worst, rep.residual)
        if not fixed or rep.residual > 1e-9:
            failures.append((inst.n, fixed, rep.residual))
        count += 1
    assert criterion(
        3, "prices reproduce allocation exactly, KKT <= 1e-9",
        not failures, f"{count} instances, {len(failures)} failures, worst KKT residual {worst:.2e}",
    ), failures[:5]


def _time_solve(inst, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        solve(inst)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def test_scaling(criterion):
    sizes = [10, 100, 1000, 10000, 30000]
    runtimes = []
    for n in sizes:
        inst = next(generate_scenarios(ScenarioConfig(n=n, trials=1, seed=11)))
        runtimes.append(_time_solve(inst.instance))
    single = next(generate_scenarios(ScenarioConfig(n=30000, trials=1, seed=12))).instance
    t0 = time.perf_counter()
    solve(single)
    once = time.perf_counter() - t0
    slope = float(np.polyfit(np.log(sizes), np.log(runtimes), 1)[0])
    ok = once < 1.0 and slope <= 1.3
    detail = ", ".join(f"n={n}: {t * 1e3:.2f} ms" for n, t in zip(sizes, runtimes))
    assert criterion(
        4, "n=30000 under 1 s, log-log slope <= 1.3", ok,
        f"single n=30000 solve {once:.3f} s, slope {slope:.2f} ({detail})",
    )


def test_mip_agreement_and_failure_modes(criterion):
    rng = np.random.default_rng(99)
    generic = [random_instance(rng, 1 + k % 10) for k in range(1000)]
    cfg = ScenarioConfig(n=list(range(1, 11)), trials=100, seed=17)
    protocol = [sc.instance for sc in generate_scenarios(cfg)]

    def agreement(instances):
        return sum(
            compare_solutions(solve(inst), solve_mip_bb(build_big_m_mip(inst, choose_big_m(inst))), inst)
            is Verdict.MATCH
            for inst in instances
        )

    match_generic = agreement(generic)
    match_protocol = agreement(protocol)

    verdicts = {}
    tested = 0
    for inst in generic:
        alloc = solve(inst)
        top = float(alloc.y.max()) if inst.n else 0.0
        if top <= 0:
            continue
        tested += 1
        sol = solve_mip_bb(build_big_m_mip(inst, 0.5 * top))
        v = compare_solutions(alloc, sol, inst)
        verdicts[v.value] = verdicts.get(v.value, 0) + 1
    bad_m_ok = set(verdicts) <= {Verdict.OTHER_WORSE.value, Verdict.OTHER_INFEASIBLE.value}

    ok = match_generic >= 999 and match_protocol >= 999 and bad_m_ok
    assert criterion(
        5, "MIP agrees with heuristic M, fails with inadequate M", ok,
        f"match {match_generic}/1000 generic, {match_protocol}/1000 protocol; "
        f"M = max(y*)/2 on {tested} trials -> {dict(sorted(verdicts.items()))}",
    )


def test_benchmark_determinism(criterion):
    cfg = ScenarioConfig(n=[1, 5, 10, 50], trials=50, seed=2024)
    solvers = ("mip", "oracle")
    outputs = [run_benchmark(cfg, solvers, threads=t, timings=False).trial_csv() for t in (1, 1, 2, 4)]
    ok = len(set(outputs)) == 1
    assert criterion(
        6, "byte-identical trial CSV across runs and thread counts", ok,
        f"{len(outputs)} runs (threads 1, 1, 2, 4), {len(set(outputs))} distinct outputs, "
        f"{len(outputs[0])} bytes",
    )


def test_exporter_roundtrip(criterion):
    rng = np.random.default_rng(5)
    failures = 0
    for k in range(100):
        inst = random_instance(rng, 1 + k % 15)
        model = build_big_m_mip(inst, float(rng.uniform(1.0, 1e3)), name=f"instance_{k}")
        text = export_lp(model)
        back = parse_lp(text)
        failures += (back != model) or (export_lp(back) != text)
    toy = MarketInstance.from_arrays([1], [-1], [2], p=1, f=1)
    golden = export_lp(build_big_m_mip(toy, choose_big_m(toy), name="toy_n1"))
    golden_ok = golden == (DATA / "toy_n1.lp").read_text() and golden == export_lp(
        build_big_m_mip(toy, choose_big_m(toy), name="toy_n1")
    )
    ok = failures == 0 and golden_ok
    assert criterion(
        7, "LP export round-trip and golden file", ok,
        f"{100 - failures}/100 coefficient-identical round-trips, golden file "
        f"{'matches' if golden_ok else 'differs'}",
    )


def test_monotonicity_suite(criterion):
    rng = np.random.default_rng(8)
    price_violations, cap_violations = 0, 0
    for _ in range(1000):
        inst = random_instance(rng, int(rng.integers(1, 30)))
        p_lo, p_hi = np.sort(rng.uniform(0.0, 15.0, 2))
        y_lo = solve(inst.replace(p=float(p_lo))).y.sum()
        y_hi = solve(inst.replace(p=float(p_hi))).y.sum()
        price_violations += y_hi < y_lo - 1e-12 * max(1.0, y_lo)
    for _ in range(1000):
        inst = random_instance(rng, int(rng.integers(1, 30)), cap_prob=1.0)
        capped = solve(inst).objective
        free = solve(inst.replace(cap_enabled=False)).objective
        cap_violations += free > capped + 1e-12 * max(1.0, abs(capped))
    ok = price_violations == 0 and cap_violations == 0
    assert criterion(
        8, "flexibility monotone in p, cap never helps", ok,
        f"{price_violations}/1000 price-pair violations, {cap_violations}/1000 cap violations",
    )
